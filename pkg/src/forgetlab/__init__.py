"""Forgetting in two-task linear regression under random block rotations."""

__version__ = "0.1.0"
