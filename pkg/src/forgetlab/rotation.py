"""Haar-distributed orthogonal matrices and block rotations.

A block rotation of size ``m`` in ``R^p`` is

    O = Qp @ blockdiag(Qm, I_{p-m}) @ Qp.T

with ``Qp`` Haar on O(p) and ``Qm`` Haar on O(m), drawn independently.  It
rotates an m-dimensional random subspace and fixes its complement.
"""

from dataclasses import dataclass

import numpy as np


def trial_rng(seed, index):
    """Return the generator for trial ``index`` of a run with master ``seed``.

    ``index`` is an int or a tuple of ints (for nested sweeps).

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    trial ``index`` sees the same random numbers no matter how trials are
    scheduled across workers.
    """
    key = tuple(int(i) for i in index) if isinstance(index, tuple) else (int(index),)
    seq = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.default_rng(seq)


def _haar_from_gaussian(g):
    """QR of Gaussian matrices with the sign of diag(R) folded into Q.

    Works on a single (n, n) matrix or a stack of shape (..., n, n).
    """
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return q * signs[..., None, :]


def sample_haar(dim, rng):
    """Draw a Haar-distributed orthogonal matrix.

    Parameters
    ----------
    dim : int
        Matrix size, at least 1.
    rng : numpy.random.Generator
        Source of randomness.

    Returns
    -------
    ndarray, shape (dim, dim)
    """
    dim = int(dim)
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    return _haar_from_gaussian(rng.standard_normal((dim, dim)))


def sample_haar_batch(dim, count, rng):
    """Draw ``count`` independent Haar matrices as an array (count, dim, dim)."""
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    return _haar_from_gaussian(rng.standard_normal((count, dim, dim)))


@dataclass(frozen=True)
class BlockRotation:
    """A block rotation together with the factors that built it.

    Attributes
    ----------
    qp : ndarray (p, p)
        Change of basis. The rotated block spans its first ``m`` columns.
    qm : ndarray (m, m)
        Rotation applied inside the block; empty when ``m == 0``.
    composed : ndarray (p, p)
        ``Qp blockdiag(Qm, I) Qp^T``, filled in from the factors.
    """

    qp: np.ndarray
    qm: np.ndarray
    composed: np.ndarray = None

    def __post_init__(self):
        if self.composed is None:
            object.__setattr__(self, "composed",
                               compose_block_rotation(self.qp, self.qm))

    @property
    def p(self):
        return self.qp.shape[0]

    @property
    def m(self):
        return self.qm.shape[0]


def compose_block_rotation(qp, qm):
    """Form ``Qp blockdiag(Qm, I) Qp^T``.

    Uses ``I + Qa (Qm - I) Qa^T`` with ``Qa`` the first m columns of ``Qp``,
    which avoids building the p x p block matrix.
    """
    p = qp.shape[0]
    m = qm.shape[0]
    if m > p:
        raise ValueError(f"block size {m} exceeds dimension {p}")
    if m == 0:
        return np.eye(p)
    qa = qp[:, :m]
    return np.eye(p) + qa @ (qm - np.eye(m)) @ qa.T


def make_block_rotation(p, m, rng):
    """Sample a block rotation of an m-dimensional subspace of ``R^p``.

    ``m == 0`` returns the identity, ``m == 1`` a reflection or identity
    restricted to a random line (``Qm`` is +1 or -1).

    Returns
    -------
    BlockRotation
    """
    p, m = int(p), int(m)
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    if not 0 <= m <= p:
        raise ValueError(f"m must satisfy 0 <= m <= p, got m={m}, p={p}")
    qp = sample_haar(p, rng)
    qm = sample_haar(m, rng) if m else np.zeros((0, 0))
    return BlockRotation(qp=qp, qm=qm)


def apply_rotation(rot, x):
    """Rotated inputs ``x @ O`` for a data matrix with ``rot.p`` columns."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != rot.p:
        raise ValueError(f"x has shape {x.shape}, expected (n, {rot.p})")
    return x @ rot.composed


def sample_block_rotation_batch(p, m, count, rng):
    """Draw ``count`` block rotation matrices as an array (count, p, p)."""
    qp = sample_haar_batch(p, count, rng)
    eye = np.eye(p)
    if m == 0:
        return np.broadcast_to(eye, (count, p, p)).copy()
    qm = sample_haar_batch(m, count, rng)
    qa = qp[:, :, :m]
    delta = qm - np.eye(m)
    return eye + qa @ delta @ np.swapaxes(qa, -1, -2)


def orthogonality_error(q):
    """Largest entry of ``|Q^T Q - I|``."""
    if q.size == 0:
        return 0.0
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1]))))
