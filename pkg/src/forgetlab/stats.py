"""Monte Carlo summaries shared by the estimators."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class McEstimate:
    """Sample mean and its standard error over ``trials`` draws."""

    mean: float
    stderr: float
    trials: int
    seed: int

    def zscore(self, target):
        """Distance of ``target`` from the mean in standard errors."""
        gap = abs(self.mean - float(target))
        if self.stderr == 0:
            return 0.0 if gap == 0 else np.inf
        return gap / self.stderr


def summarize(samples, seed):
    """Mean and standard error of a sample; stderr is NaN for one sample."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n == 0:
        raise ValueError("no samples")
    stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else np.nan
    return McEstimate(float(np.mean(samples)), stderr, n, int(seed))


def summarize_sums(total, total_sq, n, seed):
    """Like :func:`summarize` but from running sums of values and squares."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return McEstimate(float(mean), float(np.sqrt(var / n)), int(n), int(seed))
