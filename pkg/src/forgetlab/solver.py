"""Least-squares solvers used by the two-task scheme.

All closed-form solvers go through one SVD-based pseudoinverse with a single
rank threshold, so the rank seen by every caller is consistent.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL_REL = 1e-12
DEFAULT_FEAS_TOL = 1e-8


class InfeasibleTaskError(ValueError):
    """Raised when ``Xw = y`` has no solution."""

    def __init__(self, residual, norm_y):
        self.residual = residual
        self.norm_y = norm_y
        super().__init__(
            f"system is not realizable: residual {residual:.3e} "
            f"for ||y|| = {norm_y:.3e}"
        )


class GdNotConvergedError(RuntimeError):
    """Raised when gradient descent hits its iteration cap.

    The last iterate and its residual are kept on the exception.
    """

    def __init__(self, iterate, residual, iterations):
        self.iterate = iterate
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"gradient descent did not converge in {iterations} iterations "
            f"(residual {residual:.3e})"
        )


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD truncated to the numerical rank."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank(self):
        return self.s.size


def _check_matrix(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("matrix has non-finite entries")
    return x


def rank_threshold(s, shape, rank_tol_rel=DEFAULT_RANK_TOL_REL):
    """Singular values at or below this are treated as zero."""
    if s.size == 0:
        return 0.0
    return rank_tol_rel * float(s[0]) * max(shape)


def svd_factors(x, rank_tol_rel=DEFAULT_RANK_TOL_REL):
    """Thin SVD of ``x`` keeping singular values above the rank threshold."""
    x = _check_matrix(x)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = s > rank_threshold(s, x.shape, rank_tol_rel)
    return SvdFactors(u=u[:, keep], s=s[keep], vt=vt[keep])


def pseudoinverse(x, rank_tol_rel=DEFAULT_RANK_TOL_REL):
    """Moore-Penrose pseudoinverse via truncated SVD.

    Parameters
    ----------
    x : array_like, shape (n, p)
    rank_tol_rel : float
        Singular values ``s_i <= rank_tol_rel * s_max * max(n, p)`` are
        dropped.

    Returns
    -------
    ndarray, shape (p, n)
    """
    f = svd_factors(x, rank_tol_rel)
    return (f.vt.T / f.s) @ f.u.T


def _check_rhs(x, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (x.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({x.shape[0]},)")
    if not np.all(np.isfinite(y)):
        raise ValueError("y has non-finite entries")
    return y


def _check_feasible(x, w, y, feas_tol):
    # relative to the size of both sides so rounding in Xw never trips it
    norm_y = float(np.linalg.norm(y))
    scale = norm_y + float(np.linalg.norm(x)) * float(np.linalg.norm(w))
    residual = float(np.linalg.norm(x @ w - y))
    if residual > feas_tol * scale:
        raise InfeasibleTaskError(residual, norm_y)


def min_norm_solve(x, y, rank_tol_rel=DEFAULT_RANK_TOL_REL,
                   feas_tol=DEFAULT_FEAS_TOL, strict=True):
    """Minimum-norm solution ``X^+ y`` of ``Xw = y``.

    With ``strict=True`` an :class:`InfeasibleTaskError` is raised when the
    residual exceeds ``feas_tol * (||y|| + ||X||_F ||w||)``.  With
    ``strict=False`` the minimum-norm least-squares solution is returned.
    """
    x = _check_matrix(x)
    y = _check_rhs(x, y)
    w = pseudoinverse(x, rank_tol_rel) @ y
    if strict:
        _check_feasible(x, w, y, feas_tol)
    return w


def projected_solve(x, y, w0, rank_tol_rel=DEFAULT_RANK_TOL_REL,
                    feas_tol=DEFAULT_FEAS_TOL, strict=True):
    """Solution of ``Xw = y`` closest to ``w0``.

    Returns ``X^+ y + (I - X^+ X) w0``, the point gradient descent from
    ``w0`` converges to.
    """
    x = _check_matrix(x)
    y = _check_rhs(x, y)
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (x.shape[1],):
        raise ValueError(f"w0 has shape {w0.shape}, expected ({x.shape[1]},)")
    pinv = pseudoinverse(x, rank_tol_rel)
    w = w0 + pinv @ (y - x @ w0)
    if strict:
        _check_feasible(x, w, y, feas_tol)
    return w


@dataclass
class GdConfig:
    """Settings for :func:`gd_solve`.

    ``step`` defaults to ``0.9 / s_max(X)**2``; the loss is ``||Xw - y||^2``
    so its gradient is ``2 X^T (Xw - y)`` and steps up to ``1 / s_max**2``
    are stable.  Iteration stops once ``||Xw - y|| <= residual_tol * ||y||``.
    """

    step: float = None
    residual_tol: float = 1e-10
    max_iters: int = 1_000_000


def gd_solve(x, y, w0, config=None):
    """Full-batch gradient descent on ``||Xw - y||^2`` started at ``w0``.

    Returns the final iterate. Raises :class:`GdNotConvergedError` carrying
    the last iterate if ``max_iters`` is reached. If ``w0`` already meets the
    tolerance it is returned unchanged.
    """
    cfg = config or GdConfig()
    x = _check_matrix(x)
    y = _check_rhs(x, y)
    w = np.array(w0, dtype=float)
    tol = cfg.residual_tol * float(np.linalg.norm(y))
    r = x @ w - y
    if np.linalg.norm(r) <= tol:
        return w
    step = cfg.step
    if step is None:
        s_max = np.linalg.norm(x, 2)
        step = 0.9 / s_max**2
    xt = x.T
    for _ in range(cfg.max_iters):
        w -= 2.0 * step * (xt @ r)
        r = x @ w - y
        if np.linalg.norm(r) <= tol:
            return w
    raise GdNotConvergedError(w, float(np.linalg.norm(r)), cfg.max_iters)


def sgd_solve(x, y, w0, batch_size, rng, step=None, epochs=100):
    """Minibatch SGD on ``||Xw - y||^2`` started at ``w0``.

    Each epoch visits every row once in a random order.  Like full-batch GD
    the iterates never leave ``w0 + rowspace(X)``.
    """
    x = _check_matrix(x)
    y = _check_rhs(x, y)
    n = x.shape[0]
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must be in [1, {n}], got {batch_size}")
    if step is None:
        # the largest squared row norm bounds the curvature of any minibatch
        step = 0.5 / (batch_size * np.max(np.sum(x * x, axis=1)))
    w = np.array(w0, dtype=float)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb = x[idx]
            w -= 2.0 * step * (xb.T @ (xb @ w - y[idx]))
    return w
