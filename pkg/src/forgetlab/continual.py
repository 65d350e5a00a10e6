"""Two-task continual regression with a rotated second task.

Task 1 is ``Xw = y`` with ``y = X w*``.  Task 2 uses the same targets on the
rotated inputs ``XO``.  The learner fits task 1 from zero, then task 2 from
the task-1 solution; both fits are the limits of gradient descent, i.e.
minimum-distance projections.  Forgetting is the task-1 loss after task 2.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os

import numpy as np

from .rotation import (
    BlockRotation,
    make_block_rotation,
    sample_block_rotation_batch,
    trial_rng,
)
from .stats import McEstimate, summarize
from .solver import (
    DEFAULT_RANK_TOL_REL,
    gd_solve,
    min_norm_solve,
    projected_solve,
    pseudoinverse,
)

# trials per work unit in the batched estimators; changing it changes the
# random streams, so it is fixed rather than tied to the thread count
MC_BATCH = 2000


class DegenerateTeacherError(ValueError):
    """The teacher has no component in the row space of ``X``."""


class TrialFailedError(RuntimeError):
    """A Monte Carlo trial raised; ``index`` identifies it."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"trial {index} failed: {cause!r}")


@dataclass(frozen=True)
class ProblemInstance:
    """Data matrix, teacher and rotated block size for one experiment."""

    x: np.ndarray
    wstar: np.ndarray
    m: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        w = np.asarray(self.wstar, dtype=float)
        if x.ndim != 2 or w.shape != (x.shape[1],):
            raise ValueError(
                f"incompatible shapes: x {x.shape}, wstar {w.shape}")
        if not 0 <= self.m <= x.shape[1]:
            raise ValueError(f"m must lie in [0, {x.shape[1]}], got {self.m}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "wstar", w)

    @property
    def y(self):
        return self.x @ self.wstar

    @property
    def p(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class ContinualResult:
    w1: np.ndarray
    w2: np.ndarray
    forgetting: float
    normalized_forgetting: float


def normalization_factor(x, wstar, rank_tol_rel=DEFAULT_RANK_TOL_REL):
    """``s_max(X)**2 * ||X^+ X w*||**2``, the scale of worst-case forgetting."""
    x = np.asarray(x, dtype=float)
    wstar = np.asarray(wstar, dtype=float)
    s_max = np.linalg.norm(x, 2) if x.size else 0.0
    proj = pseudoinverse(x, rank_tol_rel) @ (x @ wstar)
    norm_proj = float(np.linalg.norm(proj))
    if s_max == 0.0 or norm_proj <= 1e-12 * max(np.linalg.norm(wstar), 1e-300):
        raise DegenerateTeacherError(
            "teacher is orthogonal to the row space of X; "
            "normalized forgetting is undefined")
    return float(s_max**2 * norm_proj**2)


def make_worst_case_x(n, p, d, rng, scale=1.0):
    """Rank-``d`` matrix with all non-zero singular values equal to ``scale``.

    Built as ``scale * U V^T`` with U and V the leading ``d`` columns of
    independent Haar matrices of size ``n`` and ``p``.
    """
    if not 1 <= d <= min(n, p):
        raise ValueError(f"need 1 <= d <= min(n, p), got d={d}, n={n}, p={p}")
    u = np.linalg.qr(rng.standard_normal((n, d)))[0]
    v = np.linalg.qr(rng.standard_normal((p, d)))[0]
    return scale * (u @ v.T)


def _forgetting(x, w2, y):
    return max(float(np.sum((x @ w2 - y) ** 2)), 0.0)


def run_two_task(inst, rot, solver="closed_form", gd_config=None):
    """Fit task 1 then the rotated task 2 and measure forgetting.

    Parameters
    ----------
    inst : ProblemInstance
    rot : BlockRotation or ndarray
        Rotation ``O`` applied to the inputs of task 2.
    solver : {"closed_form", "gd"}
        Projections in closed form, or by running gradient descent.

    Returns
    -------
    ContinualResult

    Raises
    ------
    DegenerateTeacherError
        If ``w*`` has no component in the row space of ``X``.
    """
    if isinstance(rot, BlockRotation):
        if rot.p != inst.p or rot.m != inst.m:
            raise ValueError(f"rotation (p={rot.p}, m={rot.m}) does not match "
                             f"instance (p={inst.p}, m={inst.m})")
        o = rot.composed
    else:
        o = np.asarray(rot, dtype=float)
        if o.shape != (inst.p, inst.p):
            raise ValueError(f"rotation has shape {o.shape}, expected "
                             f"({inst.p}, {inst.p})")
    norm = normalization_factor(inst.x, inst.wstar)
    x, y = inst.x, inst.y
    x2 = x @ o
    if solver == "closed_form":
        w1 = min_norm_solve(x, y)
        w2 = projected_solve(x2, y, w1)
    elif solver == "gd":
        w1 = gd_solve(x, y, np.zeros(inst.p), gd_config)
        w2 = gd_solve(x2, y, w1, gd_config)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    f = _forgetting(x, w2, y)
    return ContinualResult(w1=w1, w2=w2, forgetting=f,
                           normalized_forgetting=f / norm)


def forgetting_upper_bound(x, wstar, o):
    """``||X||^2 ||P O^T P (I - O) P w*||^2`` with ``P`` the row-space projector.

    Dominates the forgetting of every single draw of ``O``.
    """
    x = np.asarray(x, dtype=float)
    proj = pseudoinverse(x) @ x
    v = proj @ wstar
    v = proj @ (v - o @ v)
    v = proj @ (o.T @ v)
    return float(np.linalg.norm(x, 2) ** 2 * (v @ v))


def _resolve_threads(threads):
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"threads must be positive, got {threads}")
    return int(threads)


def forgetting_samples(inst, trials, seed, normalize=True, threads=None):
    """Forgetting of ``trials`` independent rotations, in trial order.

    Trial ``t`` draws its rotation from ``trial_rng(seed, t)``, so the
    returned array does not depend on ``threads``.
    """
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    x, y = inst.x, inst.y
    w1 = min_norm_solve(x, y)
    scale = normalization_factor(x, inst.wstar) if normalize else 1.0
    if inst.m == 0:
        # task 2 is task 1 again, so the learner stays at w1; report the
        # exact zero rather than the round-off residual of w1
        return np.zeros(trials)
    out = np.empty(trials)

    def run(t):
        try:
            rot = make_block_rotation(inst.p, inst.m, trial_rng(seed, t))
            w2 = projected_solve(x @ rot.composed, y, w1)
            out[t] = _forgetting(x, w2, y) / scale
        except Exception as exc:
            raise TrialFailedError(t, exc) from exc

    n_threads = _resolve_threads(threads)
    if n_threads == 1:
        for t in range(trials):
            run(t)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            # list() re-raises the first failure in trial order
            list(pool.map(run, range(trials)))
    return out


def mc_expected_forgetting(inst, trials, seed, normalize=True, threads=None):
    """Monte Carlo estimate of expected (normalized) forgetting.

    Returns
    -------
    McEstimate
    """
    if trials < 2:
        raise ValueError(f"need at least 2 trials, got {trials}")
    samples = forgetting_samples(inst, trials, seed, normalize, threads)
    return summarize(samples, seed)


def _batched(trials, seed, draw):
    """Run ``draw(rng, count)`` over fixed-size batches and concatenate."""
    parts = []
    for b, start in enumerate(range(0, trials, MC_BATCH)):
        count = min(MC_BATCH, trials - start)
        parts.append(draw(trial_rng(seed, b), count))
    return np.concatenate(parts)


def _check_indices(d, *idx):
    for i in idx:
        if not 1 <= i <= d:
            raise ValueError(f"index {i} outside 1..{d}")


def _coordinate_terms(o, d, i, js):
    """``e_i^T O^T S (I - O) e_j`` for each j, S keeping the first d coords.

    Indices are 1-based.  ``o`` is a stack (count, p, p).
    """
    oi = o[:, :d, i - 1]
    cols = []
    for j in js:
        v = -o[:, :d, j - 1]
        v[:, j - 1] += 1.0
        cols.append(np.sum(oi * v, axis=1))
    return cols


def mc_lemma_term(p, d, m, i, j, trials, seed):
    """Monte Carlo estimate of ``E[(e_i^T O^T S (I - O) e_j)^2]``.

    ``S = diag(1, ..., 1, 0, ..., 0)`` keeps the first ``d`` coordinates and
    ``1 <= i, j <= d`` are 1-based.
    """
    _check_indices(d, i, j)

    def draw(rng, count):
        o = sample_block_rotation_batch(p, m, count, rng)
        (a,) = _coordinate_terms(o, d, i, [j])
        return a * a

    return summarize(_batched(trials, seed, draw), seed)


def mc_cross_term(p, d, m, i, j, k, trials, seed):
    """Monte Carlo estimate of the cross moment

    ``E[(e_i^T O^T S (I-O) e_j) (e_i^T O^T S (I-O) e_k)]`` for ``j != k``.

    This expectation vanishes, which is what lets the expected forgetting
    split into diagonal and off-diagonal lemma terms.  Indices are 1-based.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    if j == k:
        raise ValueError("j and k must differ")
    _check_indices(d, i, j, k)

    def draw(rng, count):
        o = sample_block_rotation_batch(p, m, count, rng)
        a, b = _coordinate_terms(o, d, i, [j, k])
        return a * b

    return summarize(_batched(trials, seed, draw), seed)
