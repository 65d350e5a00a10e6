"""Average-case forgetting on synthetic Gaussian data.

Data model: a random ``d``-dimensional subspace ``S`` of ``R^p`` carries both
the teacher and the inputs.  The teacher ``w*`` is a uniform unit vector in
``S``; each input row is a standard Gaussian vector in ``S``; targets are
``y = X w* + noise``.  The two-task scheme then runs with a block rotation of
size ``m = round(alpha * p)`` and the fits are scored on fresh task-1 data.

Default sizes in :class:`AvgCaseConfig` are placeholders chosen to make the
runs quick, not reference settings.  Forgetting peaks inside ``(0, 1)`` only
when ``d`` is a small fraction of ``p`` (roughly ``d / p < 0.07`` in the
large-``p`` limit), hence ``p = 300`` for ``d = 10``.  With ``n = d`` any
target noise is strongly amplified by the second fit, so noise defaults to 0.
"""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import asdict, dataclass
import io

import numpy as np

from .rotation import apply_rotation, make_block_rotation, trial_rng
from .solver import min_norm_solve, projected_solve

ESTIMATORS = ("w1", "w2", "null")
METRICS = ("risk", "train_error")


@dataclass
class AvgCaseConfig:
    """Simulation settings (all defaults are placeholders).

    Attributes
    ----------
    p_list : sequence of int
        Ambient dimensions to sweep.
    d : int
        Dimension of the subspace holding inputs and teacher.
    n : int
        Training samples per task.
    noise_sd : float
        Standard deviation of the additive target noise.
    alphas : sequence of float
        Rotated fractions ``m / p`` to sweep.
    trials : int
        Independent draws of (data, rotation) per grid cell.
    seed : int
        Master seed; trial ``t`` of the cell ``(p, alpha)`` is seeded from it.
    test_factor : int
        Fresh test samples per training sample.
    """

    p_list: tuple = (12, 300)
    d: int = 10
    n: int = 10
    noise_sd: float = 0.0
    alphas: tuple = tuple(k / 10 for k in range(11))
    trials: int = 40
    seed: int = 42
    test_factor: int = 10

    def validate(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be positive")
        if any(p < self.d for p in self.p_list):
            raise ValueError(f"every p must be at least d={self.d}")
        if any(not 0 <= a <= 1 for a in self.alphas):
            raise ValueError("alphas must lie in [0, 1]")
        if self.trials < 2:
            raise ValueError("need at least 2 trials per cell")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")


@dataclass(frozen=True)
class CurveRow:
    p: int
    alpha: float
    estimator: str
    metric: str
    mean: float
    stderr: float


@dataclass
class CurveTable:
    rows: list

    def select(self, p, estimator, metric):
        """``(alphas, means)`` for one curve, in sweep order."""
        sel = [r for r in self.rows
               if r.p == p and r.estimator == estimator and r.metric == metric]
        return (np.array([r.alpha for r in sel]),
                np.array([r.mean for r in sel]))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["p", "alpha", "estimator", "metric", "mean", "stderr"])
        for r in self.rows:
            writer.writerow([r.p, repr(r.alpha), r.estimator, r.metric,
                             repr(r.mean), repr(r.stderr)])
        return buf.getvalue()

    def to_records(self):
        return [asdict(r) for r in self.rows]


def block_size(p, alpha):
    """Rotated block size ``round(alpha * p)``."""
    return int(round(alpha * p))


def _draw_task(rng, basis, wstar, n, noise_sd):
    z = rng.standard_normal((n, basis.shape[1]))
    x = z @ basis.T
    y = x @ wstar + noise_sd * rng.standard_normal(n)
    return x, y


def _mse(x, w, y):
    r = x @ w - y
    return float(r @ r) / len(y)


def simulate_trial(cfg, p, alpha, rng):
    """One draw of data and rotation; returns ``{(estimator, metric): value}``."""
    basis = np.linalg.qr(rng.standard_normal((p, cfg.d)))[0]
    g = rng.standard_normal(cfg.d)
    wstar = basis @ (g / np.linalg.norm(g))
    x, y = _draw_task(rng, basis, wstar, cfg.n, cfg.noise_sd)
    x_test, y_test = _draw_task(rng, basis, wstar, cfg.test_factor * cfg.n,
                                cfg.noise_sd)
    rot = make_block_rotation(p, block_size(p, alpha), rng)

    # noisy targets need not be realizable; the gradient descent limit is
    # then the least-squares projection, which the non-strict solvers return
    w1 = min_norm_solve(x, y, strict=False)
    w2 = projected_solve(apply_rotation(rot, x), y, w1, strict=False)
    fits = {"w1": w1, "w2": w2, "null": np.zeros(p)}
    out = {}
    for name, w in fits.items():
        out[(name, "risk")] = _mse(x_test, w, y_test)
        out[(name, "train_error")] = _mse(x, w, y)
    return out


def _cell_rng(seed, p, a_index, trial):
    # one stream per (p, alpha index, trial) so cells do not share noise
    return trial_rng(seed, (p, a_index, trial))


def simulate_average_case(cfg, threads=1):
    """Sweep ``p_list x alphas`` and tabulate mean and stderr of each metric.

    Returns
    -------
    CurveTable
        One row per ``(p, alpha, estimator, metric)``.
    """
    cfg.validate()
    cells = [(p, ai, float(a)) for p in cfg.p_list
             for ai, a in enumerate(cfg.alphas)]

    def run_cell(cell):
        p, ai, alpha = cell
        draws = [simulate_trial(cfg, p, alpha, _cell_rng(cfg.seed, p, ai, t))
                 for t in range(cfg.trials)]
        rows = []
        for est in ESTIMATORS:
            for metric in METRICS:
                v = np.array([dr[(est, metric)] for dr in draws])
                rows.append(CurveRow(p, alpha, est, metric, float(v.mean()),
                                     float(v.std(ddof=1) / np.sqrt(v.size))))
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]
    return CurveTable([r for rows in results for r in rows])


def forgetting_curve(table, p):
    """``(alphas, risk(w2) - risk(w1))`` for dimension ``p``."""
    alphas, r2 = table.select(p, "w2", "risk")
    _, r1 = table.select(p, "w1", "risk")
    return alphas, r2 - r1


def argmax_alpha(table, p):
    """The alpha at which forgetting in risk peaks."""
    alphas, gap = forgetting_curve(table, p)
    return float(alphas[int(np.argmax(gap))])
