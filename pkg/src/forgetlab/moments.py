"""Exact polynomial moments of Haar orthogonal matrices.

For an exponent matrix ``M`` with non-negative integer entries,

    <M> = E[ prod_{i,j} Q_ij ** M_ij ],   Q Haar on O(p),

where the rows and columns of ``M`` index distinct rows and columns of
``Q``.  Moments are computed by peeling off the last column of ``M``:
conditioning on that column of ``Q`` reduces ``<M>`` to moments with one
column fewer, and a single column is a uniform unit vector whose moments are
known in closed form.  Values are exact :class:`~fractions.Fraction` objects.
"""

from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from itertools import permutations, product
from math import comb, factorial, prod
import re
import threading

import numpy as np

from .rotation import sample_haar_batch, trial_rng
from .stats import summarize_sums

DEGREE_BUDGET = 16
# columns permuted exhaustively when canonicalizing; beyond this a cheaper
# sort-based form is used and the memo simply hits less often
_MAX_EXHAUSTIVE = 7
_HALF = Fraction(1, 2)


class DegreeBudgetError(ValueError):
    """Total degree of the monomial exceeds :data:`DEGREE_BUDGET`."""


class MatrixParseError(ValueError):
    """Malformed matrix text; ``offset`` is the position of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


def _as_matrix(m):
    rows = tuple(tuple(int(v) for v in row) for row in m)
    if rows and len({len(r) for r in rows}) != 1:
        raise ValueError("rows of the exponent matrix differ in length")
    if any(v < 0 for r in rows for v in r):
        raise ValueError("exponents must be non-negative")
    return rows


def parse_power_matrix(text):
    """Parse ``"1,0;4,6"`` (rows split by ';', entries by ',')."""
    rows = []
    pos = 0
    for row_text in text.split(";"):
        row = []
        for tok in row_text.split(","):
            stripped = tok.strip()
            if not re.fullmatch(r"\d+", stripped):
                lead = len(tok) - len(tok.lstrip())
                what = "empty entry" if not stripped else f"bad entry {stripped!r}"
                raise MatrixParseError(what, pos + lead)
            row.append(int(stripped))
            pos += len(tok) + 1
        if rows and len(row) != len(rows[0]):
            raise MatrixParseError("row length differs from the first row",
                                   pos - len(row_text) - 1)
        rows.append(tuple(row))
    return tuple(rows)


def format_power_matrix(m):
    return ";".join(",".join(str(v) for v in row) for row in m)


def row_sums(m):
    return tuple(sum(r) for r in m)


def col_sums(m):
    return tuple(sum(c) for c in zip(*m)) if m else ()


def is_odd_vanishing(m):
    """True when some row or column sum is odd, which forces ``<M> = 0``.

    Flipping the sign of one row (or column) of Q preserves Haar measure and
    multiplies the monomial by ``(-1)**(that sum)``.
    """
    m = _as_matrix(m)
    return any(s % 2 for s in row_sums(m) + col_sums(m))


def _strip_zeros(m):
    rows = [r for r in m if any(r)]
    if not rows:
        return ()
    keep = [j for j, c in enumerate(zip(*rows)) if any(c)]
    return tuple(tuple(r[j] for j in keep) for r in rows)


def _transpose(m):
    return tuple(zip(*m))


def _best_over_columns(m):
    ncol = len(m[0])
    best = None
    for perm in permutations(range(ncol)):
        cand = tuple(sorted((tuple(r[j] for j in perm) for r in m), reverse=True))
        if best is None or cand > best:
            best = cand
    return best


def _sorted_form(m):
    for _ in range(4):
        m = tuple(sorted(m, reverse=True))
        m = _transpose(tuple(sorted(_transpose(m), reverse=True)))
    return m


def canonicalize(m):
    """Representative of ``M`` under row/column permutations and transpose.

    All three operations leave ``<M>`` unchanged.  Zero rows and columns are
    dropped.  Among the orientations whose column count equals
    ``min(rows, cols)``, the lexicographically largest matrix with rows in
    descending order is returned.
    """
    m = _strip_zeros(_as_matrix(m))
    if not m:
        return ()
    nr, nc = len(m), len(m[0])
    orients = []
    if nc <= nr:
        orients.append(m)
    if nr <= nc:
        orients.append(_transpose(m))
    if min(nr, nc) > _MAX_EXHAUSTIVE:
        return max(_sorted_form(o) for o in orients)
    return max(_best_over_columns(o) for o in orients)


def _poch(z, n):
    """Rising factorial ``z (z+1) ... (z+n-1)``."""
    out = Fraction(1)
    for k in range(n):
        out *= z + k
    return out


def one_vector_integral(exponents, p):
    """Moments of a uniform unit vector in ``R^p``.

    ``E[prod_i u_i ** k_i] = prod_i (1/2)_{k_i/2} / (p/2)_{K/2}`` with
    ``K = sum k_i``, and zero if any ``k_i`` is odd.
    """
    ks = [int(k) for k in exponents]
    if len(ks) > p:
        raise ValueError(f"{len(ks)} coordinates requested in dimension {p}")
    if any(k % 2 for k in ks):
        return Fraction(0)
    num = prod((_poch(_HALF, k // 2) for k in ks), start=Fraction(1))
    return num / _poch(Fraction(p, 2), sum(ks) // 2)


def _compositions(n, parts):
    if parts == 1:
        yield (n,)
        return
    for a in range(n + 1):
        for rest in _compositions(n - a, parts - 1):
            yield (a,) + rest


def _multinomial(parts):
    return factorial(sum(parts)) // prod(factorial(k) for k in parts)


_memo = {}
_memo_lock = threading.Lock()


def _moment(m, p):
    """``<M>`` for a canonical, non-empty ``M`` without odd row/col sums."""
    key = (m, p)
    with _memo_lock:
        hit = _memo.get(key)
    if hit is not None:
        return hit

    ncol = len(m[0])
    if ncol == 1:
        value = one_vector_integral([r[0] for r in m], p)
    else:
        last = [r[-1] for r in m]
        head = [r[:-1] for r in m]
        mbar = sum(last)
        total = Fraction(0)
        # kappa_i: how much of the last-column power of row i is paired with
        # the radial part; the rest spreads over the remaining columns
        for kappa in product(*(range(0, c + 1, 2) for c in last)):
            coef = prod(comb(c, k) for c, k in zip(last, kappa))
            coef *= prod((_poch(_HALF, k // 2) for k in kappa), start=Fraction(1))
            if (mbar - sum(kappa)) // 2 % 2:
                coef = -coef
            rest = [c - k for c, k in zip(last, kappa)]
            for split in product(*(_compositions(r, ncol - 1) for r in rest)):
                sums = [sum(col) for col in zip(*split)]
                if any(s % 2 for s in sums):
                    continue
                weight = prod(_multinomial(s) for s in split)
                weight *= prod((_poch(_HALF, s // 2) for s in sums),
                               start=Fraction(1))
                reduced = tuple(
                    tuple(a + b for a, b in zip(h, s)) for h, s in zip(head, split))
                total += coef * weight * monomial_expectation(reduced, p)
        value = total / _poch(Fraction(p - ncol + 1, 2), mbar // 2)

    with _memo_lock:
        _memo[key] = value
    return value


def monomial_expectation(m, p):
    """Exact ``<M>`` for ``Q`` Haar on ``O(p)``.

    Parameters
    ----------
    m : sequence of sequences of int
        Exponent matrix; row ``i``, column ``j`` is the power of ``Q_ij``.
    p : int
        Matrix size. ``M`` may not have more than ``p`` rows or columns.

    Returns
    -------
    Fraction

    Raises
    ------
    DegreeBudgetError
        If the total degree exceeds :data:`DEGREE_BUDGET` and the parity
        rule does not already give zero.
    """
    m = _as_matrix(m)
    p = int(p)
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    if m and (len(m) > p or len(m[0]) > p):
        raise ValueError(f"matrix of shape {len(m)}x{len(m[0])} does not fit O({p})")
    # parity settles any degree for free, so it goes before the budget check
    if is_odd_vanishing(m):
        return Fraction(0)
    total = sum(map(sum, m))
    if total > DEGREE_BUDGET:
        raise DegreeBudgetError(
            f"total degree {total} exceeds the budget of {DEGREE_BUDGET}")
    c = canonicalize(m)
    if not c:
        return Fraction(1)
    return _moment(c, p)


def clear_memo():
    with _memo_lock:
        _memo.clear()


def squared_norm_moment(p, m, n):
    """``E[||u_a||^(2n)]`` for the first ``m`` coordinates of a unit vector.

    ``||u_a||^2`` is Beta(m/2, (p-m)/2), so the moment is
    ``prod_{r<n} (m + 2r) / (p + 2r)``.
    """
    if not 0 <= m <= p or n < 0:
        raise ValueError(f"need 0 <= m <= p and n >= 0, got p={p} m={m} n={n}")
    return prod((Fraction(m + 2 * r, p + 2 * r) for r in range(n)),
                start=Fraction(1))


@dataclass(frozen=True)
class GoldenMoment:
    """One tabulated moment: ``<matrix> = numerator(p) / prod(p + c)``."""

    matrix: tuple
    numerator: tuple
    offsets: tuple

    def value(self, p):
        num = 0
        for c in self.numerator:
            num = num * p + c
        den = prod(p + c for c in self.offsets)
        return Fraction(num, den)


def load_golden_table():
    """Tabulated closed forms shipped in ``data/golden_moments.txt``."""
    text = resources.files(__package__).joinpath(
        "data", "golden_moments.txt").read_text()
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        mat, num, offs = (part.strip() for part in line.split("|"))
        out.append(GoldenMoment(
            matrix=parse_power_matrix(mat),
            numerator=tuple(int(v) for v in num.split()),
            offsets=tuple(int(v) for v in offs.split()),
        ))
    return out


def _monomial_samples(q, m):
    vals = np.ones(q.shape[0])
    for i, row in enumerate(m):
        for j, k in enumerate(row):
            if k:
                vals = vals * q[:, i, j] ** k
    return vals


def mc_monomial_expectations(matrices, p, trials, seed, batch=20_000):
    """Monte Carlo estimates of several ``<M>`` from shared Haar samples.

    Returns a list of :class:`~forgetlab.stats.McEstimate`, one per matrix.
    """
    mats = [_as_matrix(m) for m in matrices]
    sums = np.zeros(len(mats))
    sq = np.zeros(len(mats))
    for b, start in enumerate(range(0, trials, batch)):
        count = min(batch, trials - start)
        q = sample_haar_batch(p, count, trial_rng(seed, b))
        for idx, m in enumerate(mats):
            v = _monomial_samples(q, m)
            sums[idx] += v.sum()
            sq[idx] += (v * v).sum()
    return [summarize_sums(s, s2, trials, seed) for s, s2 in zip(sums, sq)]


def mc_monomial_expectation(m, p, trials, seed):
    """Monte Carlo estimate of ``<M>`` over ``trials`` Haar draws."""
    return mc_monomial_expectations([m], p, trials, seed)[0]


_FACTOR = re.compile(r"([uvzx])\.(QmT|Qm|Ia|Ib|I)\.([uvzx])(?:\^(\d+))?")
_VECTORS = "uvzx"


def parse_bilinear(expr):
    """Parse ``"u.Ia.u * u.Ib.v^2"`` into ``[(left, block, right), ...]``.

    Vectors are ``u, v, z, x``.  Blocks, with ``Qm`` the m x m rotation:
    ``Qm`` = blockdiag(Qm, 0), ``QmT`` its transpose, ``Ia`` =
    blockdiag(I_m, 0), ``Ib`` = blockdiag(0, I_{p-m}), ``I`` the identity.
    ``^k`` repeats a factor.
    """
    factors = []
    for tok in expr.split("*"):
        tok = tok.strip()
        hit = _FACTOR.fullmatch(tok)
        if not hit:
            raise ValueError(f"cannot parse factor {tok!r}")
        left, block, right, power = hit.groups()
        factors.extend([(left, block, right)] * int(power or 1))
    if not factors:
        raise ValueError("empty expression")
    return factors


def mc_bilinear_expectation(expr, p, m, trials, seed, batch=20_000):
    """Monte Carlo estimate of ``E[prod_k a_k^T A_k b_k]``.

    ``u, v, z, x`` are the first four rows of a Haar matrix on ``O(p)``
    (hence orthonormal) and ``Qm`` is an independent Haar matrix on ``O(m)``.
    See :func:`parse_bilinear` for the expression syntax.
    """
    factors = parse_bilinear(expr)
    if not 1 <= m <= p or p < 4:
        raise ValueError(f"need p >= 4 and 1 <= m <= p, got p={p} m={m}")
    total = 0.0
    total_sq = 0.0
    for b, start in enumerate(range(0, trials, batch)):
        count = min(batch, trials - start)
        rng = trial_rng(seed, b)
        q = sample_haar_batch(p, count, rng)
        qm = sample_haar_batch(m, count, rng)
        vec = {name: q[:, k, :] for k, name in enumerate(_VECTORS)}
        vals = np.ones(count)
        for left, block, right in factors:
            a, c = vec[left], vec[right]
            if block == "I":
                f = np.sum(a * c, axis=1)
            elif block == "Ia":
                f = np.sum(a[:, :m] * c[:, :m], axis=1)
            elif block == "Ib":
                f = np.sum(a[:, m:] * c[:, m:], axis=1)
            else:
                mat = qm if block == "Qm" else np.swapaxes(qm, 1, 2)
                f = np.einsum("ni,nij,nj->n", a[:, :m], mat, c[:, :m])
            vals = vals * f
        total += vals.sum()
        total_sq += (vals * vals).sum()
    return summarize_sums(total, total_sq, trials, seed)
