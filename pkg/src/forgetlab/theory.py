"""Closed-form expected forgetting under random block rotations.

Exact values are rational functions of ``(p, d, m)`` and are evaluated in
:class:`fractions.Fraction` arithmetic.  The polynomials live in
``data/closed_forms.ini`` and are compiled once on first use.

Notation: ``p`` ambient dimension, ``d`` rank of the data matrix, ``m`` size
of the rotated block; ``alpha = m / p`` and ``beta = 1 - d / p``.
"""

import ast
import configparser
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
import operator

_FORMS_FILE = "closed_forms.ini"
_NAMES = ("p", "d", "m")


@dataclass(frozen=True)
class RegimeParams:
    """Validated ``(p, d, m)`` with ``p >= 4``, ``1 <= d <= p``, ``2 <= m <= p``."""

    p: int
    d: int
    m: int

    def __post_init__(self):
        for name in _NAMES:
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ValueError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        p, d, m = self.p, self.d, self.m
        if p < 4:
            raise ValueError(f"p must be at least 4, got {p}")
        if not 1 <= d <= p:
            raise ValueError(f"d must satisfy 1 <= d <= p, got d={d}, p={p}")
        if not 2 <= m <= p:
            raise ValueError(f"m must satisfy 2 <= m <= p, got m={m}, p={p}")

    @property
    def alpha(self):
        return Fraction(self.m, self.p)

    @property
    def beta(self):
        return 1 - Fraction(self.d, self.p)


def _params(p, d=None, m=None):
    if isinstance(p, RegimeParams):
        return p
    return RegimeParams(p, d, m)


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}


def _compile(node):
    """Turn an expression AST into a function of an ``env`` dict.

    Only integers, the names p/d/m, + - * /, unary minus and non-negative
    integer powers are accepted.
    """
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and type(node.value) is int:
        c = Fraction(node.value)
        return lambda env: c
    if isinstance(node, ast.Name) and node.id in _NAMES:
        name = node.id
        return lambda env: env[name]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        f = _compile(node.operand)
        if isinstance(node.op, ast.USub):
            return lambda env: -f(env)
        return f
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            exp = node.right
            if not (isinstance(exp, ast.Constant) and type(exp.value) is int
                    and exp.value >= 0):
                raise ValueError("only non-negative integer powers allowed")
            f, k = _compile(node.left), exp.value
            return lambda env: f(env) ** k
        op = _BINOPS.get(type(node.op))
        if op is not None:
            f, g = _compile(node.left), _compile(node.right)
            return lambda env: op(f(env), g(env))
    raise ValueError(f"unsupported syntax: {ast.dump(node)}")


def compile_expression(text):
    """Compile a polynomial/rational expression in p, d, m."""
    flat = " ".join(text.split())
    return _compile(ast.parse(flat, mode="eval"))


@lru_cache(maxsize=None)
def _forms():
    parser = configparser.ConfigParser()
    text = resources.files(__package__).joinpath("data", _FORMS_FILE).read_text()
    parser.read_string(text)
    return {name: compile_expression(parser[name]["value"])
            for name in parser.sections()}


def closed_form(name, p, d=None, m=None):
    """Evaluate the stored closed form ``name`` exactly."""
    prm = _params(p, d, m)
    env = {k: Fraction(getattr(prm, k)) for k in _NAMES}
    return _forms()[name](env)


def closed_form_names():
    return sorted(_forms())


def exact_worst_case(p, d=None, m=None):
    """Exact normalized expected forgetting for a worst-case data matrix.

    Accepts either a :class:`RegimeParams` or the three integers.

    Returns
    -------
    Fraction
    """
    return closed_form("worst_case", p, d, m)


def lemma_diag(p, d=None, m=None):
    """``E[(e_i^T O^T S (I - O) e_i)^2]`` for any ``i <= d``."""
    return closed_form("lemma_diag", p, d, m)


def lemma_offdiag(p, d=None, m=None):
    """``E[(e_i^T O^T S (I - O) e_j)^2]`` for any ``i != j``, both ``<= d``.

    Needs ``d >= 2``; with a single data direction there is no pair.
    """
    prm = _params(p, d, m)
    if prm.d < 2:
        raise ValueError(f"off-diagonal term needs d >= 2, got d={prm.d}")
    return closed_form("lemma_offdiag", prm)


def assembled_worst_case(p, d=None, m=None):
    """Worst case rebuilt from the lemmas: ``diag + (d - 1) * offdiag``."""
    prm = _params(p, d, m)
    if prm.d == 1:
        return lemma_diag(prm)
    return lemma_diag(prm) + (prm.d - 1) * lemma_offdiag(prm)


def _check_unit(name, v):
    if not 0 <= v <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {float(v)}")


def asymptotic_worst_case(alpha, beta, exact=False):
    """Large-``p`` limit of the worst case at ``m = alpha p``, ``d = (1-beta) p``.

    Inputs are converted to exact rationals first, so the result is the
    correctly rounded value of the limit polynomial; ``exact=True`` returns
    the :class:`Fraction` itself.
    """
    a, b = Fraction(alpha), Fraction(beta)
    _check_unit("alpha", a)
    _check_unit("beta", b)
    c1 = a**3 - 6 * a**2 + 11 * a - 8
    c2 = -5 * a**3 + 22 * a**2 - 30 * a + 12
    c3 = 5 * a**3 - 18 * a**2 + 20 * a - 6
    val = a * (2 + b * c1 + b**2 * c2 + b**3 * c3)
    return val if exact else float(val)


def extremal_overparam(alpha, exact=False):
    """Limit when the data rank is negligible (``beta = 1``): ``a^2 (1-a)^2``."""
    a = Fraction(alpha)
    _check_unit("alpha", a)
    val = a**2 * (1 - a) ** 2
    return val if exact else float(val)


def extremal_full_rank(alpha, exact=False):
    """Limit for full-rank data (``beta = 0``): ``2 alpha``."""
    a = Fraction(alpha)
    _check_unit("alpha", a)
    val = 2 * a
    return val if exact else float(val)


def extremal_full_rotation(beta, exact=False):
    """Limit when the whole space is rotated (``alpha = 1``)."""
    b = Fraction(beta)
    _check_unit("beta", b)
    val = 2 - 2 * b - b**2 + b**3
    return val if exact else float(val)
