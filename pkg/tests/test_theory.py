from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from forgetlab.continual import mc_lemma_term
from forgetlab.theory import (
    RegimeParams,
    asymptotic_worst_case,
    closed_form,
    closed_form_names,
    compile_expression,
    exact_worst_case,
    extremal_full_rank,
    extremal_full_rotation,
    extremal_overparam,
    lemma_diag,
    lemma_offdiag,
)

# Values from an independent symbolic evaluation (sympy) of the same closed
# forms, frozen here so a change to the data file or the evaluator shows up.
FROZEN = {
    (10, 4, 3): (F(43, 495), F(4, 165), F(31, 1485)),
    (4, 1, 2): (F(1, 8), F(1, 8), F(11, 120)),
    (12, 7, 5): (F(5749, 20592), F(461, 6864), F(2183, 61776)),
    (100, 99, 100): (F(4039, 2040), F(3367, 3400), F(103, 10200)),
    (100, 1, 50): (F(511, 8840), F(511, 8840), F(110182789, 42869712600)),
    (8, 2, 2): (F(4, 105), F(3, 140), F(1, 60)),
}


def small_grid():
    for p in range(4, 13):
        for d in range(1, p + 1):
            for m in range(2, p + 1):
                yield p, d, m


class TestRegimeParams:
    def test_derived_ratios(self):
        prm = RegimeParams(10, 4, 3)
        assert prm.alpha == F(3, 10) and prm.beta == F(3, 5)

    @pytest.mark.parametrize("p,d,m", [(3, 1, 2), (10, 0, 3), (10, 11, 3),
                                       (10, 4, 1), (10, 4, 11), (10, 4.5, 3)])
    def test_out_of_range(self, p, d, m):
        with pytest.raises(ValueError):
            RegimeParams(p, d, m)

    def test_accepts_params_object(self):
        prm = RegimeParams(10, 4, 3)
        assert exact_worst_case(prm) == exact_worst_case(10, 4, 3)


class TestExactValues:
    @pytest.mark.parametrize("pdm", sorted(FROZEN))
    def test_frozen(self, pdm):
        full, diag, off = FROZEN[pdm]
        assert exact_worst_case(*pdm) == full
        assert lemma_diag(*pdm) == diag
        if pdm[1] >= 2:
            assert lemma_offdiag(*pdm) == off

    def test_returns_fraction(self):
        assert isinstance(exact_worst_case(10, 4, 3), F)

    def test_rank_one_is_diagonal_term(self):
        for p in range(4, 15):
            for m in range(2, p + 1):
                assert exact_worst_case(p, 1, m) == lemma_diag(p, 1, m)

    def test_offdiag_from_difference(self):
        assert exact_worst_case(8, 2, 2) - lemma_diag(8, 2, 2) == lemma_offdiag(8, 2, 2)

    def test_offdiag_needs_two_directions(self):
        with pytest.raises(ValueError):
            lemma_offdiag(8, 1, 2)

    def test_nonnegative_on_grid(self):
        assert all(exact_worst_case(*t) >= 0 for t in small_grid())

    def test_interpolation_limit(self):
        p = 10**4
        assert abs(exact_worst_case(p, p, p // 2) - 1) <= F(10, p)


class TestTermDecompositions:
    def test_diag_three_terms(self):
        for t in small_grid():
            parts = [closed_form(f"lemma_diag.term{k}", *t) for k in (1, 2, 3)]
            assert lemma_diag(*t) == parts[0] - 2 * parts[1] + parts[2]

    def test_offdiag_three_terms(self):
        for p, d, m in small_grid():
            if d < 2:
                continue
            parts = [closed_form(f"lemma_offdiag.term{k}", p, d, m)
                     for k in (1, 2, 3)]
            assert lemma_offdiag(p, d, m) == parts[0] - parts[1] + parts[2]

    def test_all_forms_loaded(self):
        names = closed_form_names()
        assert {"worst_case", "lemma_diag", "lemma_offdiag"} <= set(names)
        assert len(names) == 9


class TestLemmaMonteCarlo:
    def test_diag(self):
        est = mc_lemma_term(10, 4, 3, 1, 1, 100_000, seed=11)
        assert est.zscore(lemma_diag(10, 4, 3)) <= 3

    def test_offdiag(self):
        est = mc_lemma_term(10, 4, 3, 1, 2, 100_000, seed=12)
        assert est.zscore(lemma_offdiag(10, 4, 3)) <= 3


class TestAsymptotic:
    def test_half_rotation_tiny_rank(self):
        assert asymptotic_worst_case(0.5, 1) == 0.0625

    @given(st.fractions(0, 1))
    def test_full_rank_slice(self, a):
        assert asymptotic_worst_case(a, 0, exact=True) == 2 * a

    @given(st.fractions(0, 1))
    def test_full_rotation_slice(self, b):
        assert asymptotic_worst_case(1, b, exact=True) == 2 - 2 * b - b**2 + b**3

    @pytest.mark.parametrize("k", range(11))
    def test_overparam_slice(self, k):
        a = F(k, 10)
        assert extremal_overparam(a, exact=True) == asymptotic_worst_case(a, 1, exact=True)
        assert extremal_overparam(float(a)) == asymptotic_worst_case(float(a), 1)

    def test_extremal_examples(self):
        assert extremal_overparam(0.5) == 0.0625
        assert extremal_overparam(0) == 0 and extremal_overparam(1) == 0
        assert extremal_full_rank(0.3) == asymptotic_worst_case(0.3, 0)
        assert extremal_full_rotation(0.4) == asymptotic_worst_case(1, 0.4)

    def test_beta_coefficient_orderings_agree(self):
        # the first-order coefficient appears with its terms in two orders
        for a in (F(k, 7) for k in range(8)):
            assert a**3 + 11 * a - 6 * a**2 - 8 == a**3 - 6 * a**2 + 11 * a - 8

    def test_range_checks(self):
        with pytest.raises(ValueError):
            asymptotic_worst_case(1.2, 0.5)
        with pytest.raises(ValueError):
            asymptotic_worst_case(0.5, -0.1)

    def test_float_inputs_exactly_rounded(self):
        v = asymptotic_worst_case(0.3, 0.7)
        assert v == float(asymptotic_worst_case(F(0.3), F(0.7), exact=True))

    def test_limit_of_exact(self):
        p = 10**4
        for a, b in ((F(1, 4), F(1, 2)), (F(3, 4), F(1, 5))):
            gap = exact_worst_case(p, int((1 - b) * p), int(a * p)) - \
                asymptotic_worst_case(a, b, exact=True)
            assert abs(gap) * p < 5


class TestExpressionCompiler:
    def test_evaluates(self):
        f = compile_expression("(p + 2*d) ** 2 / (m - 1)")
        assert f({"p": F(1), "d": F(2), "m": F(3)}) == F(25, 2)

    @pytest.mark.parametrize("text", ["__import__('os')", "p ** -1", "2.5 * p",
                                      "q + 1", "p ** m", "f(p)"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            compile_expression(text)

