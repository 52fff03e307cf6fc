import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from petident import (
    GenPolyExp,
    KineticParams,
    PolyExp,
    eval_genpolyexp,
    eval_polyexp,
    has_distinct_rate_regions,
    max_roots_bound,
    region_diversity_report,
)

ARTERIAL_TERMS = [(-5.0, -0.5), (4.0, -0.2), (1.0, -0.1)]


class TestEvalPolyExp:
    def test_arterial_curve_is_zero_at_zero(self):
        g = PolyExp(ARTERIAL_TERMS)
        assert eval_polyexp(g, 0.0) == 0.0

    def test_constant_term(self):
        g = PolyExp([(1.0, 0.0)])
        for t in (0.0, 1.0, 17.3, 1e4):
            assert eval_polyexp(g, t) == 1.0

    def test_against_high_precision_oracle(self):
        # frozen from mpmath at 50 digits: -5 e^-5 + 4 e^-2 + e^-1
        g = PolyExp(ARTERIAL_TERMS)
        with mpmath.workdps(50):
            expected = float(
                sum(mpmath.mpf(lam) * mpmath.e ** (mpmath.mpf(mu) * 10) for lam, mu in ARTERIAL_TERMS)
            )
        assert eval_polyexp(g, 10.0) == pytest.approx(expected, rel=1e-15)

    def test_vectorized_matches_scalar(self):
        g = PolyExp(ARTERIAL_TERMS)
        t = np.linspace(0, 60, 7)
        vals = eval_polyexp(g, t)
        assert vals.shape == (7,)
        for ti, vi in zip(t, vals):
            assert vi == pytest.approx(eval_polyexp(g, float(ti)), rel=1e-15)

    def test_zero_function(self):
        assert PolyExp([]).degree == 0
        assert eval_polyexp(PolyExp([]), 3.0) == 0.0

    def test_canonicalization_merges_and_drops(self):
        g = PolyExp([(1.0, -0.5), (2.0, -0.5), (0.0, -0.2), (1.0, -0.1), (-1.0, -0.1)])
        assert g.terms == ((3.0, -0.5),)
        assert g.degree == 1

    def test_linearity_in_coefficients(self, rng):
        for _ in range(50):
            p1, p2 = rng.integers(1, 5, size=2)
            g = PolyExp(zip(rng.normal(size=p1), rng.normal(size=p1)))
            h = PolyExp(zip(rng.normal(size=p2), rng.normal(size=p2)))
            a, b = rng.normal(size=2)
            t = rng.uniform(-2, 2)
            combined = eval_polyexp(a * g + b * h, t)
            expected = a * eval_polyexp(g, t) + b * eval_polyexp(h, t)
            assert combined == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestEvalGenPolyExp:
    def test_constant_polynomial(self):
        g = GenPolyExp([(0.0, [3.5])])
        assert eval_genpolyexp(g, 0.0) == 3.5
        assert eval_genpolyexp(g, 42.0) == 3.5

    def test_t_times_exponential(self):
        g = GenPolyExp([(-1.0, [0.0, 1.0])])
        assert eval_genpolyexp(g, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_random_against_per_term_oracle(self, rng):
        for _ in range(100):
            n_groups = rng.integers(1, 4)
            mus = rng.normal(size=n_groups) * 0.5
            groups = [
                (mu, rng.normal(size=rng.integers(1, 4)).tolist()) for mu in mus
            ]
            g = GenPolyExp(groups)
            t = float(rng.uniform(-3, 3))
            expected = 0.0
            for mu, coeffs in g.groups:
                poly = sum(c * t**k for k, c in enumerate(coeffs))
                expected += poly * math.exp(mu * t)
            value = eval_genpolyexp(g, t)
            assert value == pytest.approx(expected, rel=1e-12, abs=1e-12)


def count_sign_changes(values):
    signs = np.sign(values[values != 0.0])
    return int(np.count_nonzero(np.diff(signs) != 0))


class TestRootsBound:
    def test_single_exponential(self):
        assert max_roots_bound(GenPolyExp([(1.0, [1.0])])) == 0

    def test_quadratic_group(self):
        assert max_roots_bound(GenPolyExp([(0.5, [1.0, 2.0, 3.0])])) == 2

    def test_zero_function_rejected(self):
        with pytest.raises(ValueError, match="zero function"):
            max_roots_bound(GenPolyExp([]))

    def test_bound_confirmed_by_sign_scan(self):
        # e^t - e^(2t): bound 1, and exactly one root at t = 0
        g = GenPolyExp([(1.0, [1.0]), (2.0, [-1.0])])
        assert max_roots_bound(g) == 1
        t = np.linspace(-10, 10, 10_001)
        assert count_sign_changes(eval_genpolyexp(g, t)) == 1
        assert abs(eval_genpolyexp(g, 0.0)) < 1e-15

    def test_random_polyexp_sign_changes_within_bound(self, rng):
        for _ in range(40):
            d = int(rng.integers(1, 5))
            g = PolyExp(zip(rng.normal(size=d), rng.normal(size=d)))
            if g.degree == 0:
                continue
            t = np.linspace(-5, 5, 10_000)
            assert count_sign_changes(eval_polyexp(g, t)) <= g.degree - 1


class TestRegionDiversity:
    def test_reference_scenario_satisfied(self, scenario):
        report = region_diversity_report(
            scenario.c_art.exponents, scenario.c_art.coefficients, scenario.kinetics
        )
        assert report.satisfied
        assert len(report.witnesses) == scenario.p
        assert report.margin > 0

    def test_identical_regions_violate(self):
        kin = [KineticParams(0.1, 0.2, 0.3)] * 3
        report = region_diversity_report([-0.5, -0.2], [1.0, 1.0], kin)
        assert not report.satisfied
        assert any("k3 not pairwise distinct" in v for v in report.violations)

    def test_two_regions_insufficient(self):
        kin = [KineticParams(0.1, 0.2, 0.3), KineticParams(0.2, 0.3, 0.4)]
        report = region_diversity_report([-0.5], [1.0], kin)
        assert not report.satisfied
        assert any("n < 3" in v for v in report.violations)

    def test_resonant_disjunct_accepted(self):
        # mu + k2 + k3 = 0 in one region satisfies the disjunction there
        kin = [
            KineticParams(0.1, 0.2, 0.3),
            KineticParams(0.1, 0.25, 0.35),
            KineticParams(0.1, 0.3, 0.41),
        ]
        report = region_diversity_report([-0.5], [1.0], kin)
        assert report.satisfied


class TestSufficientCondition:
    def test_six_distinct_regions(self):
        kin = [KineticParams(0.1, 0.2 + 0.01 * i, 0.1 * (i + 1)) for i in range(6)]
        assert has_distinct_rate_regions(kin, p=3)

    def test_reference_scenario_not_sufficient_but_diverse(self, scenario):
        # only 3 regions < p + 3 = 6: the sufficient condition fails even
        # though the direct diversity check passes
        assert not has_distinct_rate_regions(scenario.kinetics, scenario.p)
        report = region_diversity_report(
            scenario.c_art.exponents, scenario.c_art.coefficients, scenario.kinetics
        )
        assert report.satisfied

    def test_duplicate_k3_among_minimal_set(self):
        kin = [KineticParams(0.1, 0.2 + 0.01 * i, 0.15) for i in range(6)]
        kin = [KineticParams(0.1, 0.2, 0.1), KineticParams(0.1, 0.25, 0.1)] + [
            KineticParams(0.1, 0.2 + 0.03 * i, 0.2 + 0.05 * i) for i in range(4)
        ]
        assert not has_distinct_rate_regions(kin, p=3)

    def test_sufficient_implies_diverse(self, rng):
        # random scenarios with p + 3 separated regions always pass both checks
        for _ in range(25):
            p = int(rng.integers(1, 4))
            lam = rng.normal(size=p) + np.where(rng.normal(size=p) >= 0, 0.5, -0.5)
            mu = -np.cumsum(rng.uniform(0.05, 0.4, size=p))
            kin = [
                KineticParams(
                    float(rng.uniform(0.05, 0.3)),
                    0.1 + 0.07 * i + float(rng.uniform(0, 0.02)),
                    0.05 + 0.11 * i,
                )
                for i in range(p + 3)
            ]
            if not has_distinct_rate_regions(kin, p):
                continue
            report = region_diversity_report(mu, lam, kin)
            assert report.satisfied


@settings(max_examples=60, deadline=None)
@given(
    terms=st.lists(
        st.tuples(
            st.floats(-10, 10, allow_nan=False),
            st.floats(-3, 3, allow_nan=False),
        ),
        min_size=0,
        max_size=5,
    ),
    t=st.floats(-5, 5, allow_nan=False),
)
def test_polyexp_construction_invariants(terms, t):
    g = PolyExp(terms)
    exps = g.exponents
    assert np.all(np.diff(exps) > 0)
    assert np.all(g.coefficients != 0.0)
    assert np.isfinite(eval_polyexp(g, t))
