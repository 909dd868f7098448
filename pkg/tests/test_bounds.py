import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exobounds.bounds import (
    att_identified_set,
    bound_curve,
    breakdown_point,
    breakdown_point_grid,
    cdf_bounds_none,
    cdf_bounds_T,
    cdf_bounds_U,
    default_delta_grid,
    integrate_quantile_bounds,
    mean_bounds_Y0,
    parameter_bound,
    parameter_label,
    qtt_identified_set,
    quantile_bounds_by_composition,
    quantile_bounds_Y0,
    rank_cdf_bounds,
)
from exobounds.dist import normal_cdf, piecewise_linear_cdf, uniform_cdf
from exobounds.exceptions import DomainError, OverlapError
from exobounds.schemas import AssumptionKind, AssumptionSpec, BoundInterval, ParamKind, TreatmentMarginal
from exobounds.selection import (
    OutcomeInterval,
    PropensityScore,
    check_T_independence,
    check_U_independence,
    conditional_cdf_values,
    treatment_share,
)

T, U, FULL, NONE = AssumptionKind.T, AssumptionKind.U, AssumptionKind.FULL, AssumptionKind.NONE

# tau values away from every case breakpoint of the configurations below
GENERIC_TAUS = np.linspace(0.0137, 0.9871, 41)


def spec(kind, a=None, b=None):
    return AssumptionSpec(kind=kind, a=a, b=b)


class TestCdfBounds:
    def test_t_independence_example(self, unif):
        lower, upper = cdf_bounds_T(unif, 0.5, 0.25, 0.75)
        assert upper.evaluate(0.1) == pytest.approx(0.2)
        assert upper.evaluate(0.5) == pytest.approx(0.5)
        assert upper.evaluate(0.8) == pytest.approx(0.85)
        assert lower.evaluate(0.2) == pytest.approx(0.15)
        assert lower.evaluate(0.9) == pytest.approx(0.8)

    def test_u_independence_example(self, unif):
        lower, upper = cdf_bounds_U(unif, 0.5, 0.25, 0.75)
        assert upper.evaluate(0.5) == pytest.approx(0.75)
        assert lower.evaluate(0.5) == pytest.approx(0.25)
        assert lower.evaluate(0.9) == pytest.approx(0.8)

    def test_no_assumption_envelopes(self, unif):
        lower, upper = cdf_bounds_none(unif, 0.5)
        assert upper.evaluate(0.25) == pytest.approx(0.5)
        assert upper.evaluate(0.75) == pytest.approx(1.0)
        assert lower.evaluate(0.25) == pytest.approx(0.0)
        assert lower.evaluate(0.75) == pytest.approx(0.5)

    @pytest.mark.parametrize("bounds", [cdf_bounds_T, cdf_bounds_U])
    def test_full_interval_is_point_identified(self, unif, bounds):
        lower, upper = bounds(unif, 0.3, 0.0, 1.0)
        us = np.linspace(0, 1, 11)
        assert np.allclose(lower.evaluate(us), us)
        assert np.allclose(upper.evaluate(us), us)

    def test_normal_outcome(self, std_normal):
        lower, upper = cdf_bounds_T(std_normal, 0.5, -0.5, 0.5)
        assert lower.evaluate(0.0) == pytest.approx(0.5)
        assert upper.evaluate(0.0) == pytest.approx(0.5)
        assert lower.evaluate(2.0) <= std_normal.evaluate(2.0) <= upper.evaluate(2.0)

    def test_degenerate_share(self, unif):
        with pytest.raises(OverlapError):
            cdf_bounds_T(unif, 1.0, 0.25, 0.75)

    def test_reversed_interval(self, unif):
        with pytest.raises(DomainError):
            cdf_bounds_U(unif, 0.5, 0.75, 0.25)

    @given(
        p=st.floats(min_value=0.01, max_value=0.99),
        A=st.floats(min_value=0.0, max_value=1.0),
        width=st.floats(min_value=0.0, max_value=1.0),
        u=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=300)
    def test_bounds_are_ordered_and_nested(self, p, A, width, u):
        B = min(1.0, A + width)
        none_lower, none_upper = rank_cdf_bounds(NONE, 0.0, 1.0, p)
        t_lower, t_upper = rank_cdf_bounds(T, A, B, p)
        u_lower, u_upper = rank_cdf_bounds(U, A, B, p)
        tol = 1e-9
        assert none_lower.evaluate(u) - tol <= u_lower.evaluate(u) <= t_lower.evaluate(u) + tol
        assert t_lower.evaluate(u) <= t_upper.evaluate(u) + tol
        assert t_upper.evaluate(u) <= u_upper.evaluate(u) + tol
        assert u_upper.evaluate(u) <= none_upper.evaluate(u) + tol
        if A <= u <= B:
            assert t_lower.evaluate(u) == pytest.approx(u, abs=tol)
            assert t_upper.evaluate(u) == pytest.approx(u, abs=tol)


class TestQuantileBounds:
    def test_t_examples(self, unif, t_quarter):
        assert quantile_bounds_Y0(t_quarter, unif, 0.5, 0.5).model_dump() == pytest.approx(
            {"lower": 0.5, "upper": 0.5}
        )
        iv = quantile_bounds_Y0(t_quarter, unif, 0.5, 0.9)
        assert (iv.lower, iv.upper) == pytest.approx((0.75, 1.0))
        iv = quantile_bounds_Y0(t_quarter, unif, 0.5, 0.1)
        assert (iv.lower, iv.upper) == pytest.approx((0.0, 0.25))

    def test_t_middle_branch_is_closed(self, unif, t_quarter):
        at_a = quantile_bounds_Y0(t_quarter, unif, 0.5, 0.25)
        assert (at_a.lower, at_a.upper) == pytest.approx((0.25, 0.25))
        below = quantile_bounds_Y0(t_quarter, unif, 0.5, 0.25 - 1e-9)
        assert (below.lower, below.upper) == pytest.approx((0.0, 0.25))
        at_b = quantile_bounds_Y0(t_quarter, unif, 0.5, 0.75)
        assert (at_b.lower, at_b.upper) == pytest.approx((0.75, 0.75))

    def test_u_example(self, unif, u_quarter):
        iv = quantile_bounds_Y0(u_quarter, unif, 0.5, 0.75)
        assert (iv.lower, iv.upper) == pytest.approx((0.25, 1.0))

    def test_full_and_none(self, unif):
        iv = quantile_bounds_Y0(spec(FULL), unif, 0.3, 0.4)
        assert (iv.lower, iv.upper) == pytest.approx((0.4, 0.4))
        iv = quantile_bounds_Y0(spec(NONE), unif, 0.3, 0.4)
        assert (iv.lower, iv.upper) == (0.0, 1.0)

    def test_callable_quantile_function(self, t_quarter):
        iv = quantile_bounds_Y0(t_quarter, lambda t: 2.0 * t, TreatmentMarginal(p1=0.5), 0.5)
        assert (iv.lower, iv.upper) == pytest.approx((1.0, 1.0))

    def test_tau_out_of_range(self, unif, t_quarter):
        with pytest.raises(DomainError):
            quantile_bounds_Y0(t_quarter, unif, 0.5, 1.2)

    @pytest.mark.parametrize("kind", [T, U])
    @pytest.mark.parametrize("p1", [0.3, 0.5, 0.7])
    @pytest.mark.parametrize("a,b", [(0.25, 0.75), (0.1, 0.5), (0.2, 0.6)])
    def test_composition_cross_check(self, unif, kind, p1, a, b):
        assn = spec(kind, a, b)
        for tau in GENERIC_TAUS:
            direct = quantile_bounds_Y0(assn, unif, p1, float(tau))
            composed = quantile_bounds_by_composition(assn, unif, p1, float(tau))
            assert direct.lower == pytest.approx(composed.lower, abs=1e-9)
            assert direct.upper == pytest.approx(composed.upper, abs=1e-9)


class TestMeanBounds:
    def test_t_example(self, unif, t_quarter):
        iv = mean_bounds_Y0(t_quarter, unif, 0.5)
        assert (iv.lower, iv.upper) == pytest.approx((0.4375, 0.5625))

    def test_u_example(self, unif, u_quarter):
        iv = mean_bounds_Y0(u_quarter, unif, 0.5)
        assert (iv.lower, iv.upper) == pytest.approx((0.125, 0.875))

    def test_single_point(self, unif):
        iv = mean_bounds_Y0(spec(T, 0.5, 0.5), unif, 0.5)
        assert (iv.lower, iv.upper) == pytest.approx((0.25, 0.75))

    def test_full_independence_is_the_mean(self, unif):
        iv = mean_bounds_Y0(spec(FULL), unif, 0.5)
        assert iv.lower == pytest.approx(0.5)
        assert iv.width == pytest.approx(0.0)

    def test_unbounded_outcome(self, std_normal, t_quarter):
        iv = mean_bounds_Y0(t_quarter, std_normal, 0.5)
        assert iv.lower == -np.inf
        assert iv.upper == np.inf
        assert mean_bounds_Y0(spec(FULL), std_normal, 0.5).lower == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("kind", [T, U])
    @pytest.mark.parametrize("p1", [0.3, 0.5, 0.7])
    @pytest.mark.parametrize("a,b", [(0.25, 0.75), (0.1, 0.5), (0.0, 1.0)])
    def test_closed_form_matches_integral(self, kind, p1, a, b):
        Q = piecewise_linear_cdf([0.0, 1.0, 3.0], [0.0, 0.5, 1.0])
        assn = spec(kind, a, b)
        closed = mean_bounds_Y0(assn, Q, p1)
        numeric = integrate_quantile_bounds(assn, Q, p1)
        assert closed.lower == pytest.approx(numeric.lower, abs=1e-6)
        assert closed.upper == pytest.approx(numeric.upper, abs=1e-6)

    def test_nesting(self, unif):
        rng = np.random.default_rng(11)
        Q = piecewise_linear_cdf([0.0, 1.0, 3.0], [0.0, 0.5, 1.0])
        for _ in range(20):
            p1 = float(rng.uniform(0.05, 0.95))
            d1, d2 = sorted(rng.uniform(0.0, 0.5, 2))
            full = mean_bounds_Y0(spec(FULL), Q, p1)
            none = mean_bounds_Y0(spec(NONE), Q, p1)
            t1 = mean_bounds_Y0(AssumptionSpec.from_delta(T, d1), Q, p1)
            t2 = mean_bounds_Y0(AssumptionSpec.from_delta(T, d2), Q, p1)
            u1 = mean_bounds_Y0(AssumptionSpec.from_delta(U, d1), Q, p1)
            u2 = mean_bounds_Y0(AssumptionSpec.from_delta(U, d2), Q, p1)
            chain = [full, t1, t2, u2, none]
            for inner, outer in zip(chain, chain[1:]):
                assert outer.lower <= inner.lower + 1e-9
                assert inner.upper <= outer.upper + 1e-9
            assert u2.lower <= u1.lower + 1e-9 and u1.upper <= u2.upper + 1e-9
            assert u1.lower <= t1.lower + 1e-9 and t1.upper <= u1.upper + 1e-9


class TestTreatmentEffects:
    def test_att(self, unif, t_quarter):
        iv = att_identified_set(1.0, t_quarter, unif, 0.5)
        assert (iv.lower, iv.upper) == pytest.approx((0.4375, 0.5625))

    def test_att_point_identified(self, unif):
        iv = att_identified_set(0.5, spec(FULL), unif, 0.5)
        assert (iv.lower, iv.upper) == pytest.approx((0.0, 0.0))

    def test_qtt(self, unif, t_quarter):
        iv = qtt_identified_set(0.9, 0.9, t_quarter, unif, 0.5)
        assert (iv.lower, iv.upper) == pytest.approx((-0.1, 0.15))

    def test_observed_must_be_finite(self, unif, t_quarter):
        with pytest.raises(DomainError):
            att_identified_set(np.nan, t_quarter, unif, 0.5)

    def test_parameter_bound_dispatch(self, unif, t_quarter):
        assert parameter_bound(ParamKind.MEAN_Y0, t_quarter, unif, 0.5).upper == pytest.approx(0.5625)
        assert parameter_bound(ParamKind.QUANTILE_Y0, t_quarter, unif, 0.5, q=0.9).lower == pytest.approx(0.75)
        assert parameter_bound(ParamKind.ATT, t_quarter, unif, 0.5, observed=1.0).lower == pytest.approx(0.4375)
        assert parameter_bound("qtt", t_quarter, unif, 0.5, q=0.9, observed=0.9).upper == pytest.approx(0.15)

    def test_parameter_bound_missing_inputs(self, unif, t_quarter):
        with pytest.raises(DomainError):
            parameter_bound(ParamKind.QTT, t_quarter, unif, 0.5, q=0.5)
        with pytest.raises(DomainError):
            parameter_bound(ParamKind.QUANTILE_Y0, t_quarter, unif, 0.5)

    def test_labels(self):
        assert parameter_label(ParamKind.QTT, 0.5) == "qtt(0.5)"
        assert parameter_label(ParamKind.QUANTILE_Y0, 0.25) == "quantile-Y0(0.25)"
        assert parameter_label(ParamKind.ATT) == "att"


class TestCurves:
    def test_delta_curve(self, unif):
        curve = bound_curve(ParamKind.MEAN_Y0, T, unif, 0.5, [0.0, 0.25, 0.5])
        assert curve.param == "mean-Y0"
        assert curve.index_name == "delta"
        assert (curve.lowers[0], curve.uppers[0]) == pytest.approx((0.5, 0.5))
        assert (curve.lowers[1], curve.uppers[1]) == pytest.approx((0.4375, 0.5625))
        assert (curve.lowers[2], curve.uppers[2]) == pytest.approx((0.25, 0.75))

    def test_tau_curve(self, unif, t_quarter):
        curve = bound_curve(ParamKind.QUANTILE_Y0, T, unif, 0.5, [0.1, 0.5, 0.9], index_name="tau", assn=t_quarter)
        assert curve.index_name == "tau"
        assert curve.uppers == pytest.approx([0.25, 0.5, 1.0])

    def test_tau_curve_needs_assumption(self, unif):
        with pytest.raises(DomainError):
            bound_curve(ParamKind.QUANTILE_Y0, T, unif, 0.5, [0.5], index_name="tau")

    def test_unknown_index(self, unif):
        with pytest.raises(DomainError):
            bound_curve(ParamKind.MEAN_Y0, T, unif, 0.5, [0.5], index_name="u")

    def test_default_grid(self):
        grid = default_delta_grid()
        assert grid.size == 101
        assert grid[0] == 0.0 and grid[-1] == 0.5


class TestBreakdown:
    def test_linear_crossing(self):
        result = breakdown_point(lambda d: 0.2 - d)
        assert result.delta == pytest.approx(0.2, abs=1e-4)
        assert result.flag is None

    def test_never_crosses(self):
        assert breakdown_point(lambda d: 1.0 - d).delta == 0.5

    def test_fails_at_point_identification(self):
        result = breakdown_point(lambda d: -0.1 - d)
        assert result.delta == 0.0
        assert result.flag == "fails at point identification"

    def test_rising_curve_rejected(self):
        with pytest.raises(DomainError):
            breakdown_point(lambda d: d)

    def test_threshold(self):
        assert breakdown_point(lambda d: 0.5 - d, threshold=0.2).delta == pytest.approx(0.3, abs=1e-4)

    def test_bisection_matches_grid_scan(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            level = rng.uniform(0.02, 0.3)
            scale = rng.uniform(1.0, 3.0)
            power = rng.choice([1.0, 2.0, 0.5])

            def curve(d, level=level, scale=scale, power=power):
                return level - scale * d ** power

            bisected = breakdown_point(curve).delta
            scanned = breakdown_point_grid(curve)
            assert abs(bisected - scanned) <= 1e-4 + 1e-12

    def test_att_curve_breakdown(self, unif):
        # E(Y|X=1) = 0.6 against Y|X=0 ~ Unif[0,1], p1 = 0.5
        def lower(delta):
            return att_identified_set(0.6, AssumptionSpec.from_delta(T, delta), unif, 0.5).lower

        result = breakdown_point(lower)
        assert 0.0 < result.delta < 0.5
        assert lower(result.delta) >= 0.0
        assert lower(result.delta + 2e-4) < 0.0


def _centered_steps(rng, mean: float, k: int) -> np.ndarray:
    """k step values in [0, 1] whose average is ``mean``"""
    w = rng.uniform(size=k)
    centered = w - w.mean()
    spread = np.max(np.abs(centered))
    if spread == 0.0:
        return np.full(k, mean)
    return mean + rng.uniform() * min(mean, 1.0 - mean) * centered / spread


def random_admissible_score(rng, kind: AssumptionKind):
    """Step score on [0, 1] satisfying T- or U-independence on a random [a, b]"""
    a, b = rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)
    share = rng.uniform(0.1, 0.9)
    if kind is T:
        m0 = m1 = share
    else:
        total = (a + 1.0 - b) * share
        m0 = rng.uniform(max(0.0, (total - (1.0 - b)) / a), min(1.0, total / a))
        m1 = (total - a * m0) / (1.0 - b)
    k0, k1 = rng.integers(1, 6, size=2)
    breaks = np.concatenate([np.linspace(0.0, a, k0 + 1), np.linspace(b, 1.0, k1 + 1)])
    values = np.concatenate([_centered_steps(rng, m0, k0), [share], _centered_steps(rng, m1, k1)])
    return PropensityScore.step(breaks, np.clip(values, 0.0, 1.0)), a, b


class TestValidity:
    @pytest.mark.parametrize(
        "kind,bounds,checker",
        [(T, cdf_bounds_T, check_T_independence), (U, cdf_bounds_U, check_U_independence)],
    )
    def test_true_cdf_inside_band(self, unif, kind, bounds, checker):
        rng = np.random.default_rng(7 if kind is T else 8)
        grid = np.linspace(0.0, 1.0, 51)
        for _ in range(200):
            score, a, b = random_admissible_score(rng, kind)
            assert checker(score, unif, OutcomeInterval(a, b), tol=1e-9).passed
            share = treatment_share(score, unif)
            truth = conditional_cdf_values(score, unif, grid)
            lower, upper = bounds(unif, share, a, b)
            for lo, hi, value in zip(lower.evaluate(grid), upper.evaluate(grid), truth):
                assert BoundInterval(lower=lo, upper=hi).contains(value, tol=1e-9)
