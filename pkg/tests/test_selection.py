import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exobounds.dist import normal_cdf, uniform_cdf
from exobounds.exceptions import DomainError
from exobounds.schemas import Verdict
from exobounds.selection import (
    OutcomeInterval,
    PiecewiseAffine,
    PropensityScore,
    RoyModel,
    check_mean_independence,
    check_regression_dependence,
    check_T_independence,
    check_T_independence_general_X,
    check_U_independence,
    constant_score,
    construct_extreme_propensity,
    count_direction_changes,
    earnings_roy_model,
    is_monotone_nonconstant,
    roy_propensity,
    sawtooth_score,
    treatment_share,
    weighted_share,
)

TAUS = np.round(np.arange(1, 10) / 10, 1)


def identity_score() -> PropensityScore:
    return PropensityScore.from_knots([0.0, 1.0], [0.0, 1.0])


def random_monotone_score(rng: np.random.Generator) -> PropensityScore:
    """Weakly monotone, nonconstant score on [0, 1]; affine or step"""
    k = int(rng.integers(1, 6))
    inner = np.sort(rng.uniform(0.05, 0.95, k))
    levels = np.cumsum(rng.uniform(0.05, 1.0, k + 1))
    levels = rng.uniform(0.0, 0.3) + 0.6 * (levels - levels[0]) / (levels[-1] - levels[0])
    if rng.random() < 0.5:
        levels = levels[::-1]
    if rng.random() < 0.5:
        return PropensityScore.step(np.concatenate([[0.0], inner, [1.0]]), levels)
    xs = np.concatenate([[0.0], inner[:-1], [1.0]]) if k > 1 else np.array([0.0, 1.0])
    return PropensityScore.from_knots(xs, levels[: xs.size])


class TestScores:
    def test_treatment_shares(self, unif, sawtooth):
        assert treatment_share(constant_score(0.5), unif) == pytest.approx(0.5)
        assert treatment_share(identity_score(), unif) == pytest.approx(0.5)
        assert treatment_share(sawtooth, unif) == pytest.approx(0.5)

    def test_values_outside_unit_interval_rejected(self):
        with pytest.raises(DomainError):
            PropensityScore([0.0], [1.0], [2.0], [0.0])

    def test_pieces_must_be_contiguous(self):
        with pytest.raises(DomainError):
            PropensityScore([0.0, 0.6], [0.5, 1.0], [0.0, 0.0], [0.2, 0.4])

    def test_evaluate_outside_domain(self, sawtooth):
        with pytest.raises(DomainError):
            sawtooth.evaluate(1.5)

    def test_json_round_trip(self, sawtooth):
        again = PropensityScore.from_json(sawtooth.to_json())
        assert again.pieces() == sawtooth.pieces()

    def test_bad_json(self):
        with pytest.raises(DomainError):
            PropensityScore.from_json("{not json")

    def test_complement_and_mix(self, sawtooth):
        comp = sawtooth.complement()
        assert comp.evaluate(0.25) == pytest.approx(0.5)
        mixed = sawtooth.mix(constant_score(0.5), 0.5)
        assert mixed.evaluate(0.25) == pytest.approx(0.5)
        assert mixed.evaluate(0.75) == pytest.approx(0.5)
        assert mixed.evaluate(0.9) == pytest.approx(0.65)


class TestTIndependence:
    def test_sawtooth_passes_at_half(self, unif, sawtooth):
        report = check_T_independence(sawtooth, unif, [0.5])
        assert report.verdict is Verdict.PASS
        assert report.treatment_share == pytest.approx(0.5)

    def test_sawtooth_fails_at_quarter(self, unif, sawtooth):
        report = check_T_independence(sawtooth, unif, [0.25])
        assert report.verdict is Verdict.FAIL
        assert report.gap == pytest.approx(0.25)
        assert report.worst_interval == pytest.approx((0.0, 0.25))

    def test_identity_score_fails(self, unif):
        report = check_T_independence(identity_score(), unif, [0.5])
        assert not report.passed
        assert report.gap == pytest.approx(0.25)

    def test_interval_needs_flatness(self, unif, sawtooth):
        flat = PropensityScore.step([0.0, 0.4, 0.7, 1.0], [0.5, 0.8, 0.2])
        assert check_T_independence(flat, unif, OutcomeInterval(0.2, 0.4)).passed
        assert not check_T_independence(sawtooth, unif, OutcomeInterval(0.2, 0.4)).passed

    def test_points_outside_support(self, unif, sawtooth):
        with pytest.raises(DomainError):
            check_T_independence(sawtooth, unif, [1.5])

    def test_reversed_interval(self, unif, sawtooth):
        with pytest.raises(DomainError):
            check_T_independence(sawtooth, unif, OutcomeInterval(0.6, 0.4))

    def test_nonpositive_tolerance(self, unif, sawtooth):
        with pytest.raises(DomainError):
            check_T_independence(sawtooth, unif, [0.5], tol=0.0)

    def test_monotone_scores_fail_everywhere(self, unif):
        rng = np.random.default_rng(20240501)
        for _ in range(500):
            score = random_monotone_score(rng)
            assert is_monotone_nonconstant(score)
            for tau in TAUS:
                assert not check_T_independence(score, unif, [tau]).passed
            assert not check_mean_independence(score, unif).passed

    @given(value=st.floats(min_value=0.0, max_value=1.0), lo=st.floats(0.0, 0.5), width=st.floats(0.01, 0.5))
    @settings(max_examples=50)
    def test_constant_score_passes_every_check(self, value, lo, width):
        unif = uniform_cdf()
        score = constant_score(value)
        interval = OutcomeInterval(lo, lo + width)
        assert check_T_independence(score, unif, interval).passed
        assert check_T_independence(score, unif, [lo, lo + width]).passed
        assert check_U_independence(score, unif, interval).passed
        assert check_mean_independence(score, unif).passed


class TestUIndependence:
    def test_flat_on_interval(self, unif):
        score = PropensityScore.step([0.0, 0.25, 0.75, 1.0], [1.0, 0.5, 0.0])
        report = check_U_independence(score, unif, OutcomeInterval(0.25, 0.75))
        assert report.passed
        assert report.treatment_share == pytest.approx(0.5)

    def test_sawtooth_not_flat(self, unif, sawtooth):
        report = check_U_independence(sawtooth, unif, OutcomeInterval(0.25, 0.75))
        assert not report.passed
        assert report.gap == pytest.approx(0.5)


class TestMeanIndependence:
    def test_identity_score(self, unif):
        report = check_mean_independence(identity_score(), unif)
        assert report.verdict is Verdict.FAIL
        assert weighted_share(identity_score(), unif) == pytest.approx(2 / 3)

    def test_sawtooth_weighted_value(self, unif, sawtooth):
        assert weighted_share(sawtooth, unif) == pytest.approx(7 / 12, abs=1e-12)
        assert not check_mean_independence(sawtooth, unif).passed

    def test_zero_mean_outcome_is_undefined(self, std_normal):
        score = PropensityScore.constant(0.4, -np.inf, np.inf)
        report = check_mean_independence(score, std_normal)
        assert report.verdict is Verdict.UNDEFINED
        assert "renormalize" in report.message


class TestShapes:
    def test_direction_changes(self):
        assert count_direction_changes(constant_score(0.3)) == 0
        assert count_direction_changes(identity_score()) == 0
        assert count_direction_changes(sawtooth_score(drops=1)) == 1
        assert count_direction_changes(sawtooth_score(drops=2)) == 2
        tent = PropensityScore.from_knots([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
        assert count_direction_changes(tent) == 1

    def test_removable_discontinuity_ignored(self):
        split = PropensityScore([0.0, 0.5], [0.5, 1.0], [1.0, 1.0], [0.0, 0.0])
        assert count_direction_changes(split) == 0
        assert is_monotone_nonconstant(split)

    def test_monotone_nonconstant(self, sawtooth):
        assert is_monotone_nonconstant(identity_score())
        assert not is_monotone_nonconstant(constant_score(0.3))
        assert not is_monotone_nonconstant(sawtooth)

    def test_oscillation_lower_bound(self, unif):
        # passes at 1/3 and 2/3 and is nonconstant between them
        score = sawtooth_score(drops=2)
        assert check_T_independence(score, unif, [1 / 3, 2 / 3]).passed
        assert count_direction_changes(score) >= 2

    def test_chained_jumps_each_count(self, unif):
        # four isolated jumps: non-monotone on [0, 0.5) and on [0.5, 1]
        score = PropensityScore.step([0.0, 0.1, 0.3, 0.6, 0.8, 1.0], [0.2, 0.8, 0.2, 0.8, 0.2])
        assert check_T_independence(score, unif, [1 / 6, 2 / 3]).passed
        assert count_direction_changes(score) == 2

    def test_alternating_jumps(self):
        values = [0.2, 0.8] * 3
        score = PropensityScore.step(np.linspace(0.0, 1.0, 7), values)
        assert count_direction_changes(score) == 2


class TestExtremeConstruction:
    def test_wide_gap(self, unif):
        score = construct_extreme_propensity(unif, (0.6, 1.0), 0.5)
        assert score.evaluate(0.3) == pytest.approx(0.5)
        assert score.evaluate(0.7) == 1.0
        assert score.evaluate(0.9) == 0.0
        assert check_T_independence(score, unif, [0.5]).passed

    def test_narrow_gap_threshold(self, unif):
        score = construct_extreme_propensity(unif, (0.4, 0.6), 0.25)
        assert score.evaluate(0.449) == 1.0
        assert score.evaluate(0.451) == 0.0
        assert check_T_independence(score, unif, [0.2, 0.8]).passed

    def test_zero_mass_gap(self):
        from exobounds.dist import piecewise_linear_cdf

        dist = piecewise_linear_cdf([0.0, 0.4, 0.6, 1.0], [0.0, 0.5, 0.5, 1.0])
        with pytest.raises(DomainError):
            construct_extreme_propensity(dist, (0.45, 0.55), 0.5)

    def test_share_out_of_range(self, unif):
        with pytest.raises(DomainError):
            construct_extreme_propensity(unif, (0.6, 1.0), 1.0)


class TestRoyModel:
    def test_no_gain_gives_half(self, std_normal):
        model = RoyModel(mu=PiecewiseAffine.constant(0.0, -np.inf, np.inf), baseline=std_normal)
        score = roy_propensity(model)
        assert score.evaluate(1.3) == pytest.approx(0.5)
        assert treatment_share(score, std_normal) == pytest.approx(0.5)

    def test_linear_gain_is_monotone(self, std_normal):
        mu = PiecewiseAffine([-np.inf], [np.inf], [1.0], [0.0])
        score = roy_propensity(RoyModel(mu=mu, baseline=std_normal))
        assert is_monotone_nonconstant(score)
        assert score.evaluate(0.5) == pytest.approx(0.691462, abs=1e-4)
        for t in (-1.0, 0.0, 1.0):
            assert not check_T_independence(score, std_normal, [t]).passed

    def test_earnings_band_changes_direction(self, std_normal):
        score = roy_propensity(earnings_roy_model(-0.5, 0.5, 1.0, std_normal))
        assert count_direction_changes(score) >= 1
        assert score.evaluate(0.0) > score.evaluate(1.0)

    def test_mu_must_cover_support(self, std_normal):
        with pytest.raises(DomainError):
            RoyModel(mu=PiecewiseAffine.constant(0.0, 0.0, 1.0), baseline=std_normal)


class TestRegressionDependence:
    X_GRID = np.linspace(-3.0, 3.0, 25)

    def test_identical_conditionals(self):
        family = {u: normal_cdf() for u in np.linspace(0, 1, 5)}
        assert check_regression_dependence(family, self.X_GRID)

    def test_location_family(self):
        family = {u: normal_cdf(u, 1.0) for u in np.linspace(0, 1, 11)}
        assert check_regression_dependence(family, self.X_GRID)

    def test_oscillating_location(self):
        family = {u: normal_cdf(np.sin(4 * np.pi * u), 1.0) for u in np.linspace(0, 1, 9)}
        assert not check_regression_dependence(family, self.X_GRID)

    def test_value_rows(self):
        family = {0.0: [0.2, 0.6, 1.0], 1.0: [0.1, 0.5, 1.0]}
        assert check_regression_dependence(family)

    def test_inconsistent_grids(self):
        with pytest.raises(DomainError):
            check_regression_dependence({0.0: [0.2, 1.0], 1.0: [0.1, 0.5, 1.0]})


class TestGeneralTreatment:
    def test_binary_reduction_agrees(self, unif, sawtooth):
        for T in ([0.5], [0.25]):
            direct = check_T_independence(sawtooth, unif, T)
            reduced = check_T_independence_general_X({0.0: sawtooth}, [0.0], unif, T)
            assert reduced.verdict is direct.verdict
            assert reduced.gap == pytest.approx(direct.gap)

    def test_independent_callable(self, unif):
        report = check_T_independence_general_X(lambda x, u: 0.5, [0.0, 1.0], unif, [0.3])
        assert report.passed
        assert report.failing_x == []

    def test_ordered_thresholds_fail(self, unif):
        cuts = {0.0: 1 / 3, 1.0: 2 / 3}

        def survival(x, u):
            return 1.0 if u >= cuts[x] else 0.0

        report = check_T_independence_general_X(survival, [0.0, 1.0], unif, [0.5])
        assert not report.passed
        assert report.failing_x == [0.0, 1.0]

    def test_failing_category_reported(self, unif, sawtooth):
        upper = PropensityScore([0.0, 0.5], [0.5, 1.0], [0.0, 2.0], [0.0, -1.0])
        report = check_T_independence_general_X({0.0: sawtooth, 1.0: upper}, [0.0, 1.0], unif, [0.5])
        assert report.verdict is Verdict.FAIL
        assert report.failing_x == [1.0]

    def test_empty_grid(self, unif):
        with pytest.raises(DomainError):
            check_T_independence_general_X(lambda x, u: 0.5, [], unif)
