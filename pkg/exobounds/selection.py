"""
Latent propensity scores p(y) = P(X=1 | Y_x = y) and the checks that classify
them by the exogeneity assumptions they satisfy.

Scores are piecewise affine, so every integral against a supported cdf is
closed form.
"""

import json
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import TypeAdapter
from scipy import stats

from exobounds.dist import Cdf, StepCdf, uniform_cdf
from exobounds.exceptions import DomainError, OverlapError
from exobounds.schemas import IndependenceReport, PropensityPiece, Verdict
from exobounds.settings import CHECK_TOL, PROB_TOL, TAIL_EPS

logger = logging.getLogger(__name__)

_PIECE_LIST = TypeAdapter(List[PropensityPiece])

# Slopes and jumps smaller than this count as flat
_FLAT_TOL = 1e-12

ROY_KNOTS = 1001


class OutcomeInterval(NamedTuple):
    """An interval T of outcome values, as opposed to a finite set of points"""

    lo: float
    hi: float


TSet = Union[Sequence[float], OutcomeInterval]


class PiecewiseAffine:
    """Function slope_i * y + intercept_i on consecutive pieces [lo_i, hi_i)"""

    def __init__(self, los, his, slopes, intercepts):
        los = np.asarray(los, dtype=float).ravel()
        his = np.asarray(his, dtype=float).ravel()
        slopes = np.asarray(slopes, dtype=float).ravel()
        intercepts = np.asarray(intercepts, dtype=float).ravel()
        if not (los.size == his.size == slopes.size == intercepts.size) or los.size == 0:
            raise DomainError("a piecewise function needs at least one complete piece")
        if np.any(his <= los):
            raise DomainError("every piece needs lo < hi")
        if np.any(np.isinf(los[1:])) or np.any(np.isinf(his[:-1])):
            raise DomainError("only the outer ends of the domain may be infinite")
        if not (np.all(np.isfinite(slopes)) and np.all(np.isfinite(intercepts))):
            raise DomainError("slopes and intercepts must be finite")
        scale = np.maximum(1.0, np.abs(his[:-1]))
        if np.any(np.abs(his[:-1] - los[1:]) > 1e-12 * scale):
            raise DomainError("pieces must be contiguous")
        for arr in (los, his, slopes, intercepts):
            arr.setflags(write=False)
        self.los, self.his, self.slopes, self.intercepts = los, his, slopes, intercepts

    @classmethod
    def from_pieces(cls, pieces: Sequence[PropensityPiece]):
        return cls(
            [pc.lo for pc in pieces],
            [pc.hi for pc in pieces],
            [pc.slope for pc in pieces],
            [pc.intercept for pc in pieces],
        )

    @classmethod
    def from_knots(cls, xs, ys):
        """Continuous interpolation through (xs, ys)"""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.size < 2 or xs.size != ys.size or np.any(np.diff(xs) <= 0):
            raise DomainError("knots must be strictly increasing with matching values")
        slopes = np.diff(ys) / np.diff(xs)
        return cls(xs[:-1], xs[1:], slopes, ys[:-1] - slopes * xs[:-1])

    @classmethod
    def step(cls, breaks, values):
        """Piecewise constant: values[i] on [breaks[i], breaks[i+1])"""
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if breaks.size != values.size + 1:
            raise DomainError("a step function needs one more break than values")
        return cls(breaks[:-1], breaks[1:], np.zeros(values.size), values)

    @classmethod
    def constant(cls, value: float, lo: float = 0.0, hi: float = 1.0):
        return cls([lo], [hi], [0.0], [value])

    @property
    def domain(self) -> Tuple[float, float]:
        return float(self.los[0]), float(self.his[-1])

    @property
    def n_pieces(self) -> int:
        return self.los.size

    def pieces(self) -> List[PropensityPiece]:
        return [
            PropensityPiece(lo=float(lo), hi=float(hi), slope=float(s), intercept=float(c))
            for lo, hi, s, c in zip(self.los, self.his, self.slopes, self.intercepts)
        ]

    def _affine(self, idx: np.ndarray, y: np.ndarray) -> np.ndarray:
        slope = self.slopes[idx]
        with np.errstate(invalid="ignore"):
            return np.where(slope == 0.0, self.intercepts[idx], slope * y + self.intercepts[idx])

    def _index(self, y: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.los, y, side="right") - 1, 0, self.n_pieces - 1)

    def evaluate(self, y):
        arr = np.atleast_1d(np.asarray(y, dtype=float))
        lo, hi = self.domain
        if np.any(arr < lo - 1e-12) or np.any(arr > hi + 1e-12):
            raise DomainError(f"evaluation point outside the domain [{lo}, {hi}]")
        out = self._affine(self._index(arr), arr)
        return float(out[0]) if np.ndim(y) == 0 else out

    def right_values(self) -> np.ndarray:
        """Value at the left end of each piece"""
        return self._affine(np.arange(self.n_pieces), self.los)

    def left_limits(self) -> np.ndarray:
        """Limit at the right end of each piece"""
        return self._affine(np.arange(self.n_pieces), self.his)

    def refine(self, breaks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Slopes and intercepts on the cells of a finer partition"""
        mids = np.empty(breaks.size - 1)
        for i, (left, right) in enumerate(zip(breaks[:-1], breaks[1:])):
            if np.isfinite(left) and np.isfinite(right):
                mids[i] = 0.5 * (left + right)
            else:
                mids[i] = right - 1.0 if np.isfinite(right) else left + 1.0
        idx = self._index(mids)
        return self.slopes[idx], self.intercepts[idx]

    def runs(self) -> List[Tuple[int, float, float]]:
        """
        Maximal monotone runs as (sign, start, end).

        Affine slopes and jumps between pieces are the moves; flat pieces and
        removable discontinuities contribute nothing.
        """
        moves = []
        starts = self.right_values()
        ends = self.left_limits()
        for i in range(self.n_pieces):
            if i > 0:
                jump = starts[i] - ends[i - 1]
                if abs(jump) > _FLAT_TOL:
                    moves.append((int(np.sign(jump)), float(self.los[i]), float(self.los[i])))
            if abs(self.slopes[i]) > _FLAT_TOL:
                moves.append((int(np.sign(self.slopes[i])), float(self.los[i]), float(self.his[i])))
        runs: List[Tuple[int, float, float]] = []
        for sign, start, end in moves:
            if runs and runs[-1][0] == sign:
                runs[-1] = (sign, runs[-1][1], end)
            else:
                runs.append((sign, start, end))
        return runs

    def __repr__(self) -> str:
        lo, hi = self.domain
        return f"{type(self).__name__}(pieces={self.n_pieces}, domain=[{lo}, {hi}])"


class PropensityScore(PiecewiseAffine):
    """Piecewise-affine score with values in [0, 1]"""

    def __init__(self, los, his, slopes, intercepts):
        super().__init__(los, his, slopes, intercepts)
        if np.any((self.slopes != 0.0) & (np.isinf(self.los) | np.isinf(self.his))):
            raise DomainError("pieces reaching an infinite end must be flat")
        values = np.concatenate([self.right_values(), self.left_limits()])
        if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
            raise DomainError("propensity score leaves [0, 1]")

    def complement(self) -> "PropensityScore":
        """1 - p, the score of the other arm"""
        return PropensityScore(self.los, self.his, -self.slopes, 1.0 - self.intercepts)

    def mix(self, other: "PropensityScore", weight: float) -> "PropensityScore":
        """weight * self + (1 - weight) * other on the common refinement"""
        if not 0.0 <= weight <= 1.0:
            raise DomainError(f"mixing weight must lie in [0, 1], got {weight}")
        if np.any(np.abs(np.array(self.domain) - np.array(other.domain)) > 1e-12):
            raise DomainError("mixed scores must share a domain")
        breaks = np.unique(np.concatenate([self.los, self.his, other.los, other.his]))
        s1, c1 = self.refine(breaks)
        s2, c2 = other.refine(breaks)
        return PropensityScore(
            breaks[:-1],
            breaks[1:],
            weight * s1 + (1 - weight) * s2,
            weight * c1 + (1 - weight) * c2,
        )

    def to_json(self) -> str:
        return json.dumps([piece.model_dump() for piece in self.pieces()])

    @classmethod
    def from_json(cls, text: str) -> "PropensityScore":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise DomainError(f"propensity score is not valid JSON: {e}") from e
        return cls.from_pieces(_PIECE_LIST.validate_python(data))


@dataclass(frozen=True)
class RoyModel:
    """Selection X = 1(Y1 > Y0) with Y1 = Y0 + mu(Y0) - noise"""

    mu: PiecewiseAffine
    baseline: Cdf
    noise_scale: float = 1.0

    def __post_init__(self):
        lo, hi = self.mu.domain
        if lo > self.baseline.lower + 1e-12 or hi < self.baseline.upper - 1e-12:
            raise DomainError("mu must be defined on the whole baseline support")
        if self.noise_scale <= 0:
            raise DomainError("noise scale must be positive")


# Generators


def constant_score(value: float, lo: float = 0.0, hi: float = 1.0) -> PropensityScore:
    return PropensityScore.constant(value, lo, hi)


def sawtooth_score(drops: int = 1, lo: float = 0.0, hi: float = 1.0) -> PropensityScore:
    """Teeth rising linearly from 0 to 1, with ``drops`` interior drops back to 0"""
    if drops < 0:
        raise DomainError("number of drops must be nonnegative")
    teeth = drops + 1
    width = (hi - lo) / teeth
    starts = lo + width * np.arange(teeth)
    ends = np.append(starts[1:], hi)
    slopes = np.full(teeth, 1.0 / width)
    return PropensityScore(starts, ends, slopes, -starts / width)


def construct_extreme_propensity(dist: Cdf, gap: Tuple[float, float], share: float) -> PropensityScore:
    """
    Score equal to 1 then 0 inside the gap (a, b) and to ``share`` outside it.

    The 1/0 threshold keeps the conditional average on the gap equal to share.
    """
    a, b = float(gap[0]), float(gap[1])
    if not 0.0 < share < 1.0:
        raise DomainError(f"share must lie in (0, 1), got {share}")
    if not (dist.lower <= a < b <= dist.upper):
        raise DomainError(f"gap [{a}, {b}] must be a nonempty interval inside the support")
    fa, fb = dist.evaluate(a), dist.evaluate(b)
    if fb - fa <= PROB_TOL:
        raise DomainError(f"gap [{a}, {b}] carries no probability mass")
    threshold = float(dist.quantile(fa + share * (fb - fa)))

    breaks = [dist.lower]
    values = []
    if a > dist.lower:
        breaks.append(a)
        values.append(share)
    for end, value in ((threshold, 1.0), (b, 0.0)):
        if end > breaks[-1]:
            breaks.append(end)
            values.append(value)
    if dist.upper > b:
        breaks.append(dist.upper)
        values.append(share)
    return PropensityScore.step(breaks, values)


def roy_propensity(model: RoyModel, knots: int = ROY_KNOTS) -> PropensityScore:
    """Phi(mu(y) / scale), tabulated at ``knots`` points per affine piece of mu"""
    mu = model.mu
    tail_lo = float(model.baseline.quantile(TAIL_EPS))
    tail_hi = float(model.baseline.quantile(1.0 - TAIL_EPS))
    los, his, slopes, intercepts = [], [], [], []
    for lo, hi, slope, intercept in zip(mu.los, mu.his, mu.slopes, mu.intercepts):
        if slope == 0.0:
            los.append(lo)
            his.append(hi)
            slopes.append(0.0)
            intercepts.append(stats.norm.cdf(intercept / model.noise_scale))
            continue
        left = lo if np.isfinite(lo) else min(tail_lo, hi - 1.0)
        right = hi if np.isfinite(hi) else max(tail_hi, left + 1.0)
        xs = np.linspace(left, right, knots)
        ys = stats.norm.cdf((slope * xs + intercept) / model.noise_scale)
        piece_slopes = np.diff(ys) / np.diff(xs)
        if not np.isfinite(lo):
            los.append(lo)
            his.append(left)
            slopes.append(0.0)
            intercepts.append(ys[0])
        los.extend(xs[:-1])
        his.extend(xs[1:])
        slopes.extend(piece_slopes)
        intercepts.extend(ys[:-1] - piece_slopes * xs[:-1])
        if not np.isfinite(hi):
            los.append(right)
            his.append(hi)
            slopes.append(0.0)
            intercepts.append(ys[-1])
    return PropensityScore(los, his, slopes, intercepts)


def earnings_roy_model(alpha: float, beta: float, peak: float, baseline: Cdf) -> RoyModel:
    """Gains mu(y0) positive only for moderate earnings alpha < y0 < beta"""
    if not alpha < beta:
        raise DomainError("earnings band needs alpha < beta")
    mid = 0.5 * (alpha + beta)
    rate = peak / (mid - alpha)
    lo = min(baseline.lower, alpha) if np.isfinite(baseline.lower) else -np.inf
    hi = max(baseline.upper, beta) if np.isfinite(baseline.upper) else np.inf
    mu = PiecewiseAffine([lo, mid], [mid, hi], [rate, -rate], [-rate * alpha, rate * beta])
    return RoyModel(mu=mu, baseline=baseline)


# Integration


def _check_covers(p: PiecewiseAffine, dist: Cdf) -> None:
    lo, hi = p.domain
    if lo > dist.lower + 1e-12 or hi < dist.upper - 1e-12:
        raise DomainError(
            f"score domain [{lo}, {hi}] does not cover the support [{dist.lower}, {dist.upper}]"
        )


def cumulative_integral(p: PiecewiseAffine, dist: Cdf, points, power: int = 0) -> np.ndarray:
    """Integral of p(y) * y**power over (-inf, t] against dF, at each t in ``points``"""
    _check_covers(p, dist)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if isinstance(dist, StepCdf):
        xs = dist.atoms
        weighted = p.evaluate(xs) * xs ** power
        prefix = np.concatenate([[0.0], np.cumsum(weighted)])
        return prefix[np.searchsorted(xs, points, side="right")] / xs.size

    per_piece = p.slopes * dist.partial_moment(p.los, p.his, power + 1) + p.intercepts * dist.partial_moment(
        p.los, p.his, power
    )
    cumulative = np.concatenate([[0.0], np.cumsum(per_piece)])
    idx = p._index(points)
    right = np.minimum(points, p.his[idx])
    left = p.los[idx]
    partial = p.slopes[idx] * dist.partial_moment(left, right, power + 1) + p.intercepts[
        idx
    ] * dist.partial_moment(left, right, power)
    out = cumulative[idx] + np.where(right > left, partial, 0.0)
    out = np.where(points < p.los[0], 0.0, out)
    return np.where(points >= p.his[-1], cumulative[-1], out)


def treatment_share(p: PiecewiseAffine, dist: Cdf) -> float:
    """P(X=1), the integral of p against dist"""
    return float(cumulative_integral(p, dist, [np.inf])[0])


def weighted_share(p: PiecewiseAffine, dist: Cdf) -> float:
    """E[(Y / E Y) p(Y)], the value mean independence pins to P(X=1)"""
    expectation = dist.mean()
    if abs(expectation) <= 1e-12:
        raise DomainError("weighted share undefined when E[Y] = 0")
    return float(cumulative_integral(p, dist, [np.inf], power=1)[0]) / expectation


def conditional_cdf_values(p: PiecewiseAffine, dist: Cdf, points) -> np.ndarray:
    """F_{Y|X}(t|1) = integral of p up to t over P(X=1)"""
    share = treatment_share(p, dist)
    if share <= PROB_TOL:
        raise OverlapError("score never selects treatment")
    return cumulative_integral(p, dist, points) / share


# Checkers


def _t_label(T: TSet) -> str:
    if isinstance(T, OutcomeInterval):
        return f"T-independence on [{T.lo:g}, {T.hi:g}]"
    return "T-independence on {" + ", ".join(f"{t:g}" for t in T) + "}"


def _endpoints(dist: Cdf, T: TSet, refinement: int) -> np.ndarray:
    if isinstance(T, OutcomeInterval):
        if T.lo > T.hi:
            raise DomainError(f"interval T needs lo <= hi, got [{T.lo}, {T.hi}]")
        points = np.linspace(T.lo, T.hi, refinement)
    else:
        points = np.asarray(list(T), dtype=float)
    if np.any(points < dist.lower - 1e-12) or np.any(points > dist.upper + 1e-12):
        raise DomainError("T must lie inside the outcome support")
    return np.unique(np.concatenate([[-np.inf], points, [np.inf]]))


def check_T_independence(
    p: PiecewiseAffine,
    dist: Cdf,
    T: TSet,
    tol: float = CHECK_TOL,
    refinement: int = 101,
) -> IndependenceReport:
    """
    Average value test: E(p(Y) | Y in (t1, t2]) = P(X=1) for every pair of
    endpoints drawn from T and the support ends.
    """
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    ends = _endpoints(dist, T, refinement)
    cdf_values = np.asarray(dist.evaluate(ends), dtype=float)
    integrals = cumulative_integral(p, dist, ends)
    share = float(integrals[-1])

    i, j = np.triu_indices(ends.size, k=1)
    mass = cdf_values[j] - cdf_values[i]
    kept = mass > 1e-12
    skipped = int(np.count_nonzero(~kept))
    if skipped:
        logger.warning(f"Skipped {skipped} endpoint pairs with zero probability mass")
    averages = (integrals[j][kept] - integrals[i][kept]) / mass[kept]
    gaps = np.abs(averages - share)

    worst = None
    gap = 0.0
    if gaps.size:
        k = int(np.argmax(gaps))
        gap = float(gaps[k])
        lo_end = float(ends[i[kept][k]])
        hi_end = float(ends[j[kept][k]])
        worst = (max(lo_end, dist.lower), min(hi_end, dist.upper))
    return IndependenceReport(
        assumption=_t_label(T),
        verdict=Verdict.PASS if gap <= tol else Verdict.FAIL,
        gap=gap,
        worst_interval=worst,
        treatment_share=share,
        tolerance=tol,
        skipped_intervals=skipped,
    )


def check_U_independence(
    p: PiecewiseAffine, dist: Cdf, U: OutcomeInterval, tol: float = CHECK_TOL
) -> IndependenceReport:
    """p equals P(X=1) almost everywhere on the outcome interval U"""
    if U.lo > U.hi:
        raise DomainError(f"interval U needs lo <= hi, got [{U.lo}, {U.hi}]")
    share = treatment_share(p, dist)
    gap, worst = 0.0, None
    left = np.maximum(p.los, U.lo)
    right = np.minimum(p.his, U.hi)
    for i in np.flatnonzero(right > left):
        # only pieces carrying probability mass inside U matter
        if dist.evaluate(right[i]) - dist.evaluate(left[i]) <= 1e-12:
            continue
        ends = np.array([left[i], right[i]])
        values = p._affine(np.array([i, i]), ends)
        piece_gap = float(np.max(np.abs(values - share)))
        if piece_gap > gap:
            gap, worst = piece_gap, (float(left[i]), float(right[i]))
    return IndependenceReport(
        assumption=f"U-independence on [{U.lo:g}, {U.hi:g}]",
        verdict=Verdict.PASS if gap <= tol else Verdict.FAIL,
        gap=gap,
        worst_interval=worst,
        treatment_share=share,
        tolerance=tol,
    )


def check_mean_independence(p: PiecewiseAffine, dist: Cdf, tol: float = CHECK_TOL) -> IndependenceReport:
    share = treatment_share(p, dist)
    expectation = dist.mean()
    if not np.isfinite(expectation):
        raise DomainError("mean independence needs a finite outcome mean")
    if abs(expectation) <= 1e-12:
        return IndependenceReport(
            assumption="mean independence",
            verdict=Verdict.UNDEFINED,
            gap=float("nan"),
            treatment_share=share,
            tolerance=tol,
            message="undefined: E[Y] = 0, renormalize outcome",
        )
    weighted = weighted_share(p, dist)
    gap = abs(weighted - share)
    return IndependenceReport(
        assumption="mean independence",
        verdict=Verdict.PASS if gap <= tol else Verdict.FAIL,
        gap=gap,
        treatment_share=share,
        tolerance=tol,
        message=f"weighted value {weighted:.12g}",
    )


def count_direction_changes(p: PiecewiseAffine) -> int:
    """
    Largest K such that the domain splits into K intervals on each of which p
    is not monotone.

    Each pair of adjacent opposite runs is a turning point. Two consecutive
    turning points need separate intervals unless the run between them is a
    single jump, which only one interval can hold; turning points are kept
    greedily from the left.
    """
    runs = p.runs()
    kept, last = 0, None
    for i in range(len(runs) - 1):
        _, start, end = runs[i]
        if last == i - 1 and end <= start:
            continue
        kept, last = kept + 1, i
    return kept


def is_monotone_nonconstant(p: PiecewiseAffine) -> bool:
    return len(p.runs()) == 1


def check_regression_dependence(
    family: Mapping[float, Union[Cdf, Sequence[float]]],
    x_grid: Optional[Sequence[float]] = None,
    tol: float = 1e-12,
) -> bool:
    """
    True when P(X > x | U = u) is monotone in u, in one direction for all x.

    Family members are either cdfs of X given U=u, evaluated on ``x_grid``, or
    arrays of cdf values on a shared grid.
    """
    if not family:
        raise DomainError("regression dependence needs at least one conditional")
    us = sorted(family)
    rows = []
    for u in us:
        member = family[u]
        if isinstance(member, Cdf):
            if x_grid is None:
                raise DomainError("x_grid is required for cdf family members")
            rows.append(1.0 - np.asarray(member.evaluate(np.asarray(x_grid, dtype=float)), dtype=float))
        else:
            rows.append(1.0 - np.asarray(member, dtype=float))
    lengths = {row.size for row in rows}
    if len(lengths) != 1 or (x_grid is not None and lengths != {len(x_grid)}):
        raise DomainError("conditionals are given on inconsistent grids")
    survival = np.vstack(rows)
    steps = np.diff(survival, axis=0)
    return bool(np.all(steps >= -tol) or np.all(steps <= tol))


def _tabulate_survival(func: Callable[[float, float], float], x: float, dist_u: Cdf) -> PropensityScore:
    if not (np.isfinite(dist_u.lower) and np.isfinite(dist_u.upper)):
        raise DomainError("tabulating a survival function needs a bounded U support")
    us = np.linspace(dist_u.lower, dist_u.upper, ROY_KNOTS)
    values = np.clip([func(x, u) for u in us], 0.0, 1.0)
    return PropensityScore.from_knots(us, values)


def check_T_independence_general_X(
    conditional_survival: Union[Mapping[float, PiecewiseAffine], Callable[[float, float], float]],
    x_grid: Sequence[float],
    dist_U: Optional[Cdf] = None,
    T: TSet = (0.5,),
    tol: float = CHECK_TOL,
) -> IndependenceReport:
    """
    Reduce a multivalued treatment to the indicators 1(X > x) and run the
    binary check for each x.

    ``conditional_survival`` maps x to the score u -> P(X > x | U = u), or is a
    callable (x, u) -> P(X > x | U = u) that gets tabulated on U's support.
    """
    x_values = [float(x) for x in x_grid]
    if not x_values:
        raise DomainError("x_grid must not be empty")
    dist_U = dist_U or uniform_cdf()

    reports: Dict[float, IndependenceReport] = {}
    for x in x_values:
        if isinstance(conditional_survival, Mapping):
            score = conditional_survival[x]
        else:
            score = _tabulate_survival(conditional_survival, x, dist_U)
        reports[x] = check_T_independence(score, dist_U, T, tol)

    failing = [x for x, report in reports.items() if not report.passed]
    worst_x = max(reports, key=lambda x: reports[x].gap)
    worst = reports[worst_x]
    return IndependenceReport(
        assumption=f"{_t_label(T)} for 1(X > x), x in {x_values}",
        verdict=Verdict.FAIL if failing else Verdict.PASS,
        gap=worst.gap,
        worst_interval=worst.worst_interval,
        treatment_share=worst.treatment_share,
        tolerance=tol,
        skipped_intervals=sum(r.skipped_intervals for r in reports.values()),
        failing_x=failing,
        message=f"largest gap at x = {worst_x:g}",
    )
