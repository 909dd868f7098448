"""
Sharp bounds under T- and U-independence.

Cdf bounds are derived on the rank scale, where each one is a piecewise-linear
cdf G with F_bound(u) = G(F_U(u)); they are returned composed with F_U.
Quantile and mean bounds for Y0 given X=1 are expressed in the observed
quantile function of Y given X=0.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from exobounds.dist import Cdf, ComposedCdf, PiecewiseLinearCdf
from exobounds.exceptions import DomainError, ExoboundsError, OverlapError
from exobounds.schemas import (
    AssumptionKind,
    AssumptionSpec,
    BoundCurve,
    BoundInterval,
    BreakdownResult,
    ParamKind,
    TreatmentMarginal,
)

logger = logging.getLogger(__name__)

QuantileInput = Union[Cdf, Callable[[float], float]]
Knots = Tuple[np.ndarray, np.ndarray]

# Case inequalities closer than this are treated as equalities
_CASE_TOL = 1e-12

BREAKDOWN_RESOLUTION = 1e-4
GRID_SCAN_POINTS = 5001


def _share(p_x: Union[float, TreatmentMarginal]) -> float:
    p = p_x.p1 if isinstance(p_x, TreatmentMarginal) else float(p_x)
    if not 0.0 < p < 1.0:
        raise OverlapError(f"treatment share must lie strictly between 0 and 1, got {p}")
    return p


def _agree(x: float, y: float, tol: float = 1e-9) -> bool:
    if x == y:
        return True
    return abs(x - y) <= tol * max(1.0, abs(x), abs(y))


def _clean_knots(xs: Sequence[float], vs: Sequence[float]) -> Knots:
    """Clip to the unit square and merge coincident knots"""
    xs = np.maximum.accumulate(np.clip(np.asarray(xs, dtype=float), 0.0, 1.0))
    vs = np.clip(np.asarray(vs, dtype=float), 0.0, 1.0)
    keep_x, keep_v = [xs[0]], [vs[0]]
    for x, v in zip(xs[1:], vs[1:]):
        if x - keep_x[-1] <= 1e-14:
            keep_v[-1] = max(keep_v[-1], v)
        else:
            keep_x.append(x)
            keep_v.append(v)
    keep_x[0], keep_x[-1] = 0.0, 1.0
    return np.array(keep_x), np.array(keep_v)


def _check_case_agreement(first: Knots, second: Knots, what: str) -> None:
    grid = np.union1d(first[0], second[0])
    gap = np.max(np.abs(np.interp(grid, *first) - np.interp(grid, *second)))
    if gap > 1e-9:
        raise ExoboundsError(f"{what} case formulas disagree at the case boundary (gap {gap:.3g})")


def _t_knots(A: float, B: float, p: float) -> Tuple[Knots, Knots]:
    lower = _clean_knots([0.0, (1 - p) * A, A, B, p * B + 1 - p, 1.0], [0.0, 0.0, A, B, B, 1.0])
    upper = _clean_knots([0.0, p * A, A, B, p + B * (1 - p), 1.0], [0.0, A, A, B, 1.0, 1.0])
    return lower, upper


def _u_lower_knots(A: float, B: float, p: float) -> Knots:
    D = B - A
    c = 1.0 - D
    first = _clean_knots(
        [0.0, c * (1 - p), A, B, 1.0],
        [0.0, 0.0, (A - c * (1 - p)) / p, (B - 1) * (1 - p) / p + B, 1.0],
    )
    second = _clean_knots([0.0, A, B, p * D + 1 - p, 1.0], [0.0, 0.0, D, D, 1.0])
    lhs = c * (1 - p)
    if abs(lhs - A) <= _CASE_TOL:
        _check_case_agreement(first, second, "U lower bound")
        return first
    return first if lhs < A else second


def _u_upper_knots(A: float, B: float, p: float) -> Knots:
    D = B - A
    c = 1.0 - D
    first = _clean_knots([0.0, c * p, A, B, 1.0], [0.0, c, c, 1.0, 1.0])
    second = _clean_knots([0.0, A, B, D * (1 - p) + p, 1.0], [0.0, A / p, A / p + D, 1.0, 1.0])
    lhs = c * p
    if abs(lhs - A) <= _CASE_TOL:
        _check_case_agreement(first, second, "U upper bound")
        return first
    return first if lhs < A else second


def rank_bound_knots(kind: AssumptionKind, A: float, B: float, p: float) -> Tuple[Knots, Knots]:
    """
    Knots of the (lower, upper) bounds on F_{R|X}(r|x) for ranks r in [0, 1],
    where [A, B] is the assumption interval on the rank scale and p = P(X=x).
    """
    p = _share(p)
    if not 0.0 <= A <= B <= 1.0:
        raise DomainError(f"rank interval needs 0 <= A <= B <= 1, got [{A}, {B}]")
    kind = AssumptionKind(kind)
    if kind is AssumptionKind.FULL:
        identity = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        return identity, identity
    if kind is AssumptionKind.NONE:
        return (
            _clean_knots([0.0, 1 - p, 1.0], [0.0, 0.0, 1.0]),
            _clean_knots([0.0, p, 1.0], [0.0, 1.0, 1.0]),
        )
    if kind is AssumptionKind.T:
        return _t_knots(A, B, p)
    return _u_lower_knots(A, B, p), _u_upper_knots(A, B, p)


def rank_cdf_bounds(
    kind: AssumptionKind, A: float, B: float, p: float
) -> Tuple[PiecewiseLinearCdf, PiecewiseLinearCdf]:
    lower, upper = rank_bound_knots(kind, A, B, p)
    return PiecewiseLinearCdf(*lower), PiecewiseLinearCdf(*upper)


def _outcome_ranks(F_U: Cdf, a: float, b: float) -> Tuple[float, float]:
    if a > b:
        raise DomainError(f"a must not exceed b, got a={a}, b={b}")
    if a < F_U.lower - 1e-12 or b > F_U.upper + 1e-12:
        raise DomainError(f"[{a}, {b}] is not inside the support [{F_U.lower}, {F_U.upper}]")
    return float(F_U.evaluate(a)), float(F_U.evaluate(b))


def _composed_bounds(kind: AssumptionKind, F_U: Cdf, p_x: float, a: float, b: float):
    A, B = _outcome_ranks(F_U, a, b)
    lower, upper = rank_cdf_bounds(kind, A, B, p_x)
    return ComposedCdf(lower, F_U), ComposedCdf(upper, F_U)


def cdf_bounds_T(F_U: Cdf, p_x: float, a: float, b: float) -> Tuple[ComposedCdf, ComposedCdf]:
    """Sharp (lower, upper) bounds on F_{U|X}(.|x) when T = [a, b] in outcome units"""
    return _composed_bounds(AssumptionKind.T, F_U, p_x, a, b)


def cdf_bounds_U(F_U: Cdf, p_x: float, a: float, b: float) -> Tuple[ComposedCdf, ComposedCdf]:
    """Sharp (lower, upper) bounds on F_{U|X}(.|x) when U = [a, b] in outcome units"""
    return _composed_bounds(AssumptionKind.U, F_U, p_x, a, b)


def cdf_bounds_none(F_U: Cdf, p_x: float) -> Tuple[ComposedCdf, ComposedCdf]:
    """No-assumption envelopes max(1 + (F - 1)/p, 0) and min(F/p, 1)"""
    return _composed_bounds(AssumptionKind.NONE, F_U, p_x, F_U.lower, F_U.upper)


# Quantile bounds


def _quantile_function(Q_cond: QuantileInput) -> Callable[[float], float]:
    if isinstance(Q_cond, Cdf):
        return lambda t: float(Q_cond.quantile(min(max(t, 0.0), 1.0)))
    if callable(Q_cond):
        return lambda t: float(Q_cond(min(max(t, 0.0), 1.0)))
    raise DomainError("Q_cond must be a Cdf or a quantile function")


def _interval_of(assn: AssumptionSpec) -> Tuple[float, float]:
    if assn.kind is AssumptionKind.NONE:
        return 0.0, 0.0
    return float(assn.a), float(assn.b)


def _u_quantile_lower(Q, tau: float, a: float, b: float, p1: float, p0: float) -> float:
    D = b - a

    def first() -> float:
        return Q(0.0) if tau <= 1 - D else Q(tau + (b - 1) / p0)

    def second() -> float:
        if tau <= a / p1:
            return Q(0.0)
        if tau <= a / p1 + D:
            return Q(tau - a / p1)
        return Q(D)

    lhs = (1 - D) * p1
    if abs(lhs - a) <= _CASE_TOL:
        value, other = first(), second()
        if not _agree(value, other):
            raise ExoboundsError(f"U lower quantile cases disagree at tau={tau}: {value} vs {other}")
        return value
    return first() if lhs < a else second()


def _u_quantile_upper(Q, tau: float, a: float, b: float, p1: float, p0: float) -> float:
    D = b - a

    def first() -> float:
        shift = (1 - b) / p1
        if tau <= 1 - D - shift:
            return Q(1 - D)
        if tau <= 1 - shift:
            return Q(tau + shift)
        return Q(1.0)

    def second() -> float:
        return Q(tau + a / p0) if tau <= D else Q(1.0)

    lhs = (1 - D) * p0
    if abs(lhs - a) <= _CASE_TOL:
        value, other = first(), second()
        if not _agree(value, other):
            raise ExoboundsError(f"U upper quantile cases disagree at tau={tau}: {value} vs {other}")
        return value
    return first() if lhs < a else second()


def quantile_bounds_Y0(
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
    tau: float,
) -> BoundInterval:
    """
    Bounds on Q_{Y0|X}(tau|1) given the observed quantile function of Y given X=0.

    Under T the point-identified branch is closed at tau = a; the open-branch
    upper value Q(a) coincides there, so only the lower end jumps from Q(0).
    """
    p1 = _share(marg)
    p0 = 1.0 - p1
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    Q = _quantile_function(Q_cond)
    a, b = _interval_of(assn)

    if assn.kind is AssumptionKind.FULL:
        return BoundInterval(lower=Q(tau), upper=Q(tau))
    if assn.kind is AssumptionKind.NONE:
        return BoundInterval(lower=Q(0.0), upper=Q(1.0))
    if assn.kind is AssumptionKind.T:
        # tau in [a, b] is point identified
        if tau < a:
            return BoundInterval(lower=Q(0.0), upper=Q(a))
        if tau <= b:
            return BoundInterval(lower=Q(tau), upper=Q(tau))
        return BoundInterval(lower=Q(b), upper=Q(1.0))
    return BoundInterval(
        lower=_u_quantile_lower(Q, tau, a, b, p1, p0),
        upper=_u_quantile_upper(Q, tau, a, b, p1, p0),
    )


def quantile_bounds_by_composition(
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
    tau: float,
) -> BoundInterval:
    """
    Same bounds computed through the ranks: invert the rank-scale cdf bound
    for X=1 at tau, map it to F_{R|X}(r|0) = (r - p1 tau) / p0 and read off
    the observed quantile function there.
    """
    p1 = _share(marg)
    p0 = 1.0 - p1
    Q = _quantile_function(Q_cond)
    a, b = _interval_of(assn)
    lower_rank, upper_rank = rank_cdf_bounds(assn.kind, a, b, p1)

    def observed(r: float) -> float:
        return Q(min(max((r - p1 * tau) / p0, 0.0), 1.0))

    return BoundInterval(
        lower=observed(float(upper_rank.quantile(tau))),
        upper=observed(float(lower_rank.quantile(tau))),
    )


# Mean bounds


def _quantile_integral(Q_cond: QuantileInput, s: float, t: float) -> float:
    s, t = min(max(s, 0.0), 1.0), min(max(t, 0.0), 1.0)
    if t <= s:
        return 0.0
    if isinstance(Q_cond, Cdf):
        return Q_cond.quantile_integral(s, t)
    value, _ = integrate.quad(lambda u: float(Q_cond(u)), s, t, limit=200)
    return value


def _term(coef: float, value: float) -> float:
    """coef * value with 0 * inf taken as 0"""
    return 0.0 if abs(coef) <= 1e-15 else coef * value


def _u_mean_lower(Q, Q_cond, a: float, b: float, p1: float, p0: float) -> float:
    D = b - a

    def first() -> float:
        shift = (b - 1) / p0
        return _term(1 - D, Q(0.0)) + _quantile_integral(Q_cond, 1 - D + shift, 1 + shift)

    def second() -> float:
        return (
            _term(a / p1, Q(0.0))
            + _quantile_integral(Q_cond, 0.0, D)
            + _term(1 - D - a / p1, Q(D))
        )

    lhs = (1 - D) * p1
    if abs(lhs - a) <= _CASE_TOL:
        value, other = first(), second()
        if not _agree(value, other):
            raise ExoboundsError(f"U lower mean cases disagree: {value} vs {other}")
        return value
    return first() if lhs < a else second()


def _u_mean_upper(Q, Q_cond, a: float, b: float, p1: float, p0: float) -> float:
    D = b - a

    def first() -> float:
        tail = (1 - b) / p1
        return _term(1 - D - tail, Q(1 - D)) + _quantile_integral(Q_cond, 1 - D, 1.0) + _term(tail, Q(1.0))

    def second() -> float:
        return _quantile_integral(Q_cond, a / p0, D + a / p0) + _term(1 - D, Q(1.0))

    lhs = (1 - D) * p0
    if abs(lhs - a) <= _CASE_TOL:
        value, other = first(), second()
        if not _agree(value, other):
            raise ExoboundsError(f"U upper mean cases disagree: {value} vs {other}")
        return value
    return first() if lhs < a else second()


def mean_bounds_Y0(
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
) -> BoundInterval:
    """Closed-form bounds on E(Y0 | X=1), the integrals of the quantile bounds"""
    p1 = _share(marg)
    p0 = 1.0 - p1
    Q = _quantile_function(Q_cond)
    a, b = _interval_of(assn)

    if assn.kind is AssumptionKind.FULL:
        value = _quantile_integral(Q_cond, 0.0, 1.0)
        return BoundInterval(lower=value, upper=value)
    if assn.kind is AssumptionKind.NONE:
        return BoundInterval(lower=Q(0.0), upper=Q(1.0))
    if assn.kind is AssumptionKind.T:
        middle = _quantile_integral(Q_cond, a, b)
        upper = _term(a, Q(a)) + middle + _term(1 - b, Q(1.0))
        lower = _term(a, Q(0.0)) + middle + _term(1 - b, Q(b))
        return BoundInterval(lower=lower, upper=upper)
    return BoundInterval(
        lower=_u_mean_lower(Q, Q_cond, a, b, p1, p0),
        upper=_u_mean_upper(Q, Q_cond, a, b, p1, p0),
    )


def _quantile_breakpoints(assn: AssumptionSpec, p1: float) -> List[float]:
    a, b = _interval_of(assn)
    D = b - a
    points = [a, b, D, 1 - D, a / p1, a / p1 + D, 1 - D - (1 - b) / p1, 1 - (1 - b) / p1]
    return sorted({t for t in points if 0.0 < t < 1.0})


def integrate_quantile_bounds(
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
    points: int = 10_000,
    tail: float = 0.0,
) -> BoundInterval:
    """
    Trapezoid integral of the quantile bounds over tau in [tail, 1 - tail].

    Branch points are added to the grid from both sides, so piecewise-linear
    quantile functions integrate without discretization error.
    """
    p1 = _share(marg)
    grid = set(np.linspace(tail, 1.0 - tail, points + 1).tolist())
    for t in _quantile_breakpoints(assn, p1):
        grid.update({t - 1e-12, t, t + 1e-12})
    taus = np.array(sorted(t for t in grid if tail <= t <= 1.0 - tail))
    bounds = [quantile_bounds_Y0(assn, Q_cond, p1, float(t)) for t in taus]
    lowers = np.array([iv.lower for iv in bounds])
    uppers = np.array([iv.upper for iv in bounds])
    return BoundInterval(
        lower=float(integrate.trapezoid(lowers, taus)),
        upper=float(integrate.trapezoid(uppers, taus)),
    )


# Treatment effects on the treated


def att_identified_set(
    obs_mean_treated: float,
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
) -> BoundInterval:
    """E(Y|X=1) minus the reversed bounds on E(Y0|X=1)"""
    if not np.isfinite(obs_mean_treated):
        raise DomainError("observed treated mean must be finite")
    return mean_bounds_Y0(assn, Q_cond, marg).subtract_from(obs_mean_treated)


def qtt_identified_set(
    q: float,
    obs_quantile_treated: float,
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
) -> BoundInterval:
    """Q_{Y|X}(q|1) minus the reversed bounds on Q_{Y0|X}(q|1)"""
    if not np.isfinite(obs_quantile_treated):
        raise DomainError("observed treated quantile must be finite")
    return quantile_bounds_Y0(assn, Q_cond, marg, q).subtract_from(obs_quantile_treated)


# Curves and breakdown points


def tau_curve(
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
    taus: Sequence[float],
) -> BoundCurve:
    intervals = [quantile_bounds_Y0(assn, Q_cond, marg, float(t)) for t in taus]
    return BoundCurve(
        index=[float(t) for t in taus],
        intervals=intervals,
        param="quantile-Y0",
        kind=assn.kind,
        index_name="tau",
    )


def delta_curve(
    kind: AssumptionKind,
    deltas: Sequence[float],
    bound: Callable[[AssumptionSpec], BoundInterval],
    param: str,
) -> BoundCurve:
    """Evaluate ``bound`` along the nested family [delta, 1 - delta]"""
    intervals = [bound(AssumptionSpec.from_delta(kind, float(d))) for d in deltas]
    return BoundCurve(
        index=[float(d) for d in deltas],
        intervals=intervals,
        param=param,
        kind=kind,
        index_name="delta",
    )


def default_delta_grid(points: int = 101) -> np.ndarray:
    return np.linspace(0.0, 0.5, points)


def parameter_bound(
    param: ParamKind,
    assn: AssumptionSpec,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
    q: Optional[float] = None,
    observed: Optional[float] = None,
) -> BoundInterval:
    """
    Identified set of one target parameter. ``q`` is the quantile index for
    quantile-Y0 and qtt; ``observed`` is the treated-arm mean (att) or
    q-quantile (qtt).
    """
    param = ParamKind(param)
    if param in (ParamKind.QUANTILE_Y0, ParamKind.QTT) and q is None:
        raise DomainError(f"{param.value} needs a quantile index q")
    if param in (ParamKind.ATT, ParamKind.QTT) and observed is None:
        raise DomainError(f"{param.value} needs the observed treated-arm value")
    if param is ParamKind.MEAN_Y0:
        return mean_bounds_Y0(assn, Q_cond, marg)
    if param is ParamKind.QUANTILE_Y0:
        return quantile_bounds_Y0(assn, Q_cond, marg, q)
    if param is ParamKind.ATT:
        return att_identified_set(observed, assn, Q_cond, marg)
    return qtt_identified_set(q, observed, assn, Q_cond, marg)


def parameter_label(param: ParamKind, q: Optional[float] = None) -> str:
    param = ParamKind(param)
    if param in (ParamKind.QUANTILE_Y0, ParamKind.QTT):
        return f"{param.value}({q:g})"
    return param.value


def bound_curve(
    param: ParamKind,
    kind: AssumptionKind,
    Q_cond: QuantileInput,
    marg: Union[TreatmentMarginal, float],
    grid: Sequence[float],
    index_name: str = "delta",
    q: Optional[float] = None,
    observed: Optional[float] = None,
    assn: Optional[AssumptionSpec] = None,
) -> BoundCurve:
    """
    Bounds of one parameter along a grid: over delta for the nested family
    [delta, 1 - delta], or over tau for quantile-Y0 under a fixed ``assn``.
    """
    if index_name == "tau":
        if assn is None:
            raise DomainError("a tau curve needs a fixed assumption")
        return tau_curve(assn, Q_cond, marg, grid)
    if index_name != "delta":
        raise DomainError(f"curves are indexed by tau or delta, got {index_name!r}")
    return delta_curve(
        kind,
        grid,
        lambda spec: parameter_bound(param, spec, Q_cond, marg, q=q, observed=observed),
        parameter_label(param, q),
    )


def breakdown_point(
    curve: Callable[[float], float],
    threshold: float = 0.0,
    resolution: float = BREAKDOWN_RESOLUTION,
    check_points: int = 51,
) -> BreakdownResult:
    """
    sup{delta in [0, 0.5] : LB(delta) >= threshold} for a lower-bound curve
    that is nonincreasing in delta, located by bisection.
    """
    grid = np.linspace(0.0, 0.5, check_points)
    values = np.array([curve(float(d)) for d in grid])
    if values[0] < threshold:
        return BreakdownResult(delta=0.0, threshold=threshold, flag="fails at point identification")
    with np.errstate(invalid="ignore"):
        rises = np.diff(values) > 1e-9 * np.maximum(1.0, np.abs(values[:-1]))
    if np.any(rises):
        where = float(grid[int(np.argmax(rises)) + 1])
        raise DomainError(f"lower bound curve increases in delta near {where:.4g}")
    if values[-1] >= threshold:
        return BreakdownResult(delta=0.5, threshold=threshold)

    k = int(np.flatnonzero(values >= threshold)[-1])
    lo, hi = float(grid[k]), float(grid[k + 1])
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if curve(mid) >= threshold:
            lo = mid
        else:
            hi = mid
    return BreakdownResult(delta=lo, threshold=threshold)


def breakdown_point_grid(
    curve: Callable[[float], float],
    threshold: float = 0.0,
    points: int = GRID_SCAN_POINTS,
) -> float:
    """Grid-scan counterpart of ``breakdown_point``"""
    grid = np.linspace(0.0, 0.5, points)
    values = np.array([curve(float(d)) for d in grid])
    holding = np.flatnonzero(values >= threshold)
    if values[0] < threshold or holding.size == 0:
        return 0.0
    failing = np.flatnonzero(values < threshold)
    last = holding[-1] if failing.size == 0 else failing[0] - 1
    return float(grid[last])
