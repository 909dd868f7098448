"""
Independent checks of the analytic bounds: brute-force extremal cdfs over
discretized propensity scores, explicit witnesses attaining the bounds, and
a simulator for the joint law of (outcome, treatment).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize

from exobounds.bounds import rank_bound_knots, rank_cdf_bounds
from exobounds.dist import Cdf, uniform_cdf
from exobounds.exceptions import DomainError, OracleError
from exobounds.schemas import AssumptionKind
from exobounds.selection import PiecewiseAffine, PropensityScore, treatment_share
from exobounds.settings import PROB_TOL

logger = logging.getLogger(__name__)

Sense = Literal["min", "max"]

DEFAULT_U_GRID = np.linspace(0.0, 1.0, 21)


@dataclass(frozen=True)
class DiscretizedProblem:
    """
    Scores constant on the n cells ((i-1)/n, i/n] of the rank scale.

    The assumption interval is snapped to the grid.
    """

    n: int
    p1: float
    kind: AssumptionKind
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("grid size must be positive")
        if not 0.0 < self.p1 < 1.0:
            raise DomainError(f"p1 must lie in (0, 1), got {self.p1}")
        if not 0.0 <= self.a <= self.b <= 1.0:
            raise DomainError(f"need 0 <= a <= b <= 1, got [{self.a}, {self.b}]")

    @property
    def ka(self) -> int:
        return 0 if self.kind is AssumptionKind.FULL else int(round(self.a * self.n))

    @property
    def kb(self) -> int:
        return self.n if self.kind is AssumptionKind.FULL else int(round(self.b * self.n))

    def fixed_cells(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        if self.kind is not AssumptionKind.NONE:
            mask[self.ka:self.kb] = True
        return mask

    def pools(self) -> List[Tuple[np.ndarray, float]]:
        """Free cells grouped by the budget their values must sum to"""
        left = np.arange(0, self.ka)
        right = np.arange(self.kb, self.n)
        if self.kind is AssumptionKind.NONE:
            return [(np.arange(self.n), self.n * self.p1)]
        if self.kind is AssumptionKind.U:
            cells = np.concatenate([left, right])
            return [(cells, cells.size * self.p1)]
        return [(left, left.size * self.p1), (right, right.size * self.p1)]

    def constraints(self) -> Tuple[np.ndarray, np.ndarray]:
        """Equality system A p = rhs, including the marginal row"""
        rows = [np.full(self.n, 1.0 / self.n)]
        rhs = [self.p1]
        if self.kind is AssumptionKind.T:
            for k in range(max(self.ka, 1), min(self.kb, self.n - 1) + 1):
                row = np.zeros(self.n)
                row[:k] = 1.0
                rows.append(row)
                rhs.append(k * self.p1)
        elif self.kind in (AssumptionKind.U, AssumptionKind.FULL):
            for i in np.flatnonzero(self.fixed_cells()):
                row = np.zeros(self.n)
                row[i] = 1.0
                rows.append(row)
                rhs.append(self.p1)
        return np.vstack(rows), np.array(rhs)

    def objective(self, u: float) -> np.ndarray:
        """Weights w with F_{U|X}(u|1) = w . p / (n p1)"""
        return np.clip(u * self.n - np.arange(self.n), 0.0, 1.0)


def _greedy(prob: DiscretizedProblem, sense: Sense) -> np.ndarray:
    values = np.where(prob.fixed_cells(), prob.p1, 0.0)
    for cells, budget in prob.pools():
        # objective weights are nonincreasing in the cell index
        order = cells if sense == "max" else cells[::-1]
        values[order] = np.clip(budget - np.arange(order.size), 0.0, 1.0)
    return values


def _linprog(prob: DiscretizedProblem, u: float, sense: Sense) -> np.ndarray:
    weights = prob.objective(u)
    A_eq, b_eq = prob.constraints()
    sign = -1.0 if sense == "max" else 1.0
    res = optimize.linprog(sign * weights, A_eq=A_eq, b_eq=b_eq, bounds=(0.0, 1.0), method="highs")
    if not res.success:
        raise OracleError(f"extremal LP failed (status {res.status}): {res.message}")
    return res.x


def lp_extremal_cdf(
    prob: DiscretizedProblem,
    u: float,
    sense: Sense,
    method: Literal["greedy", "linprog"] = "greedy",
) -> float:
    """Extreme value of F_{U|X}(u|1) over all admissible discretized scores"""
    if sense not in ("min", "max"):
        raise DomainError(f"sense must be 'min' or 'max', got {sense!r}")
    if method == "greedy":
        values = _greedy(prob, sense)
    elif method == "linprog":
        values = _linprog(prob, u, sense)
    else:
        raise DomainError(f"unknown method {method!r}")
    A_eq, b_eq = prob.constraints()
    if np.max(np.abs(A_eq @ values - b_eq)) > 1e-7:
        raise OracleError("extremal score violates the equality constraints")
    return float(prob.objective(u) @ values / (prob.n * prob.p1))


def oracle_max_gap(
    n: int,
    kind: AssumptionKind,
    a: float,
    b: float,
    p1: float,
    u_grid: Sequence[float] = DEFAULT_U_GRID,
    method: Literal["greedy", "linprog"] = "greedy",
) -> float:
    """Largest distance between LP extremes and the analytic bounds on a u-grid"""
    prob = DiscretizedProblem(n=n, p1=p1, kind=AssumptionKind(kind), a=a, b=b)
    lower, upper = rank_cdf_bounds(prob.kind, a, b, p1)
    gap = 0.0
    for u in u_grid:
        gap = max(
            gap,
            abs(lp_extremal_cdf(prob, u, "max", method) - float(upper.evaluate(u))),
            abs(lp_extremal_cdf(prob, u, "min", method) - float(lower.evaluate(u))),
        )
    logger.info(f"Oracle {prob.kind.value} n={n} p1={p1} [{a}, {b}]: max gap {gap:.3g}")
    return gap


def oracle_suite(
    ns: Sequence[int] = (100, 200, 400),
    kinds: Sequence[AssumptionKind] = (AssumptionKind.T, AssumptionKind.U),
    p1s: Sequence[float] = (0.25, 0.5, 0.75),
    intervals: Sequence[Tuple[float, float]] = ((0.25, 0.75), (0.1, 0.9), (0.4, 0.4)),
    jobs: int = 1,
) -> List[Dict]:
    """Run the comparison over the full configuration grid"""
    configs = [
        (n, AssumptionKind(kind), p1, a, b)
        for kind in kinds
        for p1 in p1s
        for a, b in intervals
        for n in ns
    ]

    def run(config):
        n, kind, p1, a, b = config
        gap = oracle_max_gap(n, kind, a, b, p1)
        return {
            "n": n,
            "kind": kind.value,
            "p1": p1,
            "a": a,
            "b": b,
            "max_gap": gap,
            "tolerance": 2.0 / n,
            "passed": gap <= 2.0 / n,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, configs))
    return [run(config) for config in configs]


# Sharpness witnesses


def _step_score(base: Cdf, ranks: Sequence[float], values: Sequence[float]) -> PropensityScore:
    """Step score taking values[i] on base outcomes with ranks in [ranks[i], ranks[i+1])"""
    ranks = np.asarray(ranks, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.diff(ranks) > 1e-14
    edges = np.concatenate([ranks[:-1][keep], [ranks[-1]]])
    breaks = np.asarray(base.quantile(np.clip(edges, 0.0, 1.0)), dtype=float)
    return PropensityScore.step(breaks, np.clip(values[keep], 0.0, 1.0))


def score_from_rank_bound(knots: Tuple[np.ndarray, np.ndarray], p_x: float, base: Cdf) -> PropensityScore:
    """
    Invert F_{U|X}(u|x) = integral of P(X=x|U)/p_x dF_U: the score is p_x
    times the slope of the rank-scale bound.
    """
    ranks, values = knots
    slopes = np.diff(values) / np.diff(ranks)
    return _step_score(base, ranks, p_x * slopes)


def _u_upper_witness(A: float, B: float, p: float, base: Cdf) -> PropensityScore:
    D = B - A
    c = 1.0 - D
    if c * p <= A + 1e-12:
        return _step_score(base, [0.0, c * p, A, B, 1.0], [1.0, 0.0, p, 0.0])
    return _step_score(base, [0.0, A, B, D * (1 - p) + p, 1.0], [1.0, p, 1.0, 0.0])


def _u_lower_witness(A: float, B: float, p: float, base: Cdf) -> PropensityScore:
    D = B - A
    c = 1.0 - D
    if c * (1 - p) <= A + 1e-12:
        return _step_score(base, [0.0, c * (1 - p), A, B, 1.0], [0.0, 1.0, p, 1.0])
    return _step_score(base, [0.0, A, B, p * D + 1 - p, 1.0], [0.0, p, 0.0, 1.0])


def sharpness_witness(
    kind: AssumptionKind,
    a: float,
    b: float,
    p_x: float,
    eps: float,
    base: Optional[Cdf] = None,
) -> Tuple[PropensityScore, PropensityScore]:
    """
    Scores (P(X=1|U), P(X=0|U)) whose induced F_{U|X}(.|1) is the mixture
    eps * lower + (1 - eps) * upper of the sharp cdf bounds.

    ``a`` and ``b`` are in outcome units of ``base`` (Unif[0,1] by default).
    """
    kind = AssumptionKind(kind)
    if kind not in (AssumptionKind.T, AssumptionKind.U):
        raise DomainError("witnesses are built for T- and U-independence")
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps must lie in [0, 1], got {eps}")
    if not 0.0 < p_x < 1.0:
        raise DomainError(f"p_x must lie in (0, 1), got {p_x}")
    base = base or uniform_cdf()
    A, B = float(base.evaluate(a)), float(base.evaluate(b))

    if kind is AssumptionKind.T:
        lower_knots, upper_knots = rank_bound_knots(kind, A, B, p_x)
        lower = score_from_rank_bound(lower_knots, p_x, base)
        upper = score_from_rank_bound(upper_knots, p_x, base)
    else:
        lower = _u_lower_witness(A, B, p_x, base)
        upper = _u_upper_witness(A, B, p_x, base)
    treated = lower.mix(upper, eps)
    return treated, treated.complement()


# Simulation


@dataclass(frozen=True)
class SimulatedData:
    y: np.ndarray
    x: np.ndarray
    seed: Optional[int] = None

    def arm(self, treated: int) -> np.ndarray:
        return self.y[self.x == treated]

    def to_frame(self, outcome: str = "y", treatment: str = "x") -> pd.DataFrame:
        return pd.DataFrame({outcome: self.y, treatment: self.x.astype(int)})


def simulate_joint(p: PiecewiseAffine, dist: Cdf, n: int, seed: Optional[int] = None) -> SimulatedData:
    """Draw Y ~ dist by inversion and X ~ Bernoulli(p(Y)) with a PCG64 stream"""
    if n < 1:
        raise DomainError("sample size must be at least 1")
    share = treatment_share(p, dist)
    if share <= PROB_TOL or share >= 1.0 - PROB_TOL:
        logger.warning(f"Treatment share {share:.3g} leaves one arm empty")
    rng = np.random.default_rng(seed)
    y = np.asarray(dist.quantile(rng.random(n)), dtype=float)
    x = (rng.random(n) < p.evaluate(y)).astype(np.int64)
    logger.info(f"Simulated {n} draws, {int(x.sum())} treated (seed={seed})")
    return SimulatedData(y=y, x=x, seed=seed)
