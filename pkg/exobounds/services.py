from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np

from exobounds import io
from exobounds.bounds import bound_curve, parameter_bound, tau_curve
from exobounds.dist import Cdf, cdf_from_spec
from exobounds.estimate import ingest_csv, run_sensitivity
from exobounds.oracle import SimulatedData, oracle_max_gap, oracle_suite, simulate_joint
from exobounds.schemas import (
    AssumptionKind,
    AssumptionSpec,
    BoundCurve,
    BoundsRequest,
    BoundsResponse,
    CheckRequest,
    IndependenceReport,
    OracleRequest,
    OracleResponse,
    ParamKind,
    SensitivityResult,
    SplitRule,
)
from exobounds.selection import (
    OutcomeInterval,
    PropensityScore,
    check_mean_independence,
    check_T_independence,
)

logger = logging.getLogger(__name__)


class SelectionService:
    """Service class for classifying selection models"""

    @staticmethod
    def check(request: CheckRequest, dist: Optional[Cdf] = None) -> IndependenceReport:
        """Run the requested independence check on a propensity score"""
        score = PropensityScore.from_pieces(request.pieces)
        dist = dist or cdf_from_spec(request.dist)
        if request.mean:
            report = check_mean_independence(score, dist, request.tol)
        elif request.t_interval is not None:
            report = check_T_independence(score, dist, OutcomeInterval(*request.t_interval), request.tol)
        else:
            report = check_T_independence(score, dist, request.t_points, request.tol)
        logger.info(f"Checked {report.assumption}: {report.verdict.value} (gap {report.gap:.3g})")
        return report


class BoundsService:
    """Service class for identified sets and bound curves"""

    @staticmethod
    def _assumption(request: BoundsRequest) -> AssumptionSpec:
        return AssumptionSpec(kind=request.kind, a=request.a, b=request.b, delta=request.delta)

    @staticmethod
    def _observed(request: BoundsRequest) -> Optional[float]:
        if request.param is ParamKind.ATT:
            return request.obs_mean
        if request.param is ParamKind.QTT:
            return request.obs_quantile
        return None

    @staticmethod
    def _index(request: BoundsRequest) -> Optional[float]:
        return request.tau if request.param is ParamKind.QUANTILE_Y0 else request.q

    @staticmethod
    def compute(request: BoundsRequest, Q_cond: Optional[Cdf] = None) -> BoundsResponse:
        """Identified set of the requested parameter"""
        assn = BoundsService._assumption(request)
        Q_cond = Q_cond or cdf_from_spec(request.quantiles)
        interval = parameter_bound(
            request.param,
            assn,
            Q_cond,
            request.p1,
            q=BoundsService._index(request),
            observed=BoundsService._observed(request),
        )
        logger.info(f"Bounds for {request.param.value} under {assn.label()}: [{interval.lower}, {interval.upper}]")
        return BoundsResponse(param=request.param, assumption=assn, interval=interval)

    @staticmethod
    def curve(
        request: BoundsRequest,
        index_name: str = "delta",
        points: int = 101,
        Q_cond: Optional[Cdf] = None,
    ) -> BoundCurve:
        """Bounds along a delta grid on [0, 0.5], or a tau grid on [0, 1] for quantile-Y0"""
        Q_cond = Q_cond or cdf_from_spec(request.quantiles)
        if index_name == "tau":
            return tau_curve(BoundsService._assumption(request), Q_cond, request.p1, np.linspace(0.0, 1.0, points))
        return bound_curve(
            request.param,
            request.kind,
            Q_cond,
            request.p1,
            np.linspace(0.0, 0.5, points),
            q=BoundsService._index(request),
            observed=BoundsService._observed(request),
        )


class OracleService:
    """Service class for the LP oracle and simulation"""

    @staticmethod
    def compare(request: OracleRequest) -> OracleResponse:
        """LP extremes against the analytic cdf bounds for one configuration"""
        gap = oracle_max_gap(request.n, request.kind, request.a, request.b, request.p1, method=request.method)
        tolerance = 2.0 / request.n
        return OracleResponse(
            n=request.n,
            kind=request.kind,
            a=request.a,
            b=request.b,
            p1=request.p1,
            max_gap=gap,
            tolerance=tolerance,
            passed=gap <= tolerance,
        )

    @staticmethod
    def suite(jobs: int = 1) -> List[Dict]:
        """All kinds, shares, intervals and grid sizes of the agreement check"""
        results = oracle_suite(jobs=jobs)
        failed = [r for r in results if not r["passed"]]
        logger.info(f"Oracle suite: {len(results) - len(failed)} of {len(results)} configurations agree")
        return results

    @staticmethod
    def simulate(
        score: PropensityScore,
        dist: Cdf,
        n: int,
        seed: Optional[int] = None,
        out: Optional[Union[str, Path]] = None,
    ) -> SimulatedData:
        """Draw a dataset and optionally write it as CSV"""
        data = simulate_joint(score, dist, n, seed)
        if out is not None:
            io.write_frame(data.to_frame(), out)
            logger.info(f"Wrote simulated dataset to {out}")
        return data


class SensitivityService:
    """Service class for the estimation pipeline"""

    @staticmethod
    def run(
        data_path: Union[str, Path],
        config_path: Union[str, Path],
        out_dir: Optional[Union[str, Path]] = None,
        kinds: Sequence[AssumptionKind] = (AssumptionKind.T, AssumptionKind.U),
        rule: SplitRule = SplitRule.MEDIAN_SPLIT,
        quantiles: Sequence[float] = (0.5,),
        grid_size: int = 101,
        bandwidth: Optional[float] = None,
        jobs: int = 1,
    ) -> List[SensitivityResult]:
        """Ingest, partition, estimate and write the sensitivity results"""
        config = io.read_ingest_config(config_path)
        dataset = ingest_csv(data_path, config)
        results = run_sensitivity(
            dataset,
            kinds=kinds,
            out_dir=out_dir,
            rule=rule,
            deltas=np.linspace(0.0, 0.5, grid_size),
            quantiles=quantiles,
            bandwidth=bandwidth,
            jobs=jobs,
        )
        skipped = sum(1 for r in results if r.skipped)
        logger.info(f"Sensitivity run on {data_path}: {len(results)} cell-kind pairs, {skipped} skipped")
        return results
