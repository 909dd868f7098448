"""
Sample-analog estimation of the bound curves: CSV ingestion, covariate
cells, kernel-smoothed conditional cdfs and breakdown points per cell.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from exobounds import io
from exobounds.bounds import bound_curve, breakdown_point, default_delta_grid, parameter_bound
from exobounds.dist import Cdf, GaussianMixtureCdf, PiecewiseLinearCdf, StepCdf
from exobounds.exceptions import DataError, DomainError
from exobounds.schemas import (
    AssumptionKind,
    AssumptionSpec,
    IngestConfig,
    IngestReport,
    ParamKind,
    SensitivityResult,
    SplitRule,
)

logger = logging.getLogger(__name__)

_OPERATORS = {
    ">": np.greater,
    ">=": np.greater_equal,
    "<": np.less,
    "<=": np.less_equal,
    "==": np.equal,
    "!=": np.not_equal,
}

# Knots used to tabulate smoothed cdfs inside the sensitivity pipeline
SMOOTH_KNOTS = 2049

Bandwidth = Union[None, str, float]


@dataclass(frozen=True)
class Dataset:
    frame: pd.DataFrame
    outcome: str
    treatment: str
    covariates: Tuple[str, ...] = ()
    report: Optional[IngestReport] = None

    @property
    def y(self) -> np.ndarray:
        return self.frame[self.outcome].to_numpy(dtype=float)

    @property
    def x(self) -> np.ndarray:
        return self.frame[self.treatment].to_numpy(dtype=int)

    def __len__(self) -> int:
        return len(self.frame)


def _first_bad_treatment(values: pd.Series) -> Optional[Tuple[int, object]]:
    bad = values[~values.isin([0, 1])]
    if bad.empty:
        return None
    return int(bad.index[0]), bad.iloc[0]


def ingest_csv(path: Union[str, Path], config: IngestConfig) -> Dataset:
    """
    Read a CSV with a header row into a typed dataset.

    Rows with missing mapped values are dropped first, then rows failing a
    filter; the counts are kept on ``Dataset.report``.
    """
    try:
        frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except FileNotFoundError as e:
        raise DataError(f"data file not found: {path}") from e
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot parse {path} as a UTF-8 CSV with header: {e}") from e

    missing = [col for col in config.columns() if col not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing mapped column(s) {', '.join(missing)}")

    frame = frame[config.columns()].copy()
    rows_read = len(frame)
    # data rows are numbered from 1 below the header
    frame.index = pd.RangeIndex(1, rows_read + 1)
    raw_treatment = frame[config.treatment].copy()
    for col in frame.columns:
        frame[col] = pd.to_numeric(frame[col], errors="coerce")

    unparsed = raw_treatment.notna() & frame[config.treatment].isna()
    if unparsed.any():
        row = int(unparsed.idxmax())
        raise DataError(
            f"{path}: treatment column {config.treatment!r} has non-binary value "
            f"{raw_treatment[row]!r} at row {row}"
        )

    required = [config.outcome, config.treatment, *config.covariates]
    complete = frame[required].notna().all(axis=1)
    dropped_missing = int((~complete).sum())
    frame = frame[complete]

    bad = _first_bad_treatment(frame[config.treatment])
    if bad is not None:
        row, value = bad
        raise DataError(
            f"{path}: treatment column {config.treatment!r} has non-binary value {value:g} at row {row}"
        )

    keep = np.ones(len(frame), dtype=bool)
    for flt in config.filters:
        keep &= _OPERATORS[flt.op](frame[flt.col].to_numpy(dtype=float), flt.val)
    dropped_by_filter = int((~keep).sum())
    frame = frame[keep].reset_index(drop=True)
    frame[config.treatment] = frame[config.treatment].astype(int)

    report = IngestReport(
        path=str(path),
        rows_read=rows_read,
        dropped_missing=dropped_missing,
        dropped_by_filter=dropped_by_filter,
    )
    logger.info(
        f"Ingested {report.rows_kept} of {rows_read} rows from {path} "
        f"({dropped_missing} missing, {dropped_by_filter} filtered)"
    )
    return Dataset(
        frame=frame,
        outcome=config.outcome,
        treatment=config.treatment,
        covariates=tuple(config.covariates),
        report=report,
    )


@dataclass(frozen=True)
class Cell:
    key: Tuple[Tuple[str, float], ...]
    y0: np.ndarray = field(repr=False)
    y1: np.ndarray = field(repr=False)

    @property
    def label(self) -> str:
        if not self.key:
            return "all"
        return ",".join(f"{name}={level:g}" for name, level in self.key)

    @property
    def n0(self) -> int:
        return int(self.y0.size)

    @property
    def n1(self) -> int:
        return int(self.y1.size)

    @property
    def p1_hat(self) -> float:
        return self.n1 / (self.n0 + self.n1)

    @property
    def has_overlap(self) -> bool:
        return self.n0 > 0 and self.n1 > 0


def _levels(values: pd.Series, rule: SplitRule) -> pd.Series:
    if rule is SplitRule.MEDIAN_SPLIT:
        return (values > values.median()).astype(int)
    return values


def cell_partition(
    ds: Dataset,
    covariates: Optional[Sequence[str]] = None,
    rule: SplitRule = SplitRule.MEDIAN_SPLIT,
) -> List[Cell]:
    """
    Split the dataset into covariate cells.

    Median split replaces each covariate by 1(value > sample median); cells
    are the cross product of the levels, and empty ones are left out.
    """
    rule = SplitRule(rule)
    covariates = list(ds.covariates if covariates is None else covariates)
    absent = [c for c in covariates if c not in ds.frame.columns]
    if absent:
        raise DataError(f"covariate(s) not in dataset: {', '.join(absent)}")

    y, x = ds.y, ds.x
    if not covariates:
        return [Cell(key=(), y0=y[x == 0], y1=y[x == 1])]

    levels = pd.DataFrame({c: _levels(ds.frame[c], rule) for c in covariates})
    if rule is SplitRule.EXACT_LEVELS:
        n_cells = len(levels.drop_duplicates())
        fractional = any(
            not np.allclose(levels[c], np.round(levels[c])) for c in covariates
        )
        if fractional or n_cells > len(levels) / 2:
            logger.warning(
                f"Exact levels split {len(levels)} rows into {n_cells} cells; "
                f"use median-split for continuous covariates"
            )

    observed = [sorted(levels[c].unique()) for c in covariates]
    cells = []
    for combo in itertools.product(*observed):
        mask = np.ones(len(levels), dtype=bool)
        for col, level in zip(covariates, combo):
            mask &= levels[col].to_numpy() == level
        key = tuple((col, float(level)) for col, level in zip(covariates, combo))
        if not mask.any():
            logger.warning(f"Covariate cell {dict(key)} is empty and is left out")
            continue
        cells.append(Cell(key=key, y0=y[mask & (x == 0)], y1=y[mask & (x == 1)]))
    logger.info(f"Partitioned {len(ds)} rows into {len(cells)} cells ({rule.value})")
    return cells


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5), falling back to sd when the IQR is 0"""
    samples = np.asarray(samples, dtype=float)
    sd = float(np.std(samples, ddof=1))
    iqr = float(stats.iqr(samples))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * samples.size ** (-0.2)


def smoothed_cdf(samples, bandwidth: Bandwidth = None, knots: Optional[int] = None) -> Cdf:
    """
    Integrated Gaussian kernel estimate of a cdf, truncated to the sample range.

    ``bandwidth`` None or "silverman" picks the plug-in rule; 0 gives the
    empirical step cdf. With ``knots`` the estimate is tabulated and
    interpolated linearly, which keeps it strictly increasing.
    """
    xs = np.asarray(samples, dtype=float).ravel()
    if xs.size == 0:
        raise DomainError("smoothing needs at least one sample")
    if bandwidth is None or bandwidth == "silverman":
        if xs.size < 2:
            raise DomainError("plug-in bandwidth needs at least 2 samples")
        h = silverman_bandwidth(xs) if np.ptp(xs) > 0.0 else 0.0
    else:
        h = float(bandwidth)
        if h < 0 or not np.isfinite(h):
            raise DomainError(f"bandwidth must be nonnegative, got {bandwidth}")
    if h == 0.0 and bandwidth == 0:
        return StepCdf(xs)
    if h == 0.0 or np.ptp(xs) <= 0.0:
        logger.warning("Sample has a single value; using its empirical cdf")
        return StepCdf(xs)

    kernel = GaussianMixtureCdf(xs, h, truncate=True)
    if knots is None:
        return kernel
    grid = np.linspace(kernel.lower, kernel.upper, knots)
    return PiecewiseLinearCdf(grid, kernel.evaluate(grid))


def estimate_sensitivity_curve(
    cell: Cell,
    kind: AssumptionKind,
    deltas: Optional[Sequence[float]] = None,
    quantiles: Sequence[float] = (0.5,),
    include_att: bool = True,
    bandwidth: Bandwidth = None,
    knots: Optional[int] = SMOOTH_KNOTS,
) -> SensitivityResult:
    """
    Plug-in bound curves over delta for CATT and CQTT(q) in one cell, with
    the breakdown point of each lower-bound curve.
    """
    kind = AssumptionKind(kind)
    deltas = default_delta_grid() if deltas is None else np.asarray(deltas, dtype=float)
    if not cell.has_overlap or min(cell.n0, cell.n1) < 2:
        reason = f"arm sizes n0={cell.n0}, n1={cell.n1} leave no overlap"
        logger.warning(f"Skipping cell {cell.label}: {reason}")
        return SensitivityResult(
            cell=cell.label, kind=kind, n0=cell.n0, n1=cell.n1, skipped=True, reason=reason
        )

    F0 = smoothed_cdf(cell.y0, bandwidth, knots)
    F1 = smoothed_cdf(cell.y1, bandwidth, knots)
    p1 = cell.p1_hat

    targets: List[Tuple[ParamKind, Optional[float], float]] = []
    if include_att:
        targets.append((ParamKind.ATT, None, float(np.mean(cell.y1))))
    for q in quantiles:
        targets.append((ParamKind.QTT, float(q), float(F1.quantile(q))))

    result = SensitivityResult(cell=cell.label, kind=kind, n0=cell.n0, n1=cell.n1, p1_hat=p1)
    for param, q, observed in targets:
        curve = bound_curve(param, kind, F0, p1, deltas, q=q, observed=observed)
        result.curves.append(curve)

        def lower(delta: float) -> float:
            spec = AssumptionSpec.from_delta(kind, delta)
            return parameter_bound(param, spec, F0, p1, q=q, observed=observed).lower

        result.breakdown[curve.param] = breakdown_point(lower)
    logger.info(f"Estimated {len(result.curves)} curves for cell {cell.label} under {kind.value}")
    return result


def run_sensitivity(
    ds: Dataset,
    kinds: Sequence[AssumptionKind] = (AssumptionKind.T, AssumptionKind.U),
    out_dir: Optional[Union[str, Path]] = None,
    rule: SplitRule = SplitRule.MEDIAN_SPLIT,
    deltas: Optional[Sequence[float]] = None,
    quantiles: Sequence[float] = (0.5,),
    bandwidth: Bandwidth = None,
    jobs: int = 1,
) -> List[SensitivityResult]:
    """
    Estimate every (cell, kind) pair, fanned out over ``jobs`` threads, and
    write one curve CSV per (cell, parameter, kind) plus breakdown_points.json.
    """
    cells = cell_partition(ds, rule=rule)
    tasks = [(cell, AssumptionKind(kind)) for cell in cells for kind in kinds]

    def work(task):
        cell, kind = task
        return estimate_sensitivity_curve(
            cell, kind, deltas=deltas, quantiles=quantiles, bandwidth=bandwidth
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(task) for task in tasks]

    if out_dir is not None:
        write_sensitivity(results, out_dir)
    return results


def breakdown_summary(results: Sequence[SensitivityResult]) -> Dict[str, Dict]:
    summary: Dict[str, Dict] = {}
    for res in results:
        entry = summary.setdefault(res.cell, {"n0": res.n0, "n1": res.n1})
        if res.skipped:
            entry["skipped"] = res.reason
            continue
        entry["p1_hat"] = res.p1_hat
        entry[res.kind.value] = {
            param: bp.model_dump() for param, bp in res.breakdown.items()
        }
    return summary


def write_sensitivity(results: Sequence[SensitivityResult], out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    written = []
    for res in results:
        for curve in res.curves:
            name = f"{io.slug(res.cell)}__{io.slug(curve.param)}__{res.kind.value}.csv"
            written.append(io.write_curve_csv(curve, out_dir / name))
    written.append(io.write_json(breakdown_summary(results), out_dir / "breakdown_points.json"))
    logger.info(f"Wrote {len(written)} files to {out_dir}")
    return written
