import math
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class AssumptionKind(str, Enum):
    T = "T"
    U = "U"
    FULL = "full"
    NONE = "none"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    UNDEFINED = "undefined"


class ParamKind(str, Enum):
    MEAN_Y0 = "mean-Y0"
    QUANTILE_Y0 = "quantile-Y0"
    ATT = "att"
    QTT = "qtt"


class SplitRule(str, Enum):
    MEDIAN_SPLIT = "median-split"
    EXACT_LEVELS = "exact-levels"


class AssumptionSpec(BaseModel):
    """Exogeneity assumption with its interval [a, b] in quantile units"""

    model_config = ConfigDict(frozen=True)

    kind: AssumptionKind
    a: Optional[float] = Field(None, ge=0, le=1, description="Lower end of T or U in quantile units")
    b: Optional[float] = Field(None, ge=0, le=1, description="Upper end of T or U in quantile units")
    delta: Optional[float] = Field(None, ge=0, le=0.5, description="Symmetric parameter, [a,b] = [delta, 1-delta]")

    @model_validator(mode="before")
    @classmethod
    def _fill_interval(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        try:
            kind = AssumptionKind(data.get("kind"))
        except ValueError:
            return data
        if kind is AssumptionKind.FULL:
            data["a"], data["b"] = 0.0, 1.0
        elif kind is AssumptionKind.NONE:
            data["a"], data["b"] = None, None
        else:
            delta = data.get("delta")
            if delta is not None:
                # explicit a/b override the symmetric parameterization
                if data.get("a") is None:
                    data["a"] = delta
                if data.get("b") is None:
                    data["b"] = 1.0 - float(delta)
        return data

    @model_validator(mode="after")
    def _check_interval(self):
        if self.kind in (AssumptionKind.T, AssumptionKind.U):
            if self.a is None or self.b is None:
                raise ValueError("kind T/U needs a and b, or delta")
            if self.a > self.b:
                raise ValueError(f"a must not exceed b, got a={self.a}, b={self.b}")
        return self

    @classmethod
    def from_delta(cls, kind: AssumptionKind, delta: float) -> "AssumptionSpec":
        return cls(kind=kind, delta=delta)

    def label(self) -> str:
        if self.kind in (AssumptionKind.T, AssumptionKind.U):
            return f"{self.kind.value}-independence on [{self.a:g}, {self.b:g}]"
        return f"{self.kind.value} independence"


class TreatmentMarginal(BaseModel):
    model_config = ConfigDict(frozen=True)

    p1: float = Field(..., gt=0, lt=1, description="P(X=1)")

    @property
    def p0(self) -> float:
        return 1.0 - self.p1


class BoundInterval(BaseModel):
    """Closed identified interval; endpoints may be infinite"""

    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float

    @model_validator(mode="after")
    def _ordered(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("bound endpoints must not be NaN")
        if self.lower > self.upper and self.lower - self.upper > 1e-12 * max(1.0, abs(self.upper)):
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        return self

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def subtract_from(self, value: float) -> "BoundInterval":
        """The interval value - [lower, upper]"""
        return BoundInterval(lower=value - self.upper, upper=value - self.lower)

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol


class BoundCurve(BaseModel):
    """A tau- or delta-indexed family of identified intervals"""

    index: List[float]
    intervals: List[BoundInterval]
    param: str
    kind: Optional[AssumptionKind] = None
    index_name: Literal["tau", "delta", "u"] = "delta"

    @model_validator(mode="after")
    def _aligned(self):
        if len(self.index) != len(self.intervals):
            raise ValueError("index and intervals must have the same length")
        if any(b <= a for a, b in zip(self.index, self.index[1:])):
            raise ValueError("curve index must be strictly increasing")
        return self

    @property
    def lowers(self) -> List[float]:
        return [iv.lower for iv in self.intervals]

    @property
    def uppers(self) -> List[float]:
        return [iv.upper for iv in self.intervals]


class IndependenceReport(BaseModel):
    assumption: str
    verdict: Verdict
    gap: float = Field(..., description="Largest average-value gap found")
    worst_interval: Optional[Tuple[float, float]] = None
    treatment_share: float
    tolerance: float
    skipped_intervals: int = 0
    failing_x: List[float] = Field(default_factory=list)
    message: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS


class BreakdownResult(BaseModel):
    delta: float = Field(..., ge=0, le=0.5)
    threshold: float = 0.0
    flag: Optional[str] = None


class SensitivityResult(BaseModel):
    cell: str
    kind: AssumptionKind
    n0: int
    n1: int
    p1_hat: Optional[float] = None
    curves: List[BoundCurve] = Field(default_factory=list)
    breakdown: Dict[str, BreakdownResult] = Field(default_factory=dict)
    skipped: bool = False
    reason: Optional[str] = None


class PropensityPiece(BaseModel):
    """One affine piece slope * y + intercept on [lo, hi)"""

    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    slope: float
    intercept: float


class FilterSpec(BaseModel):
    col: str
    op: Literal[">", ">=", "<", "<=", "==", "!="]
    val: float


class IngestConfig(BaseModel):
    outcome: str = Field(..., min_length=1)
    treatment: str = Field(..., min_length=1)
    covariates: List[str] = Field(default_factory=list)
    filters: List[FilterSpec] = Field(default_factory=list)

    def columns(self) -> List[str]:
        """Every column the config refers to, in first-use order"""
        names = [self.outcome, self.treatment, *self.covariates, *(f.col for f in self.filters)]
        return list(dict.fromkeys(names))


class IngestReport(BaseModel):
    path: str
    rows_read: int
    dropped_missing: int = 0
    dropped_by_filter: int = 0

    @property
    def rows_kept(self) -> int:
        return self.rows_read - self.dropped_missing - self.dropped_by_filter


class RunConfig(BaseModel):
    """Validated command line configuration"""

    command: Literal["check", "bounds", "sensitivity", "oracle", "simulate"]
    kind: Optional[AssumptionKind] = None
    a: Optional[float] = Field(None, ge=0, le=1)
    b: Optional[float] = Field(None, ge=0, le=1)
    delta: Optional[float] = Field(None, ge=0, le=0.5)
    p1: Optional[float] = Field(None, gt=0, lt=1)
    seed: Optional[int] = Field(None, ge=0)
    jobs: int = Field(1, ge=1)
    n: Optional[int] = Field(None, ge=1)
    grid_size: int = Field(101, ge=2)
    tol: float = Field(1e-8, gt=0)
    out: Optional[str] = None
    score: Optional[str] = None
    data: Optional[str] = None
    config: Optional[str] = None

    @model_validator(mode="after")
    def _assumption_complete(self):
        if self.kind in (AssumptionKind.T, AssumptionKind.U):
            if self.delta is None and (self.a is None or self.b is None):
                raise ValueError("kind T/U needs --delta or both --a and --b")
        return self

    def assumption(self) -> AssumptionSpec:
        return AssumptionSpec(kind=self.kind, a=self.a, b=self.b, delta=self.delta)


# HTTP request/response models


class CheckRequest(BaseModel):
    pieces: List[PropensityPiece] = Field(..., min_length=1, description="Propensity score pieces")
    dist: str = Field("unif01", description="Outcome distribution spec")
    t_points: Optional[List[float]] = Field(None, description="Finite set T of outcome values")
    t_interval: Optional[Tuple[float, float]] = Field(None, description="Interval T of outcome values")
    mean: bool = Field(False, description="Check mean independence instead")
    tol: float = Field(1e-8, gt=0)

    @model_validator(mode="after")
    def _has_target(self):
        if not self.mean and self.t_points is None and self.t_interval is None:
            raise ValueError("give t_points, t_interval or mean=true")
        return self


class BoundsRequest(BaseModel):
    kind: AssumptionKind
    a: Optional[float] = Field(None, ge=0, le=1)
    b: Optional[float] = Field(None, ge=0, le=1)
    delta: Optional[float] = Field(None, ge=0, le=0.5)
    p1: float = Field(..., gt=0, lt=1)
    param: ParamKind = ParamKind.MEAN_Y0
    quantiles: str = Field("identity", description="Distribution spec of Y given X=0")
    tau: Optional[float] = Field(None, ge=0, le=1)
    q: Optional[float] = Field(None, ge=0, le=1)
    obs_mean: Optional[float] = None
    obs_quantile: Optional[float] = None

    @model_validator(mode="after")
    def _param_inputs(self):
        needed = {
            ParamKind.QUANTILE_Y0: ["tau"],
            ParamKind.ATT: ["obs_mean"],
            ParamKind.QTT: ["q", "obs_quantile"],
        }.get(self.param, [])
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f"param {self.param.value} needs {', '.join(missing)}")
        return self


class BoundsResponse(BaseModel):
    param: ParamKind
    assumption: AssumptionSpec
    interval: BoundInterval


class OracleRequest(BaseModel):
    n: int = Field(200, ge=2, le=5000, description="Grid size on the rank scale")
    kind: AssumptionKind
    a: float = Field(..., ge=0, le=1)
    b: float = Field(..., ge=0, le=1)
    p1: float = Field(..., gt=0, lt=1)
    method: Literal["greedy", "linprog"] = "greedy"


class OracleResponse(BaseModel):
    n: int
    kind: AssumptionKind
    a: float
    b: float
    p1: float
    max_gap: float
    tolerance: float
    passed: bool
