"""Readers and writers for scores, samples, curves and run summaries"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from exobounds.dist import Cdf, cdf_from_spec, step_cdf_from_samples
from exobounds.exceptions import DataError
from exobounds.schemas import BoundCurve, IngestConfig
from exobounds.selection import PropensityScore

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Fixed float rendering keeps repeated runs byte-identical
FLOAT_FORMAT = "%.17g"

CURVE_COLUMNS = ["index", "lower", "upper", "kind", "param"]


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def read_score(path: PathLike) -> PropensityScore:
    """Propensity score from a JSON list of pieces"""
    text = _read_text(path)
    try:
        return PropensityScore.from_json(text)
    except ValidationError as e:
        raise DataError(f"{path}: invalid score pieces: {e}") from e


def write_score(score: PropensityScore, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(score.to_json(), encoding="utf-8")
    return path


def read_ingest_config(path: PathLike) -> IngestConfig:
    text = _read_text(path)
    try:
        return IngestConfig.model_validate_json(text)
    except ValidationError as e:
        raise DataError(f"{path}: invalid ingest config: {e}") from e


def read_samples(path: PathLike) -> np.ndarray:
    """First numeric column of a CSV file, missing values dropped"""
    try:
        frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read samples from {path}: {e}") from e
    numeric = frame.select_dtypes(include="number")
    if numeric.shape[1] == 0:
        raise DataError(f"{path} has no numeric column")
    values = numeric.iloc[:, 0].dropna().to_numpy(dtype=float)
    if values.size == 0:
        raise DataError(f"{path}: column {numeric.columns[0]!r} has no values")
    return values


def load_cdf(spec: str) -> Cdf:
    """A distribution spec string, or a CSV path read as an empirical cdf"""
    if spec.lower().endswith(".csv") or Path(spec).is_file():
        return step_cdf_from_samples(read_samples(spec))
    return cdf_from_spec(spec)


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def curve_frame(curve: BoundCurve) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "index": curve.index,
            "lower": curve.lowers,
            "upper": curve.uppers,
            "kind": curve.kind.value if curve.kind is not None else "",
            "param": curve.param,
        },
        columns=CURVE_COLUMNS,
    )


def write_curve_csv(curve: BoundCurve, path: PathLike) -> Path:
    return write_frame(curve_frame(curve), path)


def read_curve_csv(path: PathLike) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read curve {path}: {e}") from e
    missing = [c for c in CURVE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path} lacks curve columns {missing}")
    return frame


def slug(text: str) -> str:
    """File-name safe form of a cell or parameter label"""
    return re.sub(r"[^A-Za-z0-9.=-]+", "_", text).strip("_") or "all"


def to_jsonable(data: Any) -> Any:
    if isinstance(data, BaseModel):
        # non-finite floats become null
        return json.loads(data.model_dump_json())
    if isinstance(data, dict):
        return {str(k): to_jsonable(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_jsonable(v) for v in data]
    if isinstance(data, (np.floating, float)):
        value = float(data)
        return value if np.isfinite(value) else None
    if isinstance(data, np.integer):
        return int(data)
    return data


def dumps(data: Any) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True)


def write_json(data: Union[BaseModel, Dict[str, Any], list], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data) + "\n", encoding="utf-8")
    return path
