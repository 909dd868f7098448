from pathlib import Path

import pytest

from exobounds.dist import normal_cdf, uniform_cdf
from exobounds.schemas import AssumptionKind, AssumptionSpec
from exobounds.selection import sawtooth_score

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def unif():
    return uniform_cdf()


@pytest.fixture
def std_normal():
    return normal_cdf()


@pytest.fixture
def sawtooth():
    return sawtooth_score(drops=1)


@pytest.fixture
def t_quarter():
    """T-independence on [0.25, 0.75]"""
    return AssumptionSpec(kind=AssumptionKind.T, a=0.25, b=0.75)


@pytest.fixture
def u_quarter():
    return AssumptionSpec(kind=AssumptionKind.U, a=0.25, b=0.75)


@pytest.fixture
def sway_csv():
    return DATA_DIR / "sway_synthetic.csv"


@pytest.fixture
def sway_config():
    return DATA_DIR / "sway_synthetic_config.json"


@pytest.fixture
def sawtooth_json():
    return DATA_DIR / "sawtooth_score.json"
