import logging
import os
from typing import Optional

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Absolute tolerance for probability comparisons
PROB_TOL = 1e-10

# Default tolerance of the independence checkers
CHECK_TOL = 1e-8

# Probability mass cut from each tail when an unbounded support must be tabulated
TAIL_EPS = float(os.getenv("EXOBOUNDS_TAIL_EPS", "1e-6"))

SEED_ENV = "EXOBOUNDS_SEED"


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once for an entry point"""
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)


def resolve_seed(seed: Optional[int]) -> Optional[int]:
    """Environment seed wins over the one given on the command line"""
    env_value = os.getenv(SEED_ENV)
    if env_value is not None and env_value.strip():
        return int(env_value)
    return seed
