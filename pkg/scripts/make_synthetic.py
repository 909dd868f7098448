#!/usr/bin/env python3
"""
Synthetic dataset script for the exogeneity bounds library
Regenerates data/sway_synthetic.csv, a 448-row sample with the column layout
of a wage study (log wage, treatment, two covariates), and the bundled
sawtooth score
"""

import argparse
import os
import sys

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from exobounds import io
from exobounds.selection import sawtooth_score
from exobounds.settings import configure_logging

ROWS = 448
SEED = 20240501
TREATED_SHARE = 0.62
EFFECT = 0.35


def create_frame(n: int = ROWS, seed: int = SEED) -> pd.DataFrame:
    """Draw covariates, treatment and log wages with a constant effect"""
    # legacy stream: frozen across numpy releases, so the bundled file is stable
    rng = np.random.RandomState(seed)
    age = rng.randint(14, 31, size=n)
    hhsize = rng.randint(2, 14, size=n)
    treated = (rng.uniform(size=n) < TREATED_SHARE).astype(int)
    noise = rng.standard_normal(n)
    logwage = 0.5 + 0.03 * (age - 20) - 0.02 * (hhsize - 7) + 0.8 * noise + EFFECT * treated
    return pd.DataFrame(
        {
            "logwage": np.round(logwage, 6),
            "not_abducted": treated,
            "age": age,
            "hhsize": hhsize,
            "wage": np.round(np.exp(logwage), 4),
        }
    )


def main():
    """Main function"""
    parser = argparse.ArgumentParser(description="Write the bundled synthetic dataset")
    parser.add_argument("--out", default="data/sway_synthetic.csv", help="Output CSV path")
    parser.add_argument("--score-out", default="data/sawtooth_score.json", help="Sawtooth score JSON path")
    parser.add_argument("--rows", type=int, default=ROWS, help="Number of rows")
    parser.add_argument("--seed", type=int, default=SEED, help="Generator seed")
    args = parser.parse_args()

    configure_logging()
    print("Generating synthetic dataset...")

    try:
        frame = create_frame(args.rows, args.seed)
        frame.to_csv(args.out, index=False, lineterminator="\n")
        io.write_score(sawtooth_score(drops=1), args.score_out)
        treated = int(frame["not_abducted"].sum())
        print(f"Synthetic data written to {args.out}")
        print(f"   Rows: {len(frame)}")
        print(f"   Treated: {treated}, untreated: {len(frame) - treated}")
        print(f"Sawtooth score written to {args.score_out}")
        print("\nYou can now run the pipeline with:")
        print("  python cli.py sensitivity --data data/sway_synthetic.csv "
              "--config data/sway_synthetic_config.json --out results")
    except Exception as e:
        print(f"Error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
