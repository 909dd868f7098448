#!/usr/bin/env python3
"""
CLI tool for the exogeneity bounds library
Checks selection models, computes identified sets and bound curves, runs the
LP oracle, simulates datasets and runs the sensitivity pipeline
"""

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from exobounds import io
from exobounds.estimate import breakdown_summary
from exobounds.exceptions import DataError, ExoboundsError
from exobounds.schemas import (
    AssumptionKind,
    BoundsRequest,
    CheckRequest,
    OracleRequest,
    ParamKind,
    RunConfig,
    SplitRule,
)
from exobounds.services import BoundsService, OracleService, SelectionService, SensitivityService
from exobounds.settings import LOG_LEVEL, configure_logging, resolve_seed


class UsageError(Exception):
    """Command line that argparse rejects"""


class CLIParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors instead of exiting"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


class ExoboundsCLI:
    """CLI commands for the exogeneity bounds library"""

    def __init__(self, config: RunConfig):
        self.config = config

    def _emit(self, data, out: Optional[str] = None) -> None:
        if out:
            path = io.write_json(data, out)
            print(f"Wrote {path}")
        else:
            print(io.dumps(data))

    def check(self, args) -> None:
        """Classify a latent propensity score"""
        score = io.read_score(self.config.score)
        request = CheckRequest(
            pieces=score.pieces(),
            dist=args.dist,
            t_points=args.T,
            t_interval=tuple(args.T_interval) if args.T_interval else None,
            mean=args.mean,
            tol=self.config.tol,
        )
        report = SelectionService.check(request, dist=io.load_cdf(args.dist))
        print(f"{report.assumption}: {report.verdict.value}")
        self._emit(report, self.config.out)

    def bounds(self, args) -> None:
        """Identified set of one parameter, or its curve over delta or tau"""
        request = BoundsRequest(
            kind=self.config.kind,
            a=self.config.a,
            b=self.config.b,
            delta=self.config.delta,
            p1=self.config.p1,
            param=args.param,
            quantiles=args.quantiles,
            tau=args.tau,
            q=args.q,
            obs_mean=args.obs_mean,
            obs_quantile=args.obs_quantile,
        )
        Q_cond = io.load_cdf(args.quantiles)
        if args.curve:
            curve = BoundsService.curve(request, args.curve, self.config.grid_size, Q_cond)
            if self.config.out:
                path = io.write_curve_csv(curve, self.config.out)
                print(f"Wrote {path}")
            else:
                print(io.curve_frame(curve).to_csv(index=False, float_format=io.FLOAT_FORMAT), end="")
            return
        response = BoundsService.compute(request, Q_cond)
        print(f"[{response.interval.lower:.12g}, {response.interval.upper:.12g}]")
        self._emit(response, self.config.out)

    def sensitivity(self, args) -> None:
        """Sample-analog bound curves and breakdown points per covariate cell"""
        results = SensitivityService.run(
            self.config.data,
            self.config.config,
            out_dir=self.config.out,
            kinds=[AssumptionKind(k) for k in args.kinds],
            rule=SplitRule(args.split),
            quantiles=args.q,
            grid_size=self.config.grid_size,
            bandwidth=args.bandwidth,
            jobs=self.config.jobs,
        )
        print(io.dumps(breakdown_summary(results)))

    def oracle(self, args) -> None:
        """LP brute force against the analytic cdf bounds"""
        if args.suite:
            results = OracleService.suite(jobs=self.config.jobs)
            worst = max(r["max_gap"] for r in results)
            print(f"max gap over {len(results)} configurations: {worst:.3g}")
            self._emit(results, self.config.out)
            return
        if self.config.kind is None or self.config.p1 is None:
            raise UsageError("oracle needs --kind and --p1, or --suite")
        assn = self.config.assumption()
        a = 0.0 if assn.a is None else assn.a
        b = 1.0 if assn.b is None else assn.b
        request = OracleRequest(
            n=self.config.n or 200,
            kind=assn.kind,
            a=a,
            b=b,
            p1=self.config.p1,
            method=args.method,
        )
        response = OracleService.compare(request)
        print(f"max gap: {response.max_gap:.3g} (tolerance {response.tolerance:.3g})")
        self._emit(response, self.config.out)

    def simulate(self, args) -> None:
        """Draw (outcome, treatment) pairs from a score and an outcome law"""
        score = io.read_score(self.config.score)
        seed = resolve_seed(self.config.seed)
        data = OracleService.simulate(score, io.load_cdf(args.dist), self.config.n or 448, seed, self.config.out)
        if not self.config.out:
            print(data.to_frame().to_csv(index=False, float_format=io.FLOAT_FORMAT), end="")


def _add_assumption(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--kind", choices=[k.value for k in AssumptionKind], required=required,
                        help="Exogeneity assumption: T-independence, U-independence, full or none")
    parser.add_argument("--delta", type=float, help="Symmetric interval [delta, 1-delta] in quantile units")
    parser.add_argument("--a", type=float, help="Lower end of T or U (overrides --delta)")
    parser.add_argument("--b", type=float, help="Upper end of T or U (overrides --delta)")


def build_parser() -> CLIParser:
    parser = CLIParser(
        prog="exobounds",
        description="Sharp bounds on treatment effects under partial exogeneity",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s check --score data/sawtooth_score.json --dist unif01 --T 0.5
  %(prog)s bounds --kind T --a 0.25 --b 0.75 --p1 0.5 --param mean-Y0 --quantiles identity
  %(prog)s bounds --kind U --delta 0.1 --p1 0.5 --param quantile-Y0 --tau 0.5 --curve delta
  %(prog)s oracle --n 200 --kind U --a 0.25 --b 0.75 --p1 0.5
  %(prog)s simulate --score data/sawtooth_score.json --n 1000 --seed 7 --out sim.csv
  %(prog)s sensitivity --data data/sway_synthetic.csv --config data/sway_synthetic_config.json --out results
        """
    )
    parser.add_argument("--log-level", default=LOG_LEVEL, help=f"Logging level (default: {LOG_LEVEL})")

    subparsers = parser.add_subparsers(dest="command", help="Available commands", parser_class=CLIParser)

    # Selection check command
    check_parser = subparsers.add_parser(
        "check",
        help="Check a latent propensity score for T-independence or mean independence",
        description="Test the average-value characterization of T-independence, or the "
                    "weighted-average condition of mean independence, for a piecewise-affine "
                    "latent propensity score P(X=1 | Y=y).",
    )
    check_parser.add_argument("--score", required=True, help="Propensity score JSON (list of pieces)")
    check_parser.add_argument("--dist", default="unif01", help="Outcome distribution spec or CSV path")
    target = check_parser.add_mutually_exclusive_group(required=True)
    target.add_argument("--T", type=float, nargs="+", help="Finite set T of outcome values")
    target.add_argument("--T-interval", dest="T_interval", type=float, nargs=2, metavar=("LO", "HI"),
                        help="Interval T of outcome values")
    target.add_argument("--mean", action="store_true", help="Check mean independence")
    check_parser.add_argument("--tol", type=float, default=1e-8, help="Tolerance on the average-value gap")
    check_parser.add_argument("--out", help="Write the report JSON here")

    # Bounds command
    bounds_parser = subparsers.add_parser(
        "bounds",
        help="Identified sets for E(Y0|X=1), quantiles of Y0|X=1, the ATT and the QTT",
        description="Sharp bounds under T- or U-independence on [a, b], given the quantile "
                    "function of Y given X=0 and the treatment share p1.",
    )
    _add_assumption(bounds_parser)
    bounds_parser.add_argument("--p1", type=float, required=True, help="Treatment share P(X=1)")
    bounds_parser.add_argument("--param", choices=[p.value for p in ParamKind], default=ParamKind.MEAN_Y0.value,
                               help="Target parameter")
    bounds_parser.add_argument("--quantiles", default="identity",
                               help="Distribution of Y given X=0: spec string or CSV path")
    bounds_parser.add_argument("--tau", type=float, help="Quantile index for quantile-Y0")
    bounds_parser.add_argument("--q", type=float, help="Quantile index for qtt")
    bounds_parser.add_argument("--obs-mean", dest="obs_mean", type=float, help="E(Y|X=1) for att")
    bounds_parser.add_argument("--obs-quantile", dest="obs_quantile", type=float, help="Q_{Y|X}(q|1) for qtt")
    bounds_parser.add_argument("--curve", choices=["delta", "tau"], help="Emit a bound curve CSV instead")
    bounds_parser.add_argument("--grid-size", dest="grid_size", type=int, default=101, help="Curve grid points")
    bounds_parser.add_argument("--out", help="Output path (JSON, or CSV with --curve)")

    # Sensitivity command
    sens_parser = subparsers.add_parser(
        "sensitivity",
        help="Estimated CATT/CQTT bound curves over delta and breakdown points per cell",
        description="Sample-analog identified sets for T = U = [delta, 1-delta] in each covariate "
                    "cell, using kernel-smoothed conditional cdfs, and the breakdown point: the "
                    "largest delta at which the lower bound stays nonnegative.",
    )
    sens_parser.add_argument("--data", required=True, help="Dataset CSV with header")
    sens_parser.add_argument("--config", required=True, help="Ingest config JSON")
    sens_parser.add_argument("--out", required=True, help="Output directory")
    sens_parser.add_argument("--kinds", nargs="+", choices=["T", "U"], default=["T", "U"], help="Assumption kinds")
    sens_parser.add_argument("--split", choices=[r.value for r in SplitRule], default=SplitRule.MEDIAN_SPLIT.value,
                             help="Covariate discretization")
    sens_parser.add_argument("--q", type=float, nargs="+", default=[0.5], help="CQTT quantile indices")
    sens_parser.add_argument("--grid-size", dest="grid_size", type=int, default=101, help="Delta grid points")
    sens_parser.add_argument("--bandwidth", type=float, help="Kernel bandwidth (default: Silverman's rule)")
    sens_parser.add_argument("--jobs", type=int, default=1, help="Worker threads across cells")

    # Oracle command
    oracle_parser = subparsers.add_parser(
        "oracle",
        help="Compare LP extremal cdfs with the analytic sharp bounds",
        description="Brute-force the extremes of F_{U|X}(u|1) over discretized propensity scores "
                    "and report the largest gap to the closed-form cdf bounds.",
    )
    _add_assumption(oracle_parser, required=False)
    oracle_parser.add_argument("--p1", type=float, help="Treatment share P(X=1)")
    oracle_parser.add_argument("--n", type=int, default=200, help="Grid size on the rank scale")
    oracle_parser.add_argument("--method", choices=["greedy", "linprog"], default="greedy", help="LP solver")
    oracle_parser.add_argument("--suite", action="store_true", help="Run all 54 agreement configurations")
    oracle_parser.add_argument("--jobs", type=int, default=1, help="Worker threads for --suite")
    oracle_parser.add_argument("--out", help="Write the result JSON here")

    # Simulate command
    sim_parser = subparsers.add_parser(
        "simulate",
        help="Simulate (outcome, treatment) data from a latent propensity score",
        description="Draw Y from the outcome distribution and X ~ Bernoulli(p(Y)).",
    )
    sim_parser.add_argument("--score", required=True, help="Propensity score JSON (list of pieces)")
    sim_parser.add_argument("--dist", default="unif01", help="Outcome distribution spec or CSV path")
    sim_parser.add_argument("--n", type=int, default=448, help="Sample size")
    sim_parser.add_argument("--seed", type=int, help="Random seed (EXOBOUNDS_SEED wins)")
    sim_parser.add_argument("--out", help="Output CSV path (default: stdout)")

    return parser


def _run_config(args) -> RunConfig:
    fields = {name: getattr(args, name) for name in RunConfig.model_fields if getattr(args, name, None) is not None}
    return RunConfig(**fields)


def run(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    if not args.command:
        parser.print_help()
        return 1

    configure_logging(args.log_level)

    try:
        config = _run_config(args)
        cli = ExoboundsCLI(config)
        getattr(cli, args.command)(args)
    except ValidationError as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"Data error: {e}", file=sys.stderr)
        return 2
    except (ExoboundsError, UsageError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\nOperation cancelled by user", file=sys.stderr)
        return 1
    return 0


def main():
    """Main CLI entry point"""
    sys.exit(run())


if __name__ == "__main__":
    main()
