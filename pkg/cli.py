import sys
import logging
import argparse
from typing import List, Optional

from bench.config_file import load_config
from bench.models import SweepSpec
from bench.services import run_benchmark, trace_trial, write_outputs
from bench.timing import DEFAULT_SIZES, timing_scaling
from core.config import settings
from core.exceptions import LocalizationError
from core.utils import parse_value_list, setup_logging, write_csv

logger = logging.getLogger(__name__)


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, trials=args.trials, seed=args.seed)
    results = run_benchmark(config, workers=args.workers)
    write_outputs(results, args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config, trials=args.trials, seed=args.seed)
    sweep = SweepSpec(param=args.param, values=parse_value_list(args.values))
    results = run_benchmark(config, sweep, workers=args.workers)
    write_outputs(results, args.out)
    return 0


def _cmd_trace(args: argparse.Namespace) -> int:
    config = load_config(args.config, seed=args.seed)
    if not 0 <= args.trial < config.scenario.trials:
        raise LocalizationError(f"trial index must be in [0, {config.scenario.trials}), got {args.trial}")
    trace_trial(config, args.trial, args.out)
    return 0


def _cmd_timing(args: argparse.Namespace) -> int:
    sizes = [int(v) for v in parse_value_list(args.sizes)]
    table = timing_scaling(sizes, args.repetitions, seed=args.seed or 0)
    write_csv(table.frame, f"{args.out}/timing.csv")
    print(table.frame.to_string(index=False))
    print(f"slope (log time vs log L): {table.slope:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlos-locator",
        description="NLOS-robust TDOA localization with a projection neural network",
    )
    parser.add_argument("--log-level", default=None, help="override NLOS_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="TOML file with [scenario], [noise], [solver]")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=settings.out_dir)

    run = sub.add_parser("run", help="Monte-Carlo benchmark for one configuration")
    common(run)
    run.add_argument("--trials", type=int, default=None)
    run.add_argument("--workers", type=int, default=None)
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="benchmark over a list of sigma or b values")
    common(sweep)
    sweep.add_argument("--param", choices=["sigma", "b"], required=True)
    sweep.add_argument("--values", required=True, help="comma-separated, e.g. 0.1,0.5,1")
    sweep.add_argument("--trials", type=int, default=None)
    sweep.add_argument("--workers", type=int, default=None)
    sweep.set_defaults(func=_cmd_sweep)

    trace = sub.add_parser("trace", help="convergence trace of one trial")
    common(trace)
    trace.add_argument("--trial", type=int, required=True)
    trace.set_defaults(func=_cmd_trace)

    timing = sub.add_parser("timing", help="per-step time versus number of sensors")
    common(timing, config=False)
    timing.add_argument("--sizes", default=",".join(map(str, DEFAULT_SIZES)))
    timing.add_argument("--repetitions", type=int, default=200)
    timing.set_defaults(func=_cmd_timing)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level)
    try:
        return args.func(args)
    except (LocalizationError, ValueError) as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
