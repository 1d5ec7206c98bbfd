"""Command-line entry point: ``mecoffload {generate,solve,experiment,compare}``.

Exit status is 0 on success, 1 for bad usage or arguments, 2 for file or
parse errors. An infeasible snapshot is a valid result and exits 0.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import List, Optional

from . import harness
from .lower_level import LowerHyper
from .metrics import aggregate
from .scenario import ScenarioFormatError, generate_scenario, load_scenario, save_scenario

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mecoffload", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="draw a random snapshot and save it as JSON")
    gen.add_argument("--seed", type=_seed, required=True)
    gen.add_argument("--users", type=_positive_int, default=3)
    gen.add_argument("--servers", type=_positive_int, default=3)
    gen.add_argument("--subcarriers", type=_positive_int, default=64)
    gen.add_argument("-o", "--output", required=True)

    solve = sub.add_parser("solve", help="run one strategy on a saved snapshot")
    solve.add_argument("scenario")
    solve.add_argument("--strategy", choices=harness.STRATEGIES, default="eejs")
    solve.add_argument("--seed", type=_seed, default=None,
                       help="seed for the random strategy (defaults to the snapshot seed)")
    solve.add_argument("--max-iter", type=_positive_int, default=LowerHyper.max_iter)
    solve.add_argument("--step-rule", choices=("adaptive", "fixed"), default=LowerHyper.step_rule)
    solve.add_argument("--json", action="store_true", help="print the result as JSON")
    solve.add_argument("--csv", help="also write the result row to this CSV file")

    exp = sub.add_parser("experiment", help="run a Monte Carlo sweep from a YAML config")
    exp.add_argument("config")
    exp.add_argument("-o", "--output", required=True)
    exp.add_argument("--workers", type=_positive_int, default=None)
    exp.add_argument("--drops", type=_positive_int, default=None, help="override the drop count")
    exp.add_argument("--quiet", action="store_true")

    cmp_ = sub.add_parser("compare", help="summarize a results CSV")
    cmp_.add_argument("results")
    cmp_.add_argument("--json", action="store_true")
    return parser


def _cmd_generate(args) -> int:
    scenario = generate_scenario(args.seed, args.users, args.servers, args.subcarriers)
    save_scenario(scenario, args.output)
    print(f"wrote {args.output}: {args.users} users, {args.servers} servers, "
          f"{args.subcarriers} subcarriers, seed {args.seed}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    hyper = LowerHyper(max_iter=args.max_iter, step_rule=args.step_rule)
    seed = scenario.seed if args.seed is None else args.seed
    result = harness.run_strategy(args.strategy, scenario, seed, hyper)
    record = harness.record_for(args.strategy, result, scenario, seed, "table")
    summary = {
        "strategy": args.strategy,
        "total_j": record.total_j,
        "compute_j": record.compute_j,
        "transmit_j": record.transmit_j,
        "served": record.served,
        "offloaders": record.offloaders,
        "local_j": record.local_j,
    }
    if args.strategy != "local":
        summary["assignment"] = str(result.best_assignment)
        summary["converged"] = result.converged
        summary["flags"] = list(result.flags)
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        for key, value in summary.items():
            print(f"{key:>11}: {value}")
    if args.csv:
        harness.write_csv([record], args.csv)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = harness.load_config(args.config)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.drops is not None:
        overrides["drops"] = args.drops
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)

    def progress(done, total):
        if not args.quiet:
            print(f"\rdrop {done}/{total}", end="", file=sys.stderr, flush=True)

    records = harness.run_experiment(cfg, progress)
    if not args.quiet:
        print(file=sys.stderr)
    harness.write_csv(records, args.output)
    print(f"wrote {len(records)} rows to {args.output}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    report = aggregate(harness.read_csv(args.results))
    if args.json:
        print(json.dumps([g.__dict__ for g in report.groups], indent=2))
        return EXIT_OK
    print(f"{report.drop_count} drops")
    header = f"{'strategy':<10} {'profile':<8} {'K':>3} {'mean_total_j':>14} {'mean_compute_j':>15} " \
             f"{'mean_transmit_j':>16} {'SOP':>6}"
    print(header)
    for g in report.groups:
        sop = "-" if g.sop is None else f"{g.sop:.3f}"
        print(f"{g.strategy:<10} {g.profile:<8} {g.K:>3} {g.mean_total_j:>14.6e} "
              f"{g.mean_compute_j:>15.6e} {g.mean_transmit_j:>16.6e} {sop:>6}")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "experiment": _cmd_experiment,
    "compare": _cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits with None/0, bad usage with EXIT_USAGE
        return exc.code or EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ScenarioFormatError, harness.ConfigError) as exc:
        print(f"mecoffload: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"mecoffload: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
