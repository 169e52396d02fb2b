"""Command-line entry point.

Exit codes: 0 success, 2 the solution violates the business constraints,
1 any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import PriceOptError
from .market import save_portfolio
from .scenario import ScenarioConfig, format_report, load_report, run_scenario, to_jsonable
from .simulator import RNG_NAME, format_statistics, simulate_portfolio

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("priceopt")


def _load(args) -> ScenarioConfig:
    config = ScenarioConfig.from_json(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def cmd_simulate(args) -> int:
    config = _load(args)
    if "simulate" not in config.portfolio:
        raise PriceOptError("simulate needs a 'portfolio.simulate' block in the config")
    sim = config.sim_config()
    portfolio, stats = simulate_portfolio(sim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_portfolio(portfolio, out / "portfolio.csv")
    meta = {"rng": RNG_NAME, "scenario_seed": config.seed, "config": sim.to_dict(),
            "statistics": stats}
    text = json.dumps(to_jsonable(meta), indent=2, sort_keys=True) + "\n"
    (out / "simulation.json").write_text(text)
    if args.stats:
        print(format_statistics(stats))
    log.info("wrote %d quotes to %s", portfolio.n, out / "portfolio.csv")
    return EXIT_OK


def _finish(report) -> int:
    if report.status == "failed":
        print(f"error: {report.error}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_INFEASIBLE if report.infeasible else EXIT_OK


def cmd_optimize(args) -> int:
    config = _load(args)
    report = run_scenario(config, output_dir=args.out)
    print(format_report(report.to_dict()))
    return _finish(report)


def cmd_oracle(args) -> int:
    config = _load(args)
    report = run_scenario(config, solver="oracle", output_dir=args.out)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return _finish(report)


def cmd_report(args) -> int:
    report = load_report(args.input)
    print(format_report(report))
    if report.get("status") == "failed":
        return EXIT_ERROR
    return EXIT_OK if report.get("feasible") else EXIT_INFEASIBLE


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for infeasible results."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="priceopt", description="Premium optimisation for new business.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, out_required):
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("simulate", help="generate a synthetic portfolio")
    scenario_args(p, True)
    p.add_argument("--stats", action="store_true", help="print premium statistics")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="solve a scenario and write its report")
    scenario_args(p, True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("oracle", help="solve a scenario by exhaustive search")
    scenario_args(p, False)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="print a saved report")
    p.add_argument("--in", dest="input", required=True, help="directory holding report.json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PriceOptError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
