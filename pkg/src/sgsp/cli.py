"""Command-line entry point: ``sgsp run | verify | summarize``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .equilibrium import sgsp_check
from .game import ConfigurationError, GameStructureError, exact_value, load_game, policy_from_list
from .harness import ExperimentConfig, run_cells, summarize_dir, format_summary
from .oracle import is_nash

EXIT_OK, EXIT_ABORT, EXIT_CONFIG = 0, 1, 2


def _run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        results = run_cells(cfg)
    except ConfigurationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failed = [(alg, seed, err) for alg, seed, err in results if err]
    for alg, seed, err in failed:
        print(f"aborted: {alg} seed {seed}: {err}", file=sys.stderr)
    print((Path(cfg.output_dir) / "summary.txt").read_text(), end="")
    return EXIT_ABORT if failed else EXIT_OK


def _verify(args) -> int:
    try:
        game = load_game(args.game)
        doc = json.loads(Path(args.policy).read_text())
        if isinstance(doc, dict):
            pi = policy_from_list(game, doc["policy"])
            v = doc.get("values")
        else:
            pi, v = policy_from_list(game, doc), None
    except (OSError, json.JSONDecodeError, KeyError, GameStructureError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    # without explicit values, check the policy at its own value
    v = exact_value(game, pi) if v is None else v
    report = sgsp_check(game, v, pi, args.tol)
    ok, gain = is_nash(game, pi, args.tol)
    doc = report.to_dict()
    if not args.entries:
        doc.pop("per_entry")
    doc["is_nash"] = ok
    doc["max_unilateral_gain"] = gain
    print(json.dumps(doc, indent=1))
    return EXIT_OK


def _summarize(args) -> int:
    try:
        rows = summarize_dir(args.directory)
    except ConfigurationError as exc:
        print(f"cannot summarize: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_summary(rows), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgsp", description="Stationary Nash equilibria of discounted stochastic games.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (algorithm, seed) cell of an experiment config")
    p.add_argument("config")
    p.set_defaults(func=_run)

    p = sub.add_parser("verify", help="certify a policy with the SG-SP check and a best-response oracle")
    p.add_argument("game")
    p.add_argument("policy", help="JSON list [agent][state][action], or {policy, values}")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--entries", action="store_true", help="include every (agent, state, action) entry")
    p.set_defaults(func=_verify)

    p = sub.add_parser("summarize", help="rebuild summary.csv/summary.txt from a run directory")
    p.add_argument("directory")
    p.set_defaults(func=_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
