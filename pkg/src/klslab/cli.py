"""Command line: ``klslab run``, ``klslab list-bodies``, ``klslab list-profiles``."""
from __future__ import annotations

import argparse
import sys

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run
from .geometry import BODY_CATALOG
from .profiles import PROFILE_CATALOG

EXIT_PASS, EXIT_GATE, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="klslab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment from a JSON config or flags")
    r.add_argument("--config", help="path to a JSON experiment config")
    r.add_argument("--experiment", choices=EXPERIMENTS)
    r.add_argument("--body", action="append", help="body spec, e.g. lp:2 or lp:2:2 (repeatable)")
    r.add_argument("--profile", action="append", help="profile spec, e.g. exp:1 (repeatable)")
    r.add_argument("--n", type=int, action="append", help="dimension (repeatable)")
    r.add_argument("--count", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out", help="output directory")
    sub.add_parser("list-bodies", help="print the body catalog")
    sub.add_parser("list-profiles", help="print the profile catalog")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config).to_dict()
    elif args.experiment:
        cfg = {"experiment": args.experiment}
    else:
        raise ConfigError("run needs --config or --experiment")
    overrides = {"bodies": args.body, "profiles": args.profile, "dims": args.n, "count": args.count,
                 "seed": args.seed, "workers": args.workers, "output_path": args.out}
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-bodies":
        for name, text in BODY_CATALOG.items():
            print(f"{name:10s} {text}")
        return EXIT_PASS
    if args.command == "list-profiles":
        for name, text in PROFILE_CATALOG.items():
            print(f"{name:10s} {text}")
        return EXIT_PASS
    try:
        config = _config_from_args(args)
        report = run(config)
    except ConfigError as exc:
        print(f"klslab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    failures = report.failures()
    print(f"{config.experiment}: {len(report.rows)} rows, {len(failures)} gate failures -> {config.output_path}")
    for row in failures:
        label = row.get("case") or f"{row.get('body')}/{row.get('profile')}/n={row.get('n')}"
        print(f"  FAIL {label}: {row.get('quantity', 'kls_ratio')}")
    return EXIT_PASS if report.passed else EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
