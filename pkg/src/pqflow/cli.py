"""pqflow command line: run one experiment, a manifest suite, or the identity checks."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (
    ConfigError, ExperimentConfig, OutputExistsError, SuiteReport, apply_overrides, load_manifest,
    run_experiment, run_suite,
)

USAGE_ERROR = 2


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument("--out", help="output directory (one subdirectory per experiment)")
    p.add_argument("--rtol", type=float, help="flow relative tolerance")
    p.add_argument("--band", type=float, help="limit-set band half-width in s")
    p.add_argument("--bins", type=int, help="angular bins for coverage")
    p.add_argument("--force-overwrite", action="store_true", help="replace existing experiment output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pqflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a single experiment from a JSON config")
    run.add_argument("--config", required=True, help="JSON experiment config")
    _common(run)
    suite = sub.add_parser("suite", help="run every experiment of a JSON manifest")
    suite.add_argument("manifest", nargs="?", help="manifest path (or use --config)")
    suite.add_argument("--config", help="manifest path")
    suite.add_argument("--jobs", type=int, default=1, help="worker processes")
    suite.add_argument("--summary", help="write the aggregated JSON report here")
    _common(suite)
    ident = sub.add_parser("identities", help="diffgeo and W-space identity checks")
    ident.add_argument("--n", type=int, nargs="+", default=[1, 2, 3])
    ident.add_argument("--config", help="optional JSON config for kind=identities")
    _common(ident)
    return parser


def _overrides(args) -> dict:
    return {"seed": args.seed, "out": args.out, "rtol": args.rtol, "band": args.band, "bins": args.bins}


def _load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _report(report: SuiteReport, summary=None) -> int:
    print(report.table())
    if summary:
        Path(summary).write_text(report.to_json() + "\n", encoding="utf-8")
    return report.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = apply_overrides(ExperimentConfig.from_dict(_load_config(args.config)), _overrides(args))
            return _report(SuiteReport([run_experiment(cfg, args.force_overwrite)]))
        if args.command == "suite":
            path = args.manifest or args.config
            if path is None:
                raise ConfigError("manifest", "a manifest path is required")
            try:
                cfgs = load_manifest(path, _overrides(args))
            except OSError as exc:
                raise ConfigError("manifest", f"cannot read {path}: {exc.strerror}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError("manifest", f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc
            report = run_suite(cfgs, args.force_overwrite, max(1, args.jobs))
            summary = args.summary or (Path(args.out) / "suite.json" if args.out and cfgs else None)
            return _report(report, summary)
        data = _load_config(args.config) if args.config else {}
        data.setdefault("kind", "identities")
        data.setdefault("name", "identities")
        data.setdefault("params", {}).setdefault("n", args.n)
        cfg = apply_overrides(ExperimentConfig.from_dict(data), _overrides(args))
        return _report(SuiteReport([run_experiment(cfg, args.force_overwrite)]))
    except ConfigError as exc:
        print(f"pqflow: invalid config: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except OutputExistsError as exc:
        print(f"pqflow: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
