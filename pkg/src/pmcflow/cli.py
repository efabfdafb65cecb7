"""Command line entry point: ``pmcflow run|verify|scenarios``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import PmcfError


def _cmd_run(args) -> int:
    from .scenarios import load_preset, parse_config, run_scenario

    target = args.config
    cfg = parse_config(target) if Path(target).exists() or target.endswith(".toml") else load_preset(target)
    summary = run_scenario(cfg, args.out)
    status = "PASS" if summary.passed else "FAIL"
    print(f"{cfg.name}: {summary.termination} ({summary.wall_time:.1f} s) {status}")
    for name, verdict in summary.checks.items():
        print(f"  {'pass' if verdict['pass'] else 'FAIL'}  {name}  margin={verdict['margin']:.4g}")
    if summary.message:
        print(f"  {summary.message}")
    return summary.exit_code


def _cmd_verify(args) -> int:
    from .verify import verify_suite

    report = verify_suite(args.filter)
    if args.json:
        print(report.to_json())
    else:
        for r in report.results:
            print(f"{'pass' if r.passed else 'FAIL'}  {r.name:<26} margin={r.margin:<11.4g} {r.detail}")
        print(f"{sum(r.passed for r in report.results)}/{len(report.results)} checks passed")
    return 0 if report.ok else 1


def _cmd_scenarios(args) -> int:
    from .scenarios import list_presets, load_preset

    for name in list_presets():
        cfg = load_preset(name)
        print(f"{name:<30} {cfg.kind:<24} {cfg.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmcflow", description="Prescribed mean curvature flow scenarios.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config (path or preset name)")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default: the config's output.dir)")
    run.set_defaults(func=_cmd_run)
    ver = sub.add_parser("verify", help="run the invariant checks")
    ver.add_argument("--filter", default=None, help="substring or glob on check names and tags")
    ver.add_argument("--json", action="store_true", help="print the machine-readable report")
    ver.set_defaults(func=_cmd_verify)
    sc = sub.add_parser("scenarios", help="list bundled presets")
    sc.set_defaults(func=_cmd_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PmcfError as exc:
        print(f"error [{exc.reason}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
