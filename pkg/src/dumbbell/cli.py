"""Command-line entry points for the sweep laboratory.

Subcommands mirror the stages: cross-section constants, profile solves,
the eps sweep, verdict checking on a stored record, and report emission.
Exit codes: 0 on success, 2 when a verification verdict fails, 1 on
execution errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import cross_section as cs
from . import pipeline as pl

__all__ = ["main"]


def _build_config(args) -> pl.RunConfig:
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
    for key in ("eps_sweep", "fit_window", "fit_window_left", "x0_list",
                "ktilde_list", "spherical_radii"):
        if key in base:
            base[key] = tuple(base[key])
    if getattr(args, "eps", None):
        base["eps_sweep"] = tuple(args.eps)
    if getattr(args, "levels", None) is not None:
        base["sweep_level"] = args.levels
        base["profile_level"] = args.levels
    if getattr(args, "jobs", None) is not None:
        base["jobs"] = args.jobs
    if getattr(args, "cascade_only", False):
        base["cascade_only"] = True
    if getattr(args, "out", None):
        base["out_dir"] = args.out
    return pl.RunConfig(**base).validate()


def _cmd_cross_section(args) -> int:
    mode = cs.disk_ground_mode(3)
    out = {
        "sqrt_lambda1": mode.sqrt_lambda1,
        "lambda1": mode.sqrt_lambda1 ** 2,
        "upsilon3": cs.upsilon(3),
    }
    print(json.dumps(out, indent=1))
    return 0


def _cmd_profiles(args) -> int:
    cfg = _build_config(args)
    constants = pl.run_profiles(cfg)
    print(json.dumps(constants.to_dict(), indent=1))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    record = pl.run_sweep(cfg)
    pl.emit(record, cfg.out_dir)
    for name, v in sorted(record.verdicts.items()):
        if name == "overall_pass":
            continue
        print(f"{name}: {v['verdict']}, final deviation "
              f"{v['final_deviation']:.3e}, "
              f"{'pass' if v['pass'] else 'FAIL'}")
    ok = record.verdicts["overall_pass"]
    print("overall:", "pass" if ok else "FAIL")
    return 0 if ok else 2


def _cmd_verify(args) -> int:
    record = pl.load_record(args.record)
    verdicts = pl.verify(record)
    for name, v in sorted(verdicts.items()):
        if name == "overall_pass":
            continue
        print(f"{name}: {v['verdict']}, final deviation "
              f"{v['final_deviation']:.3e}, "
              f"{'pass' if v['pass'] else 'FAIL'}")
    ok = verdicts["overall_pass"]
    print("overall:", "pass" if ok else "FAIL")
    return 0 if ok else 2


def _cmd_report(args) -> int:
    record = pl.load_record(args.record)
    paths = pl.emit(record, args.out or ".",
                    formats=tuple(args.formats.split(",")))
    for p in paths:
        print(p)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dumbbell",
        description="Weighted dumbbell eigenvalue sweep laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cross-section",
                       help="print the tube cross-section constants")
    p.set_defaults(func=_cmd_cross_section)

    for name, func, help_ in (
            ("profiles", _cmd_profiles, "solve the four limit profiles"),
            ("sweep", _cmd_sweep, "run the eps sweep and emit outputs")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--out", help="output directory")
        p.add_argument("--eps", type=float, nargs="+",
                       help="override the eps sweep")
        p.add_argument("--levels", type=int,
                       help="mesh refinement level for all solves")
        p.add_argument("--jobs", type=int, help="worker count")
        p.add_argument("--cascade-only", action="store_true",
                       help="allow eps below 0.05; left-side quantities "
                            "come from the channel reconstruction only")
        p.set_defaults(func=func)

    p = sub.add_parser("verify", help="re-check verdicts on a stored record")
    p.add_argument("record", help="path to record.json")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("report", help="emit CSV/SVG from a stored record")
    p.add_argument("record", help="path to record.json")
    p.add_argument("--out", help="output directory")
    p.add_argument("--formats", default="json,csv,svg")
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
