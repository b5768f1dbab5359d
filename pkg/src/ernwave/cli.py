"""
Command-line interface.

::

    ernwave run      --config run.ini --out out/
    ernwave converge --config run.ini --out conv/ --workers 3
    ernwave ct-audit --out audit/
    ernwave report   --out out/

Exit codes: 0 success, 1 invalid configuration or failed audit,
2 breakdown reported by the run, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config
from .couch_torrence import ct_audit, write_audit_report
from .geometry import SpacetimeParams
from .runner import convergence_suite, report, run

log = logging.getLogger("ernwave")


def _load(path) -> RunConfig:
    return RunConfig() if path is None else parse_config(path)


def _cmd_run(args) -> int:
    cfg = _load(args.config)
    outcome = run(cfg, args.out)
    m = outcome.manifest
    print(f"{m.status}: t* = {m.summary['final_t_star']:g}, {m.summary['steps']} steps, "
          f"{m.wall_time_s:.1f} s -> {args.out}")
    return m.exit_status


def _cmd_converge(args) -> int:
    cfg = _load(args.config)
    rep = convergence_suite(cfg, levels=args.levels, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "convergence.json", "w") as fh:
        json.dump(rep.as_dict(), fh, indent=2)
        fh.write("\n")
    print(f"n_r            {rep.n_r}")
    print(f"mms orders     {[round(x, 2) for x in rep.mms_orders]}")
    print(f"H0 drift order {[round(x, 2) for x in rep.h0_orders]}")
    print(f"self-diff order {rep.self_difference_order:.2f}")
    for line in rep.flags + rep.notes:
        print(line)
    return 0


def _cmd_ct_audit(args) -> int:
    mass = _load(args.config).params.mass if args.config else 1.0
    rep = ct_audit(SpacetimeParams(mass))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_audit_report(rep, out / "ct_audit.json")
    print(f"Couch-Torrence audit: {'passed' if rep['passed'] else 'FAILED'} -> {out / 'ct_audit.json'}")
    return 0 if rep["passed"] else 1


def _cmd_report(args) -> int:
    out = Path(args.out)
    if not out.is_dir():
        print(f"no such trace directory: {out}", file=sys.stderr)
        return 1
    text = report(out)
    (out / "report.md").write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ernwave", description="Nonlinear waves on extremal Reissner-Nordstrom.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="INI configuration file (defaults if omitted)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")

    sp = sub.add_parser("run", help="evolve one configuration and write traces")
    common(sp)
    sp.set_defaults(func=_cmd_run)
    sp = sub.add_parser("converge", help="orders of accuracy at n_r, 2 n_r, 4 n_r")
    common(sp)
    sp.add_argument("--levels", type=int, default=3)
    sp.set_defaults(func=_cmd_converge)
    sp = sub.add_parser("ct-audit", help="verify the Couch-Torrence identities")
    common(sp)
    sp.set_defaults(func=_cmd_ct_audit)
    sp = sub.add_parser("report", help="markdown summary of a trace directory")
    common(sp, config=False)
    sp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for breakdown here
        return 1 if exc.code == 2 else int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
