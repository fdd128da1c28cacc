"""Command line: ``vainmcf run|check-vanity|plot|selftest``.

Exit codes: 0 success, 1 check failed, 2 bad config/snapshot/run directory,
3 numerical instability.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .grid import ConfigurationError, SnapshotFormatError, read_snapshot
from .solver import InstabilityError
from .vanity import DomainMask, PreconditionError, is_vain_function

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_UNSTABLE = 0, 1, 2, 3

log = logging.getLogger("vainmcf")


def cmd_run(args) -> int:
    from .runner import run_scenario, write_artifacts

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.output) if args.output else Path(cfg.output_dir)
    t0 = time.perf_counter()
    try:
        result = run_scenario(cfg)
    except InstabilityError as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (ConfigurationError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_artifacts(result, out, Path(args.config).read_bytes())
    sl = result.slices
    print(f"run written to {out} ({time.perf_counter() - t0:.1f}s)")
    for r in sl.rungs:
        t = "none" if r.extinction_time is None else f"{r.extinction_time:.4f}"
        print(f"  rung a={r.a:g}: extinction {t}, clamps {r.clamp_count}, steps {r.steps}")
    if sl.extinction_time_limit is not None:
        print(f"  extrapolated extinction time {sl.extinction_time_limit:.4f}")
    print(f"  w monitor verdict: {result.w_monitor.verdict}")
    for e in result.events:
        loc = ", ".join(f"{c:+.4f}" for c in e.location)
        print(f"  event {e.kind} t={e.t:.4f} at ({loc}) on_plane={e.on_plane}")
    return EXIT_OK


def cmd_check_vanity(args) -> int:
    try:
        u = read_snapshot(args.snapshot)
    except (SnapshotFormatError, ConfigurationError, OSError) as exc:
        print(f"snapshot error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    values = u.values if u.cap is None else np.minimum(u.values, u.cap)
    omega = DomainMask(u.spec, ~np.isnan(values))
    try:
        check = is_vain_function(values, omega, tol=args.tol)
    except PreconditionError:
        print("FAIL: the set of valid nodes is not vain")
        return EXIT_FAIL
    if check:
        print(f"PASS: {args.snapshot} is vain (tol {args.tol:g})")
        return EXIT_OK
    x, xl = check.witness
    cx, cl = u.spec.coords(x), u.spec.coords(xl)
    print(f"FAIL: {check.reason}")
    print(f"  witness x = {tuple(np.round(cx, 6))} index {x}, u(x) = {values[x]!r}")
    print(f"  x_lambda = {tuple(np.round(cl, 6))} index {xl}, u(x_lambda) = {values[xl]!r}")
    return EXIT_FAIL


def cmd_plot(args) -> int:
    from .plots import RunDirError, plot_run

    try:
        files = plot_run(args.run_dir)
    except (RunDirError, SnapshotFormatError, ConfigurationError) as exc:
        print(f"run directory error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import run_all

    only = {int(k) for k in args.only.split(",")} if args.only else None
    results = run_all(only, seed=args.seed)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vainmcf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve a scenario and write its artifact tree")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides config and environment)")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check-vanity", help="test a snapshot for vanity")
    c.add_argument("snapshot")
    c.add_argument("--tol", type=float, default=1e-10)
    c.set_defaults(func=cmd_check_vanity)
    pl = sub.add_parser("plot", help="render figures of a finished run")
    pl.add_argument("run_dir")
    pl.set_defaults(func=cmd_plot)
    s = sub.add_parser("selftest", help="run the acceptance criteria")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
