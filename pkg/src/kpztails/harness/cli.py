"""Command-line entry point: ``kpztails <experiment> [flags]``.

Parameters come from the experiment defaults, then an optional JSON config
file, then explicit flags (later layers win).  Exit status: 0 when every pass
flag is true, 1 otherwise, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..errors import DomainError
from ..rng import RngHandle
from .registry import EXPERIMENTS, list_experiments
from .runner import run, worker_map, write_result
from .suites import SUITES, run_suite

SEED_ENV = "KPZTAILS_SEED"
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"root seed (default ${SEED_ENV} or 0)")
    p.add_argument("--out", type=Path, default=Path("kpztails_out"), help="output directory")
    p.add_argument("--replicas", type=int, default=1, help="worker processes (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpztails", description="KPZ upper-tail simulation and checks")
    sub = parser.add_subparsers(dest="command", required=True)
    for exp in EXPERIMENTS.values():
        sp = sub.add_parser(exp.name, help=exp.doc, description=f"{exp.doc} ({exp.anchor})")
        _common(sp)
        sp.add_argument("--config", type=Path, default=None, help="JSON file of parameter values")
        for prm in exp.params:
            flag = "--" + prm.name.replace("_", "-")
            kind = str if prm.sweep else prm.kind
            extra = " (comma-separated sweep)" if prm.sweep else ""
            sp.add_argument(flag, dest=prm.name, type=kind, default=None,
                            help=f"{prm.help}{extra}; default {prm.default}")
    vp = sub.add_parser("verify", help="run a seeded verification suite")
    _common(vp)
    vp.add_argument("--suite", choices=sorted(SUITES), default="quick")
    sub.add_parser("list", help="list experiments")
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _report(rows) -> None:
    for name, r in rows:
        status = "PASS" if r.pass_flag else "FAIL"
        print(f"{status} {name} {r.quantity} estimate={r.estimate:.6g} se={r.stderr:.3g} "
              f"bounds=[{r.lo:.6g}, {r.hi:.6g}]")


def _run_experiment(args) -> int:
    exp = EXPERIMENTS[args.command]
    flags = {p.name: getattr(args, p.name) for p in exp.params}
    try:
        params = exp.resolve(_load_config(args.config), flags)
        points = exp.points(params)
    except DomainError as e:
        print(f"usage error: {e}", file=sys.stderr)
        print(json.dumps(exp.schema(), indent=2), file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if args.seed is not None else _default_seed()
    with worker_map(args.replicas) as mapper:
        try:
            res = run(exp, points, RngHandle(seed), mapper, args.replicas)
        except DomainError as e:
            print(f"usage error: {e}", file=sys.stderr)
            print(json.dumps(exp.schema(), indent=2), file=sys.stderr)
            return EXIT_USAGE
    write_result(res, exp, args.out)
    if exp.name == "geometry":
        print(json.dumps(res.results[0].snapshots["describe"], indent=2))
    _report((exp.name, r) for r in res.rows)
    return EXIT_PASS if res.passed else EXIT_FAIL


def _verify(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    with worker_map(args.replicas) as mapper:
        results = run_suite(args.suite, seed, mapper, args.replicas, args.out)
    _report((res.experiment, r) for res in results for r in res.rows)
    ok = all(res.passed for res in results)
    print(f"suite {args.suite}: {'PASS' if ok else 'FAIL'}")
    return EXIT_PASS if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_PASS
    try:
        if args.command == "list":
            for name, doc, anchor in list_experiments():
                print(f"{name:10s} {doc} [{anchor}]")
            return EXIT_PASS
        if args.replicas < 1:
            raise UsageError("--replicas must be >= 1")
        if args.command == "verify":
            return _verify(args)
        return _run_experiment(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
