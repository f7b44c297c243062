"""Command line: ``bsde-lab run <config>`` and ``bsde-lab list``.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 the config did not
parse or validate, 3 a numerical failure stopped the run.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .config import FORWARD_MODELS, TERMINALS, ConfigError, load_config, validate
from .errors import InvalidArgument, NumericalFailure
from .generators import CATALOG_DEFAULTS, FLAG_NAMES, builtin

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
DEFAULT_OUT = "bsde-lab-out"


def list_catalog() -> str:
    lines = ["generators:"]
    head = ["name", "K"] + list(FLAG_NAMES)
    table = [head]
    for name in sorted(CATALOG_DEFAULTS):
        g = builtin(name)
        table.append([g.describe(), f"{g.K:g}"] + [str(bool(g.flags[f])).lower() for f in FLAG_NAMES])
    table.append(["custom", "user", *["probed"] * len(FLAG_NAMES)])
    widths = [max(len(r[i]) for r in table) for i in range(len(head))]
    for r in table:
        lines.append("  " + "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    lines.append("forward models:")
    lines.extend(f"  {m}" for m in sorted(FORWARD_MODELS))
    lines.append("terminals:")
    lines.extend(f"  {t}" for t in sorted(TERMINALS))
    return "\n".join(lines) + "\n"


def resolve_out_dir(flag: str | None, config_dir: str | None) -> str:
    if flag:
        return flag
    env = os.environ.get("BSDE_LAB_OUT")
    if env:
        return env
    return config_dir or DEFAULT_OUT


def run(path: str, seed=None, out_dir=None, jobs=1, tolerance_scale=None, stream=sys.stdout) -> int:
    from .experiments import run_experiment

    try:
        raw = load_config(path)
        ec = validate(raw, seed=seed, tolerance_scale=tolerance_scale)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, InvalidArgument) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ec.jobs = max(1, int(jobs))
    try:
        bundle = run_experiment(ec)
    except NumericalFailure as exc:
        where = ", ".join(f"{k}={v}" for k, v in (("node", exc.node), ("path", exc.path)) if v is not None)
        print(f"numerical failure in {exc.module or 'unknown module'}: {exc} ({where})", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    target = resolve_out_dir(out_dir, ec.out_dir)
    bundle.write(target)
    for v in bundle.verdicts:
        status = "PASS" if v.passed else "FAIL"
        extra = f" - {v.detail}" if v.detail else ""
        print(f"{status} {v.id}{extra}", file=stream)
    return EXIT_OK if bundle.passed else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bsde-lab", description="BSDE and g-expectation experiments")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override paths.seed")
    r.add_argument("--out-dir", default=None, help="output directory (default: $BSDE_LAB_OUT, output.dir, ./bsde-lab-out)")
    r.add_argument("--jobs", type=int, default=1, help="worker threads for independent suite items")
    r.add_argument("--tolerance-scale", type=float, default=None, help="multiply every tolerance")
    sub.add_parser("list", help="list catalog generators, forward models and terminals")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        sys.stdout.write(list_catalog())
        return EXIT_OK
    return run(args.config, args.seed, args.out_dir, args.jobs, args.tolerance_scale)


if __name__ == "__main__":
    sys.exit(main())
