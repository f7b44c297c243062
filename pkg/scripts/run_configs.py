#!/usr/bin/env python3
"""Run every config in a directory through the CLI and tabulate exit codes."""
import argparse
import glob
import io
import os

from bsdelab.cli import run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config_dir", nargs="?", default=os.path.join(os.path.dirname(__file__), os.pardir, "configs"))
    ap.add_argument("--out-root", default="bsde-lab-out")
    args = ap.parse_args(argv)
    for path in sorted(glob.glob(os.path.join(args.config_dir, "*.cfg"))):
        name = os.path.splitext(os.path.basename(path))[0]
        buf = io.StringIO()
        code = run(path, out_dir=os.path.join(args.out_root, name), stream=buf)
        fails = [line for line in buf.getvalue().splitlines() if line.startswith("FAIL")]
        print(f"{name:<28} exit {code}" + (f"  ({fails[0]})" if fails else ""))


if __name__ == "__main__":
    main()
