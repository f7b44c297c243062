import csv
import os
import sys

from bsdelab.report import fmt


def write_csv(path, header, rows):
    if path in (None, "-"):
        w = csv.writer(sys.stdout, lineterminator="\n")
    else:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        fh = open(path, "w", newline="")
        w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    if path not in (None, "-"):
        fh.close()
        print(f"wrote {path}", file=sys.stderr)
