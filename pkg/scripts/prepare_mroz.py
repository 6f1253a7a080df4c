"""Convert the Mroz (1987) labour-supply table into the moesmn dataset layout.

Input: a CSV with at least the columns hours, educ, age, exper, expersq,
unem, kidslt6 (the layout distributed with Wooldridge's textbook data).
Output columns: y = hours / 1000 (left-censored at 0 when hours == 0),
x1..x4 = educ, age, exper, expersq and r1..r3 = unem, kidslt6, age.

    python3 scripts/prepare_mroz.py MROZ.csv mroz_prepared.csv
"""

import argparse
import csv
import sys

import numpy as np

from moesmn.io import write_dataset
from moesmn.model import CensoredData

X_COLS = ("educ", "age", "exper", "expersq")
R_COLS = ("unem", "kidslt6", "age")


def load_mroz(path) -> CensoredData:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    missing = {"hours", *X_COLS, *R_COLS} - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    col = lambda name: np.array([float(r[name]) for r in rows])
    y = col("hours") / 1000.0
    cens = y <= 0
    n = y.size
    X = np.column_stack([np.ones(n)] + [col(c) for c in X_COLS])
    R = np.column_stack([np.ones(n)] + [col(c) for c in R_COLS])
    return CensoredData(np.where(cens, np.nan, y), cens, np.where(cens, -np.inf, np.nan),
                        np.where(cens, 0.0, np.nan), X, R)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("target")
    args = ap.parse_args(argv)
    data = load_mroz(args.source)
    write_dataset(args.target, data)
    print(f"{data.n} rows, {data.rho.mean():.2%} left-censored -> {args.target}", file=sys.stderr)


if __name__ == "__main__":
    main()
