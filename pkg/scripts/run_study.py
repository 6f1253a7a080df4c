"""Run one or more Monte-Carlo study configs and print the summary tables.

    python3 scripts/run_study.py scripts/configs/outliers.cfg --out-dir results/outliers
"""

import argparse
import csv
import sys
from pathlib import Path

from moesmn.studies import StudyConfig, run_study, write_rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--workers", type=int, default=0)
    ap.add_argument("--replications", type=int, default=0, help="override the config value")
    args = ap.parse_args(argv)
    for path in args.configs:
        cfg = StudyConfig.from_file(path)
        if args.workers:
            cfg.workers = args.workers
        if args.replications:
            cfg.replications = args.replications
        rows, summary = run_study(cfg)
        out = Path(args.out_dir) / Path(path).stem
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "replications.csv", rows)
        write_rows(out / "summary.csv", summary)
        print(f"== {path}: {len(rows)} fits -> {out}")
        with open(out / "summary.csv", newline="") as fh:
            for row in csv.reader(fh):
                print(",".join(row[:12]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
