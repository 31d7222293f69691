"""Convergence time vs message period (10 robots, 25 m^2).

    python3 scripts/converge_sweep.py --seeds 20 --out out/converge
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from dsa.harness import Scenario, run_scenario

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "converge_rate.cfg")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/converge"))
    args = ap.parse_args()

    run_scenario(Scenario.from_text(args.config.read_text(), args.seeds), args.out, threads=args.threads)
    by_period = defaultdict(list)
    with open(args.out / "runs.csv") as f:
        for row in csv.DictReader(f):
            if row["status"] == "ok":
                t = float(row["t_conv"]) if row["t_conv"] else np.inf
                by_period[float(row["t_message"])].append(t)
    print("t_message  median_t_conv  p90_t_conv  unconverged")
    for period, ts in sorted(by_period.items()):
        ts = np.array(ts)
        print(f"{period:9.2f}  {np.median(ts):13.1f}  {np.percentile(ts, 90):10.1f}  {np.sum(~np.isfinite(ts)):11d}")


if __name__ == "__main__":
    main()
