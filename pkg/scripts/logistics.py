"""Steady-state carrier perception error for DSA-RW and DSA-KE across
carrier speeds.

    python3 scripts/logistics.py --seeds 10 --threads 1
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
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "logistics.cfg")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/logistics"))
    args = ap.parse_args()

    run_scenario(Scenario.from_text(args.config.read_text(), args.seeds), args.out, threads=args.threads)
    err = defaultdict(list)
    with open(args.out / "runs.csv") as f:
        for row in csv.DictReader(f):
            if row["s_error_steady"]:
                err[(float(row["v_c_agg"]), row["behaviour"])].append(float(row["s_error_steady"]))
    print("v_c_agg  rw_mean   ke_mean   improvement")
    for v in sorted({v for v, _ in err}):
        rw, ke = np.mean(err[(v, "rw")]), np.mean(err[(v, "ke")])
        print(f"{v:7.3f}  {rw:.4f}   {ke:.4f}   {1 - ke / rw:+.1%}")


if __name__ == "__main__":
    main()
