"""Shape formation demo: prints the in-shape fraction over time and writes
frame snapshots for plotting.

    python3 scripts/shape_demo.py --seed 0 --out out/shape
"""

import argparse
from pathlib import Path

from dsa.harness import Job, Scenario, run_job

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "shape.cfg")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--snapshot-every", type=float, default=1.0)
    ap.add_argument("--out", type=Path, default=Path("out/shape"))
    args = ap.parse_args()

    scenario = Scenario.from_text(args.config.read_text(), 1)
    run_job(Job(0, scenario.cells[0], args.seed, str(args.out), args.snapshot_every))
    series = args.out / "series" / f"cell000_seed{args.seed}.csv"
    lines = series.read_text().splitlines()
    header = lines[0].split(",")
    t_col, f_col = header.index("t"), header.index("in_shape")
    print("t      in_shape")
    for line in lines[1::10]:
        cols = line.split(",")
        print(f"{float(cols[t_col]):5.0f}  {cols[f_col] or '-'}")
    print(f"frames written to {args.out / 'frames'}")


if __name__ == "__main__":
    main()
