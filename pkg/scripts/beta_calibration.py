"""How often does beta * t_met_half reach t_conv?

Runs the encounter-proxy grid and reports, for a few beta values, the
fraction of converged (robot, run) pairs with beta * t_met_half >= t_conv.

    python3 scripts/beta_calibration.py --seeds 20
"""

import argparse
from pathlib import Path

import numpy as np

from dsa.harness import Scenario, Simulation, cell_spec
from dsa.metrics import proxy_stats

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "beta.cfg")
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()

    scenario = Scenario.from_text(args.config.read_text(), args.seeds)
    pairs, infeasible, unconverged = [], 0, 0
    for ci, seed in scenario.jobs():
        spec = cell_spec(scenario.cells[ci])
        spec.world.seed = seed
        res = Simulation(spec).run()
        if res.status != "ok":
            infeasible += 1
            continue
        m = res.metrics
        if m.t_conv is None:
            unconverged += 1
            continue
        pairs += [(m.t_conv, t) for t in m.t_met_half if t is not None]
    print(f"runs: {len(list(scenario.jobs()))}  infeasible: {infeasible}  unconverged: {unconverged}")
    ratios = np.array([tc / tm for tc, tm in pairs if tm > 0])
    print(f"t_conv / t_met_half: median {np.median(ratios):.2f}, 95th percentile {np.percentile(ratios, 95):.2f}")
    for beta in (1, 2, 3, 4, 5):
        print(f"beta={beta}: coverage {proxy_stats(pairs, beta):.3f}")


if __name__ == "__main__":
    main()
