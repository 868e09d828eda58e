"""Dynamic regret with the Kalman one-step prediction vs the filtered current estimate, over several seeds."""

import argparse
import csv
from pathlib import Path

import numpy as np

from aggdefense import RunConfig, preset, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--scenario", default="surveillance_dynamic")
    ap.add_argument("--out", default="runs/regret_prediction.csv")
    args = ap.parse_args()
    rows = []
    for seed in range(args.seeds):
        on = run(RunConfig(preset(args.scenario), seed=seed)).regret
        off = run(RunConfig(preset(args.scenario), seed=seed, prediction=False)).regret
        rows.append((seed, on, off))
        print(f"seed {seed}: R_T prediction on {on:.4f}, off {off:.4f}")
    on, off = np.array([r[1] for r in rows]), np.array([r[2] for r in rows])
    print(f"median: on {np.median(on):.4f}, off {np.median(off):.4f}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "regret_prediction_on", "regret_prediction_off"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
