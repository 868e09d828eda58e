"""Basketball defense with a pass at t = 15 s; compares runs with and without the collision barrier."""

import argparse
from pathlib import Path

import numpy as np

from aggdefense import RunConfig, preset, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for barrier in (True, False):
        tag = "basketball_demo" + ("" if barrier else "_nobarrier")
        r = run(RunConfig(preset("basketball_demo"), out_dir=Path(args.out) / tag, seed=args.seed, barrier=barrier))
        print(f"{tag}: min pairwise distance {np.nanmin(r.min_distance):.3f}, R_T={r.regret:.2f}, "
              f"repairs {r.summary['box_repairs']}, violations {r.feasibility_violations}")


if __name__ == "__main__":
    main()
