#!/usr/bin/env python3
"""Delta and k sweeps on the three-state spiral chain, with plane CSVs and SVGs."""

import argparse
from pathlib import Path

import numpy as np

from tdgeo.dynamics import read_trajectory_csv
from tdgeo.experiments import render_svg, run_spiral


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="spiral_out")
    p.add_argument("--gamma", type=float, default=0.9)
    args = p.parse_args()
    out = Path(args.out)
    summary = run_spiral(gamma=args.gamma, out_dir=out)
    for pt in summary["points"]:
        _, cols = read_trajectory_csv(out / pt["csv"])
        xy = np.column_stack([cols["plane_x"], cols["plane_y"]])
        render_svg(out / (Path(pt["csv"]).stem + ".svg"), paths=[xy])
        print(f"{pt['sweep']:>5}  delta={pt['delta']:<5g} k={pt['k']}  {pt['status']:<10} "
              f"mu-error {pt['initial_mu_error']:.3g} -> {pt['final_mu_error']:.3g}")


if __name__ == "__main__":
    main()
