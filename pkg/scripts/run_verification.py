#!/usr/bin/env python3
"""Run every claim check at one or more seeds and write JSON reports per seed."""

import argparse
import sys
from pathlib import Path

from tdgeo.cli import main as cli_main


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--claim", default="all")
    p.add_argument("--out", default="verification_out")
    args = p.parse_args()
    worst = 0
    for seed in args.seeds:
        print(f"== seed {seed}")
        code = cli_main(["verify", "--claim", args.claim, "--seed", str(seed),
                         "--out", str(Path(args.out) / f"seed_{seed}")])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
