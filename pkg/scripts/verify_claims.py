#!/usr/bin/env python3
"""Run the verification checks behind the search's convergence guarantees:
shift invariance of the objective, no non-global local maxima (exhaustive
grids), positive improvement probability off the optimum, and the monotone /
telescoping-increment trajectory identities.
"""

import argparse
import sys

from distbeam.cli import parse_and_dispatch


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/verify")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    jobs = [
        (["verify", "--check", "shift-invariance", "--n-s", "50"], "shift"),
        (["verify", "--check", "local-global", "--n-s", "2", "--resolution", "720"], "grid2"),
        (["verify", "--check", "local-global", "--n-s", "3", "--resolution", "180"], "grid3"),
        (["verify", "--check", "improvement", "--n-s", "10"], "improve"),
        (["verify", "--check", "increment", "--n-s", "10"], "increment"),
    ]
    status = 0
    for argv, name in jobs:
        full = argv + ["--seed", str(args.seed), "--out", f"{args.out}/{name}"]
        print("$ distbeam " + " ".join(full))
        status = max(status, parse_and_dispatch(full))
        print()
    return status


if __name__ == "__main__":
    sys.exit(main())
