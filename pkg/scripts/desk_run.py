#!/usr/bin/env python3
"""Seed sweep of the desk-scale synthetic experiment, in memory.

For each seed: regenerate the data, 5-fold CV of the three families, then a
3-member majority vote. Results go to stdout and, with --json, to a file.
"""

import argparse
import json
import time

from busnet import desk


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--optimizers", nargs="+", default=["adam"], choices=["sgdm", "adam"])
    ap.add_argument("--ensemble-optimizer", default="adam", choices=["sgdm", "adam"])
    ap.add_argument("--json", help="write per-seed results here")
    args = ap.parse_args()
    if args.ensemble_optimizer not in args.optimizers:
        ap.error("--ensemble-optimizer must be one of --optimizers")

    t0 = time.perf_counter()
    results = [desk.run_seed(s, tuple(args.optimizers), args.ensemble_optimizer, log=print) for s in args.seeds]
    wins = sum(r.ensemble_accuracy >= r.best_member for r in results)
    print(f"ensemble >= best member in {wins}/{len(results)} seeds; total {time.perf_counter() - t0:.0f}s")
    if args.json:
        with open(args.json, "w") as f:
            json.dump([r.__dict__ | {"ensemble_members": list(r.ensemble_members)} for r in results], f, indent=1)


if __name__ == "__main__":
    main()
