#!/usr/bin/env python3
"""Write the seeded synthetic image set as PNGs in the <root>/<class>/ layout."""

import argparse

from busnet import synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", nargs="?", default="data/synthetic")
    ap.add_argument("-n", type=int, default=600)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    root = synthetic.write_dataset(args.root, args.n, args.size, args.seed)
    print(f"wrote {args.n} images to {root}")


if __name__ == "__main__":
    main()
