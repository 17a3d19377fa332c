#!/usr/bin/env python3
"""Regenerate the shipped synthetic dataset under data/synthetic."""

import argparse

from esgport.synthetic import generate_market, write_csvs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="data/synthetic")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--assets", type=int, default=5)
    parser.add_argument("--days", type=int, default=1530)
    args = parser.parse_args()
    market = generate_market(n_assets=args.assets, n_days=args.days, seed=args.seed)
    paths = write_csvs(market, args.out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
