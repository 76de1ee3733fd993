"""Loop-pair success per displacement bucket on a synthetic looping drive."""

import argparse

from semreg.config import load_config
from semreg.evaluation import format_table
from semreg.experiments import hardness_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--per-bucket", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=0.03)
    ap.add_argument("--config")
    args = ap.parse_args()
    rows, _ = hardness_sweep(args.per_bucket, args.seed, load_config(args.config), noise=args.noise)
    print(format_table(rows))


if __name__ == "__main__":
    main()
