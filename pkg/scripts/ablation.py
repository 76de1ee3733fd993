"""Length-only vs distribution consistency on scenes rich in swapped matches."""

import argparse

from semreg.config import load_config
from semreg.experiments import ablation_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=700)
    ap.add_argument("--config")
    args = ap.parse_args()
    out = ablation_study(args.pairs, load_config(args.config), args.seed)
    print("mode\tpairs\tsuccesses\trate\tmean_edges")
    for mode, r in out.items():
        print(f"{mode}\t{r['pairs']}\t{r['successes']}\t{r['rate']:.1f}\t{r['mean_edges']:.1f}")


if __name__ == "__main__":
    main()
