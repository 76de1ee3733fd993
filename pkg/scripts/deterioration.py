"""Registration error as a growing fraction of labels is set to unclassified."""

import argparse

from semreg.config import load_config
from semreg.experiments import desk_pair, deterioration_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9])
    ap.add_argument("--config")
    args = ap.parse_args()
    cfg = load_config(args.config)
    rows = deterioration_study(desk_pair(args.seed), args.rates, args.repetitions, cfg, args.seed)
    print("rate\tmean_e_trans\tmean_e_rot\tfailures\truns")
    for r in rows:
        print(f"{100 * r['rate']:.0f}\t{r['mean_e_trans']:.4f}\t{r['mean_e_rot']:.4f}\t{r['failures']}\t{r['runs']}")


if __name__ == "__main__":
    main()
