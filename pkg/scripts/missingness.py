"""Test MAE under increasing point-missing ratios."""

import argparse

from mkhnet import experiments as ex
from mkhnet.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.1, 0.3, 0.5])
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()

    setup = ex.diffusion_setup()
    print("seed  " + "  ".join(f"mae@{r:.0%}".rjust(9) for r in args.ratios))
    for seed in args.seeds:
        cfg = RunConfig(seed=seed, epochs=args.epochs)
        maes = [ex.run(setup, cfg, r).test_mae for r in args.ratios]
        print(f"{seed:4d}  " + "  ".join(f"{m:9.4f}" for m in maes), flush=True)


if __name__ == "__main__":
    main()
