"""Full model vs. spatial branches disabled, over several seeds."""

import argparse

from mkhnet import experiments as ex
from mkhnet.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()

    setup = ex.diffusion_setup()
    print("seed  full_mae  no_spatial_mae")
    for seed in args.seeds:
        cfg = RunConfig(seed=seed, epochs=args.epochs)
        full = ex.run(setup, cfg).test_mae
        off = ex.run(setup, cfg.with_(spatial=False)).test_mae
        print(f"{seed:4d}  {full:8.4f}  {off:14.4f}", flush=True)


if __name__ == "__main__":
    main()
