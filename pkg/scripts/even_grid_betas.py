"""Reconstruction RMSE of iid Gaussian 8-vectors at q=16 for k evenly spaced
scales on (0, 10]/q, under both scale-selection rules, next to the DP-chosen
subsets of the same size.

    python scripts/even_grid_betas.py --blocks 1000000 --seed 0
"""

import argparse
import math

import numpy as np

from nestquant import beta_opt, codec
from nestquant.codec import FIRST_BETA, OPT_BETA, QuantizerConfig


def rmse(x, cfg):
    _, _, rec = codec.quantize_blocks(x, cfg)
    return math.sqrt(np.mean((x - rec) ** 2))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=10**6)
    ap.add_argument("--train", type=int, default=1 << 15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ks", default="2,4,6,8,10")
    args = ap.parse_args()

    q = 16
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((args.blocks, 8))
    prof = beta_opt.profile_errors(rng.standard_normal((args.train, 8)), beta_opt.universe("appendixF", q), q)
    print("k,subset,betas_times_q,opt_rmse,first_rmse")
    for k in (int(v) for v in args.ks.split(",")):
        even = [10.0 * i / k for i in range(1, k + 1)]
        idx, _ = beta_opt.dp_optimal_betas(prof, k)
        for name, grid in (("even", even), ("dp", list(prof.betas[idx] * q))):
            opt = rmse(x, QuantizerConfig.from_grid(q, grid, OPT_BETA))
            first = rmse(x, QuantizerConfig.from_grid(q, grid, FIRST_BETA))
            print(f"{k},{name},{';'.join(f'{g:g}' for g in grid)},{opt:.4f},{first:.4f}")


if __name__ == "__main__":
    main()
