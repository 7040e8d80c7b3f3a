"""Noisy-input loss of LDLQ vs QA-LDLQ across activation-noise levels, on a
synthetic layer whose weights amplify low-variance input directions.

    python scripts/qa_ldlq_sweep.py --n 128 --seed 0
"""

import argparse

import numpy as np

from nestquant import ldlq
from nestquant.codec import QuantizerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--rows", type=int, default=64)
    ap.add_argument("--cond", type=float, default=1e4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n = args.n
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    spectrum = np.logspace(0, -np.log10(args.cond), n)
    h = (q * spectrum) @ q.T
    h = 0.5 * (h + h.T)
    w = (rng.standard_normal((args.rows, n)) * np.logspace(0, 1, n)) @ q.T
    acts = rng.standard_normal((4096, n)) @ (q * np.sqrt(spectrum)).T
    cfg = QuantizerConfig.from_grid(14, (3.25, 4.25, 5.25, 7.5))

    print(f"# amplification ratio {ldlq.amplification_ratio(w, acts, seed=args.seed):.2f}")
    plain = ldlq.ldlq_quantize(w, h, cfg).U
    print("eps2,ldlq_noisy_loss,qa_ldlq_noisy_loss,ratio")
    for eps2 in np.logspace(-5, 0, 11):
        qa = ldlq.qa_ldlq_quantize(w, h, ldlq.NoiseModel(eps2), cfg).U
        a, b = ldlq.noisy_loss(w, plain, h, eps2), ldlq.noisy_loss(w, qa, h, eps2)
        print(f"{eps2:.1e},{a:.4g},{b:.4g},{b / a:.3f}")


if __name__ == "__main__":
    main()
