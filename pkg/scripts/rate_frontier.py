"""Rate vs per-entry RMSE for quantized Gaussian matmul: NestQuant over a (q, k)
grid, the uniform max-abs baseline, and the inner-product lower bound.

Writes the full table and the NestQuant frontier as CSV.

    python scripts/rate_frontier.py --n 512 --seed 0 --out results/
"""

import argparse
from pathlib import Path

from nestquant import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=512, help="matrix size (4096 for the full-size run)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    points = bench.synthetic_matmul_benchmark(n=args.n, seed=args.seed, threads=args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"matmul_n{args.n}.csv").write_text(bench.to_csv(points))
    front = bench.frontier([p for p in points if not p.is_baseline])
    (args.out / f"frontier_n{args.n}.csv").write_text(bench.to_csv(front))

    print(f"{'config':<24}{'bits':>8}{'rmse':>10}{'bound':>10}")
    for p in front + [p for p in points if p.is_baseline]:
        print(f"{p.config:<24}{p.bits_entropy:>8.3f}{p.rmse:>10.3f}{p.lower_bound_rmse:>10.3f}")


if __name__ == "__main__":
    main()
