"""Gaussian mass outside equal-volume cube, E8 Voronoi cell and ball, by scale.

    python scripts/shaping_measures.py --scales 1:0.25:6 --samples 1000000 --seed 0
"""

import argparse
import math

from nestquant import bounds
from nestquant.cli import _range


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scales", type=_range, default=_range("1:0.25:6"))
    ap.add_argument("--samples", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("scale,cube,e8_voronoi,ball_mc,ball_exact")
    for i, s in enumerate(args.scales):
        out = bounds.complement_measures(s, args.samples, args.seed + i)
        exact = 1 - bounds.gaussian_measure_ball(s * bounds.UNIT_BALL_RADIUS)
        vals = [out[r].mean() for r in bounds.REGIONS]
        print(f"{s:g}," + ",".join(f"{v:.3e}" for v in vals) + f",{exact:.3e}")
    gain = bounds.NSM_Z / bounds.NSM_E8
    print(f"# granular gain of E8 over Z: {gain:.3f} ({10 * math.log10(gain):.2f} dB)")


if __name__ == "__main__":
    main()
