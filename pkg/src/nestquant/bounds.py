"""Closed-form rate bounds and Monte Carlo measurements of the E8 codebook geometry."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from . import lattice
from .lattice import DIM

# Threshold rate where the inner-product bound switches from its linear to
# its exponential branch. Only the printed approximation is available.
R_STAR = 0.906
NSM_E8 = 0.0716821
NSM_Z = 1.0 / 12.0

MC_CHUNK = 1 << 18


def gamma_lower_bound(rate: float) -> float:
    """Per-dimension inner-product MSE floor for rate-``rate`` Gaussian vectors."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if rate < R_STAR:
        at_star = 2.0 * 2.0 ** (-2 * R_STAR) - 2.0 ** (-4 * R_STAR)
        return 1.0 - (1.0 - at_star) * rate / R_STAR
    return 2.0 * 2.0 ** (-2 * rate) - 2.0 ** (-4 * rate)


def rate_distortion_gaussian(rate: float) -> float:
    if rate < 0:
        raise ValueError("rate must be non-negative")
    return 2.0 ** (-2 * rate)


# radius of the unit-volume ball in R^8: (pi^4 / 24) r^8 = 1
UNIT_BALL_RADIUS = (24.0 / math.pi**4) ** (1.0 / DIM)


def gaussian_measure_ball(radius: float) -> float:
    """``P(|X| <= radius)`` for ``X ~ N(0, I_8)`` (chi-square CDF, 8 dof)."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if math.isinf(radius):
        return 1.0
    t = radius**2 / 2.0
    tail = math.exp(-t) * sum(t**j / math.factorial(j) for j in range(4))
    return 1.0 - tail


def _chunked_mc(total: int, seed: int, fn: Callable[[np.random.Generator, int], np.ndarray],
                threads: int | None = 1) -> np.ndarray:
    """Run ``fn(rng, size)`` over fixed-size chunks with independent child seeds.

    Chunking and seeding do not depend on ``threads``, and the chunk results
    are concatenated in order, so outputs are identical for any thread count.
    """
    sizes = [MC_CHUNK] * (total // MC_CHUNK)
    if total % MC_CHUNK:
        sizes.append(total % MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(np.random.default_rng(c), s) for c, s in zip(children, sizes)]
    if threads is not None and threads <= 1:
        parts = [fn(r, s) for r, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts)


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    # fixed-order summation keeps results reproducible
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


REGIONS = ("cube", "e8_voronoi", "ball")


def _inside(region: str, x: np.ndarray, scale: float) -> np.ndarray:
    """Membership in the unit-volume region scaled by ``scale``."""
    if scale == 0:
        return np.zeros(x.shape[0], dtype=bool)
    if region == "cube":
        return np.max(np.abs(x), axis=1) <= scale / 2.0
    if region == "ball":
        return np.linalg.norm(x, axis=1) <= scale * UNIT_BALL_RADIUS
    if region == "e8_voronoi":
        return ~np.any(lattice.closest_point_e8(x / scale) != 0, axis=1)
    raise ValueError(f"unknown region {region!r}; choose from {REGIONS}")


def gaussian_measure_region(region: str, scale: float, samples: int = 10**6, seed: int = 0,
                            threads: int | None = 1) -> tuple[float, float]:
    """Monte Carlo ``mu(scale * region)`` and its standard error.

    All regions have unit volume before scaling, so equal ``scale`` means equal volume.
    """
    if samples < 10**4:
        raise ValueError("use at least 1e4 samples")
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}; choose from {REGIONS}")
    hits = _chunked_mc(
        samples, seed, lambda rng, m: _inside(region, rng.standard_normal((m, DIM)), scale), threads
    )
    return _mean_stderr(hits.astype(np.float64))


def complement_measures(scale: float, samples: int = 10**6, seed: int = 0,
                        threads: int | None = 1) -> dict[str, np.ndarray]:
    """Paired outside-region indicators for all regions on shared Gaussian samples."""

    def one(rng, m):
        x = rng.standard_normal((m, DIM))
        return np.stack([~_inside(r, x, scale) for r in REGIONS], axis=1)

    out = _chunked_mc(samples, seed, one, threads)
    return {r: out[:, i].astype(np.float64) for i, r in enumerate(REGIONS)}


LATTICES = ("e8", "z")


def nsm_estimate(lattice_name: str = "e8", samples: int = 10**7, seed: int = 0,
                 box: float = 64.0, threads: int | None = 1) -> tuple[float, float]:
    """Monte Carlo normalized second moment of a unit-covolume lattice.

    Points uniform on ``[0, box)^8`` are reduced modulo the lattice. ``2 Z^8``
    is a sublattice of both E8 and Z^8, so for even ``box`` the cube is an
    exact union of fundamental cells and the reduced points are uniform on
    the Voronoi cell.
    """
    if lattice_name not in LATTICES:
        raise ValueError(f"unknown lattice {lattice_name!r}; choose from {LATTICES}")
    if samples < 10**6:
        raise ValueError("use at least 1e6 samples")

    def one(rng, m):
        x = rng.uniform(0.0, box, size=(m, DIM))
        p = lattice.closest_point_e8(x) if lattice_name == "e8" else np.floor(x + 0.5)
        return np.sum((x - p) ** 2, axis=1) / DIM

    return _mean_stderr(_chunked_mc(samples, seed, one, threads))
