"""Synthetic Gaussian matrix-multiplication benchmark.

Quantizes two iid N(0, 1) matrices with NestQuant over a grid of (q, k) and
with a uniform max-abs-scaled baseline, and reports per-entry RMSE of
``A @ B.T`` against bits per entry and the inner-product lower bound.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import beta_opt, bounds, codec
from .codec import QuantizerConfig
from .lattice import DIM

DEFAULT_QS = (4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 16, 18, 20, 24)
DEFAULT_KS = (1, 2, 3, 4, 6)
DEFAULT_UNIFORM_BITS = (2, 3, 4, 5, 6)
ROW_BLOCK = 512

CSV_COLUMNS = ("config", "bits_fixed", "bits_entropy", "rmse", "lower_bound_rmse", "mse_stderr", "seed", "n")


@dataclass
class RateDistortionPoint:
    config: str
    bits_fixed: float
    bits_entropy: float
    rmse: float
    lower_bound_rmse: float
    mse_stderr: float
    seed: int
    n: int
    betas: tuple[float, ...] = ()

    @property
    def is_baseline(self) -> bool:
        return self.config.startswith("uniform")


def _matmul_error_stats(a, b, a_hat, b_hat) -> tuple[float, float]:
    """RMSE per entry of ``A B^T`` and the standard error of the per-entry MSE."""
    total = 0.0
    total_sq = 0.0
    count = 0
    for lo in range(0, a.shape[0], ROW_BLOCK):
        err = a[lo : lo + ROW_BLOCK] @ b.T - a_hat[lo : lo + ROW_BLOCK] @ b_hat.T
        e2 = err**2
        total += float(e2.sum())
        total_sq += float((e2**2).sum())
        count += e2.size
    mse = total / count
    var = max(total_sq / count - mse**2, 0.0)
    return math.sqrt(mse), math.sqrt(var / count)


def _lower_bound_rmse(n: int, rate: float) -> float:
    return math.sqrt(n * bounds.gamma_lower_bound(rate))


def sample_blocks(a: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random 8-blocks of the row-normalized matrix (the codec's input domain)."""
    n = a.shape[1]
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    normed = a * math.sqrt(n) / np.where(norms > 0, norms, 1.0)
    blocks = normed.reshape(-1, DIM)
    if count >= blocks.shape[0]:
        return blocks
    return blocks[np.sort(rng.choice(blocks.shape[0], size=count, replace=False))]


def nestquant_point(a, b, cfg: QuantizerConfig, seed: int, label: str, threads: int | None = 1) -> RateDistortionPoint:
    qa = codec.quantize_matrix(a, cfg, threads)
    qb = codec.quantize_matrix(b, cfg, threads)
    rmse, stderr = _matmul_error_stats(a, b, codec.dequantize_matrix(qa), codec.dequantize_matrix(qb))
    counts = np.bincount(np.concatenate([qa.beta_idx.ravel(), qb.beta_idx.ravel()]), minlength=cfg.k)
    fixed, entropy = codec.effective_rate(cfg, counts / counts.sum())
    n = a.shape[1]
    return RateDistortionPoint(label, fixed, entropy, rmse, _lower_bound_rmse(n, entropy), stderr, seed, n, cfg.betas)


def uniform_point(a, b, bits: int, seed: int) -> RateDistortionPoint:
    a_hat = codec.uniform_quantize(a, bits)
    b_hat = codec.uniform_quantize(b, bits)
    rmse, stderr = _matmul_error_stats(a, b, a_hat, b_hat)
    n = a.shape[1]
    return RateDistortionPoint(f"uniform:bits={bits}", bits, bits, rmse, _lower_bound_rmse(n, bits), stderr, seed, n)


def synthetic_matmul_benchmark(
    n: int = 512,
    qs: Sequence[int] = DEFAULT_QS,
    ks: Sequence[int] = DEFAULT_KS,
    uniform_bits: Sequence[int] = DEFAULT_UNIFORM_BITS,
    universe: str = "synthetic",
    seed: int = 0,
    dp_samples: int = 1 << 15,
    threads: int | None = 1,
) -> list[RateDistortionPoint]:
    """Grid-search NestQuant over ``(q, k)`` plus uniform baselines on n x n Gaussians."""
    if n % DIM:
        raise ValueError("n must be a multiple of 8")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    b = rng.standard_normal((n, n))
    half = dp_samples // 2
    train = np.vstack([sample_blocks(a, half, rng), sample_blocks(b, dp_samples - half, rng)])

    points = []
    for q in qs:
        prof = beta_opt.profile_errors(train, beta_opt.universe(universe, q), q)
        for k in ks:
            idx, _ = beta_opt.dp_optimal_betas(prof, k)
            cfg = QuantizerConfig(q, tuple(prof.betas[idx]))
            points.append(nestquant_point(a, b, cfg, seed, f"nestquant:q={q}:k={k}", threads))
    for bits in uniform_bits:
        points.append(uniform_point(a, b, bits, seed))
    return points


def frontier(points: Iterable[RateDistortionPoint], rate: str = "bits_entropy") -> list[RateDistortionPoint]:
    """Points not dominated in (rate, rmse), sorted by rate."""
    pts = sorted(points, key=lambda p: (getattr(p, rate), p.rmse))
    out = []
    best = math.inf
    for p in pts:
        if p.rmse < best:
            out.append(p)
            best = p.rmse
    return out


def best_at_rate(points: Iterable[RateDistortionPoint], max_bits: float, rate: str = "bits_entropy"):
    """Lowest-RMSE point whose rate does not exceed ``max_bits`` (or None)."""
    eligible = [p for p in points if getattr(p, rate) <= max_bits + 1e-12]
    return min(eligible, key=lambda p: p.rmse, default=None)


def to_csv(points: Iterable[RateDistortionPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in points:
        w.writerow([p.config] + [repr(float(getattr(p, c))) for c in CSV_COLUMNS[1:6]] + [p.seed, p.n])
    return buf.getvalue()
