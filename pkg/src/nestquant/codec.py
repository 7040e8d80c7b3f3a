"""Multi-scale NestQuant codec for vectors and matrices.

Rows are normalized to norm ``sqrt(n)``, split into 8-blocks, and each block
is coded in one of ``k`` scaled copies of the E8 Voronoi code. A block stores
its lattice residues plus the index of the scale it used.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import voronoi
from .lattice import DIM

OPT_BETA = "opt"
FIRST_BETA = "first"
STRATEGIES = (OPT_BETA, FIRST_BETA)

# rows per work unit; fixed so results never depend on the thread count
ROW_CHUNK = 256


@dataclass(frozen=True)
class QuantizerConfig:
    """Nesting ratio, ascending absolute scales, and the scale-selection rule."""

    q: int
    betas: tuple[float, ...]
    strategy: str = OPT_BETA

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        object.__setattr__(self, "betas", betas)
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(f"q must be an integer >= 2, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))
        if not betas:
            raise ValueError("at least one beta is required")
        if any(not math.isfinite(b) or b <= 0 for b in betas):
            raise ValueError("betas must be positive and finite")
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ValueError("betas must be strictly increasing")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")

    @classmethod
    def from_grid(cls, q: int, values: Sequence[float], strategy: str = OPT_BETA):
        """Build from scales expressed in units of ``1/q``."""
        return cls(q, tuple(float(v) / q for v in values), strategy)

    @property
    def k(self) -> int:
        return len(self.betas)

    @property
    def d(self) -> int:
        return DIM


@dataclass
class QuantizedVector:
    codes: np.ndarray
    beta_idx: np.ndarray
    scale: float


@dataclass
class QuantizedMatrix:
    """Codes ``(rows, cols)``, 0-based scale indices ``(rows, cols/8)``, row norms."""

    codes: np.ndarray
    beta_idx: np.ndarray
    scales: np.ndarray
    config: QuantizerConfig
    shape: tuple[int, int] = field(init=False)

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        self.beta_idx = np.asarray(self.beta_idx, dtype=np.int64)
        self.scales = np.asarray(self.scales, dtype=np.float64)
        r, n = self.codes.shape
        if n % DIM:
            raise ValueError("row length must be a multiple of 8")
        if self.beta_idx.shape != (r, n // DIM) or self.scales.shape != (r,):
            raise ValueError("inconsistent quantized matrix components")
        self.shape = (r, n)

    def row(self, i: int) -> QuantizedVector:
        return QuantizedVector(self.codes[i], self.beta_idx[i], float(self.scales[i]))

    @property
    def rows(self) -> list[QuantizedVector]:
        return [self.row(i) for i in range(self.shape[0])]

    @classmethod
    def from_rows(cls, rows: Sequence[QuantizedVector], config: QuantizerConfig):
        return cls(
            np.stack([r.codes for r in rows]),
            np.stack([r.beta_idx for r in rows]),
            np.array([r.scale for r in rows]),
            config,
        )


def quantize_blocks(blocks: np.ndarray, cfg: QuantizerConfig):
    """Code normalized 8-blocks; returns ``(codes, beta_idx, reconstruction)``."""
    blocks = np.asarray(blocks, dtype=np.float64).reshape(-1, DIM)
    m = blocks.shape[0]
    best_codes = np.zeros((m, DIM), dtype=np.int64)
    best_rec = np.zeros((m, DIM))
    best_idx = np.zeros(m, dtype=np.int64)
    best_err = np.full(m, np.inf)
    unresolved = np.ones(m, dtype=bool)
    last = cfg.k - 1
    for p, beta in enumerate(cfg.betas):
        codes, rec, overload = voronoi.roundtrip(blocks / beta, cfg.q)
        rec = rec * beta
        if cfg.strategy == OPT_BETA:
            err = np.sum((blocks - rec) ** 2, axis=1)
            take = err < best_err  # strict: earlier scale wins ties
            best_err = np.where(take, err, best_err)
        else:
            take = unresolved & (~overload | (p == last))
            unresolved &= ~take
        best_codes[take] = codes[take]
        best_rec[take] = rec[take]
        best_idx[take] = p
    return best_codes, best_idx, best_rec


def _normalize_rows(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[1]
    scales = np.linalg.norm(a, axis=1)
    safe = np.where(scales > 0, scales, 1.0)
    return a * (math.sqrt(n) / safe)[:, None], scales


def _quantize_chunk(a: np.ndarray, cfg: QuantizerConfig):
    r, n = a.shape
    normed, scales = _normalize_rows(a)
    codes, idx, _ = quantize_blocks(normed.reshape(-1, DIM), cfg)
    codes = codes.reshape(r, n)
    idx = idx.reshape(r, n // DIM)
    zero = scales == 0
    codes[zero] = 0
    idx[zero] = 0
    return codes, idx, scales


def _check_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if a.shape[1] % DIM:
        raise ValueError(f"row length {a.shape[1]} is not a multiple of {DIM}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite values")
    return a


def quantize_matrix(a, cfg: QuantizerConfig, threads: int | None = 1) -> QuantizedMatrix:
    a = _check_matrix(a)
    chunks = [a[i : i + ROW_CHUNK] for i in range(0, a.shape[0], ROW_CHUNK)] or [a]
    if threads is not None and threads <= 1:
        parts = [_quantize_chunk(c, cfg) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _quantize_chunk(c, cfg), chunks))
    return QuantizedMatrix(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        cfg,
    )


def quantize_row(a, cfg: QuantizerConfig) -> QuantizedVector:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("expected a 1-D row")
    return quantize_matrix(a[None, :], cfg).row(0)


def decode_normalized(qm: QuantizedMatrix) -> np.ndarray:
    """Reconstruction in the normalized domain (rows of norm about sqrt(n))."""
    r, n = qm.shape
    cfg = qm.config
    points = voronoi.decode(qm.codes.reshape(-1, DIM), cfg.q)
    betas = np.asarray(cfg.betas)[qm.beta_idx.reshape(-1)]
    return (points * betas[:, None]).reshape(r, n)


def dequantize_matrix(qm: QuantizedMatrix) -> np.ndarray:
    n = qm.shape[1]
    return decode_normalized(qm) * (qm.scales / math.sqrt(n))[:, None]


def dequantize_row(qv: QuantizedVector, cfg: QuantizerConfig) -> np.ndarray:
    return dequantize_matrix(QuantizedMatrix.from_rows([qv], cfg))[0]


def quantized_dot(a: QuantizedVector, b: QuantizedVector, cfg: QuantizerConfig) -> float:
    """Inner product from block codes, rescaled by ``s_a * s_b / n``."""
    if a.codes.shape != b.codes.shape:
        raise ValueError("vectors differ in length")
    n = a.codes.shape[0]
    betas = np.asarray(cfg.betas)
    pa = voronoi.decode(np.asarray(a.codes).reshape(-1, DIM), cfg.q)
    pb = voronoi.decode(np.asarray(b.codes).reshape(-1, DIM), cfg.q)
    total = 0.0
    for j in range(n // DIM):
        total += float(pa[j] @ pb[j]) * betas[a.beta_idx[j]] * betas[b.beta_idx[j]]
    return total * a.scale * b.scale / n


def quantized_matmul(a: QuantizedMatrix, b: QuantizedMatrix) -> np.ndarray:
    """Approximate ``A @ B.T`` from two quantized matrices."""
    if a.config != b.config:
        raise ValueError("quantizer configs differ")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"inner dimensions differ: {a.shape} vs {b.shape}")
    n = a.shape[1]
    prod = decode_normalized(a) @ decode_normalized(b).T
    return prod * np.outer(a.scales, b.scales) / n


def beta_usage(qm: QuantizedMatrix) -> np.ndarray:
    """Empirical probability of each scale index over nonzero rows."""
    used = qm.beta_idx[qm.scales > 0].ravel()
    counts = np.bincount(used, minlength=qm.config.k).astype(np.float64)
    if counts.sum() == 0:
        counts[0] = 1.0
    return counts / counts.sum()


def effective_rate(cfg: QuantizerConfig, usage) -> tuple[float, float]:
    """``(fixed_bits, entropy_bits)`` per entry for a scale-usage distribution."""
    p = np.asarray(usage, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty usage histogram")
    if p.size != cfg.k:
        raise ValueError(f"histogram has {p.size} bins, config has k={cfg.k}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("usage histogram must be a probability vector")
    base = math.log2(cfg.q)
    nz = p[p > 0]
    entropy = float(-np.sum(nz * np.log2(nz)))
    return base + math.log2(cfg.k) / DIM, base + entropy / DIM


def uniform_quantize_row(a, bits: int) -> np.ndarray:
    """Symmetric uniform grid of ``2**bits`` levels after max-abs scaling."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    a = np.asarray(a, dtype=np.float64)
    peak = np.max(np.abs(a), axis=-1, keepdims=True) if a.size else np.zeros(a.shape[:-1] + (1,))
    steps = 2**bits - 1
    safe = np.where(peak > 0, peak, 1.0)
    level = np.floor((a / safe + 1.0) * steps / 2.0 + 0.5)
    return np.where(peak > 0, (2.0 * level - steps) / steps * peak, 0.0)


def uniform_quantize(a, bits: int) -> np.ndarray:
    """Row-wise :func:`uniform_quantize_row` on a matrix."""
    return uniform_quantize_row(np.asarray(a, dtype=np.float64), bits)
