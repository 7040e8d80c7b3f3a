"""Hessian-aware weight rounding (LDLQ) and its quantized-activation variant.

With ``H = L D L^T`` (``L`` unit lower triangular) the proxy loss
``tr((W - U) H (W - U)^T)`` equals ``tr((W - U) L D L^T (W - U)^T)``. Columns
are quantized from last to first; each step feeds the error already made on
later columns back through ``L`` before rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from . import codec
from .codec import QuantizedMatrix, QuantizerConfig
from .lattice import DIM


class LdlError(np.linalg.LinAlgError):
    """Factorization failed; ``suggested_ridge`` is a value worth retrying with."""

    def __init__(self, msg: str, suggested_ridge: float):
        super().__init__(msg)
        self.suggested_ridge = suggested_ridge


@dataclass
class Hessian:
    H: np.ndarray
    count: int


class HessianAccumulator:
    """Streaming ``mean(x x^T)``; partial accumulators merge by summation."""

    def __init__(self, n: int | None = None):
        self.n = n
        self._sum = None if n is None else np.zeros((n, n))
        self.count = 0

    def update(self, batch) -> "HessianAccumulator":
        x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if self._sum is None:
            self.n = x.shape[1]
            self._sum = np.zeros((self.n, self.n))
        if x.shape[1] != self.n:
            raise ValueError(f"expected vectors of length {self.n}, got {x.shape[1]}")
        self._sum += x.T @ x
        self.count += x.shape[0]
        return self

    def merge(self, other: "HessianAccumulator") -> "HessianAccumulator":
        if other._sum is None:
            return self
        if self._sum is None:
            self.n, self._sum = other.n, np.zeros_like(other._sum)
        self._sum += other._sum
        self.count += other.count
        return self

    def finalize(self) -> Hessian:
        if self.count == 0:
            raise ValueError("no calibration vectors were accumulated")
        h = self._sum / self.count
        return Hessian(0.5 * (h + h.T), self.count)


def accumulate_hessian(batches: Iterable) -> Hessian:
    acc = HessianAccumulator()
    for b in batches:
        acc.update(b)
    return acc.finalize()


def default_ridge(H: np.ndarray) -> float:
    n = H.shape[0]
    return 1e-6 * float(np.trace(H)) / n


@dataclass
class LdlFactors:
    L: np.ndarray
    D: np.ndarray
    ridge: float

    def blocked(self, width: int) -> tuple[np.ndarray, np.ndarray]:
        """Block form ``H = Lb diag(D_1, D_2, ...) Lb^T`` with identity diagonal blocks in ``Lb``.

        Returns ``Lb`` and the stacked ``width x width`` blocks of the block diagonal.
        """
        n = self.L.shape[0]
        if n % width:
            raise ValueError(f"size {n} is not a multiple of block width {width}")
        inv = np.zeros_like(self.L)
        blocks = np.empty((n // width, width, width))
        for j, lo in enumerate(range(0, n, width)):
            sl = slice(lo, lo + width)
            lbb = self.L[sl, sl]
            inv[sl, sl] = np.linalg.inv(lbb)
            blocks[j] = (lbb * self.D[sl]) @ lbb.T
        return self.L @ inv, blocks


def ldl_decompose(H, ridge: float | None = None) -> LdlFactors:
    """Factor ``H + ridge*I = L diag(D) L^T``."""
    H = np.asarray(H.H if isinstance(H, Hessian) else H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hessian must be square")
    if not np.allclose(H, H.T, rtol=0, atol=1e-10 * max(1.0, np.abs(H).max())):
        raise ValueError("Hessian must be symmetric")
    if ridge is None:
        ridge = default_ridge(H)
    n = H.shape[0]
    try:
        c = np.linalg.cholesky(H + ridge * np.eye(n))
    except np.linalg.LinAlgError:
        scale = max(float(np.trace(H)) / n, 1e-12)
        raise LdlError(
            f"LDL factorization failed with ridge={ridge:g}", suggested_ridge=max(10 * ridge, 1e-4 * scale)
        ) from None
    d = np.diag(c)
    return LdlFactors(c / d[None, :], d**2, ridge)


class BlockQuantizer(Protocol):
    block: int

    def __call__(self, cols: np.ndarray) -> np.ndarray: ...


class RoundToNearest:
    """Scalar baseline: round each entry to a multiple of ``step``."""

    block = 1

    def __init__(self, step: float):
        self.step = step

    def __call__(self, cols: np.ndarray) -> np.ndarray:
        return self.step * np.floor(cols / self.step + 0.5)


class NestQuantBlocks:
    """Codes each row's 8 columns of a block with the NestQuant codebook.

    Inputs are in the row-normalized domain; codes and scale indices of the
    last call are kept for assembling a :class:`QuantizedMatrix`.
    """

    block = DIM

    def __init__(self, cfg: QuantizerConfig):
        self.cfg = cfg
        self.codes: np.ndarray | None = None
        self.beta_idx: np.ndarray | None = None

    def __call__(self, cols: np.ndarray) -> np.ndarray:
        codes, idx, rec = codec.quantize_blocks(cols, self.cfg)
        self.codes, self.beta_idx = codes, idx
        return rec


@dataclass
class LdlqResult:
    U: np.ndarray
    eta: np.ndarray
    factors: LdlFactors
    quantized: QuantizedMatrix | None = None


def _feedback_loop(W: np.ndarray, L: np.ndarray, quantizer, on_block=None):
    a, n = W.shape
    b = quantizer.block
    if n % b:
        raise ValueError(f"column count {n} is not a multiple of block width {b}")
    U = np.zeros_like(W)
    eta = np.zeros_like(W)
    for hi in range(n, 0, -b):
        lo = hi - b
        # error already committed on later columns, fed back through L
        target = W[:, lo:hi] + (W[:, hi:] - U[:, hi:]) @ L[hi:, lo:hi]
        U[:, lo:hi] = quantizer(target)
        eta[:, lo:hi] = target - U[:, lo:hi]
        if on_block is not None:
            on_block(lo, hi)
    return U, eta


def ldlq_quantize(W, H, quantizer, ridge: float | None = None) -> LdlqResult:
    """Feedback quantization of ``W`` (``a x n``) against Hessian ``H``.

    ``quantizer`` is a :class:`RoundToNearest`, a :class:`NestQuantBlocks`, or
    a :class:`QuantizerConfig` (wrapped as ``NestQuantBlocks``). For NestQuant
    rows are normalized to norm ``sqrt(n)`` first and scaled back afterwards.
    """
    W = np.asarray(W, dtype=np.float64)
    factors = H if isinstance(H, LdlFactors) else ldl_decompose(H, ridge)
    a, n = W.shape
    if factors.L.shape != (n, n):
        raise ValueError(f"Hessian is {factors.L.shape}, weights have {n} columns")
    if isinstance(quantizer, QuantizerConfig):
        quantizer = NestQuantBlocks(quantizer)
    if not isinstance(quantizer, NestQuantBlocks):
        U, eta = _feedback_loop(W, factors.L, quantizer)
        return LdlqResult(U, eta, factors)

    scales = np.linalg.norm(W, axis=1)
    safe = np.where(scales > 0, scales, 1.0)
    gain = math.sqrt(n) / safe
    codes = np.zeros((a, n), dtype=np.int64)
    beta_idx = np.zeros((a, n // DIM), dtype=np.int64)

    def keep(lo, hi):
        codes[:, lo:hi] = quantizer.codes.reshape(a, DIM)
        beta_idx[:, lo // DIM] = quantizer.beta_idx

    # feedback through the block factorization, so the 8 columns quantized
    # jointly see no feedback among themselves
    Lb, _ = factors.blocked(DIM)
    Un, eta_n = _feedback_loop(W * gain[:, None], Lb, quantizer, keep)
    zero = scales == 0
    codes[zero] = 0
    beta_idx[zero] = 0
    qm = QuantizedMatrix(codes, beta_idx, scales, quantizer.cfg)
    return LdlqResult(Un / gain[:, None], eta_n / gain[:, None], factors, qm)


def block_loss(eta, factors: LdlFactors, width: int = DIM) -> float:
    """``sum_B tr(eta_B D_B eta_B^T)``; equals the proxy loss under ``H + ridge I`` for block LDLQ."""
    _, blocks = factors.blocked(width)
    e = np.asarray(eta).reshape(eta.shape[0], -1, width)
    return float(np.einsum("rbi,bij,rbj->", e, blocks, e))


def proxy_loss(W, U, H) -> float:
    E = np.asarray(W) - np.asarray(U)
    return float(np.trace(E @ np.asarray(H) @ E.T))


@dataclass
class NoiseModel:
    eps2: float

    def __post_init__(self):
        if self.eps2 < 0:
            raise ValueError("eps2 must be non-negative")

    def covariance(self, n: int) -> np.ndarray:
        return self.eps2 * np.eye(n)


def compensated_weights(W, H, J) -> np.ndarray:
    """``W H (H + J)^{-1}`` for a general noise covariance ``J``."""
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    A = H + np.asarray(J, dtype=np.float64)
    # (H + J) is symmetric, so X (H + J) = W H  <=>  (H + J) X^T = H W^T
    return np.linalg.solve(A, H @ W.T).T


def qa_ldlq_quantize(W, H, noise: NoiseModel, quantizer, ridge: float | None = None) -> LdlqResult:
    """LDLQ on ``W H (H + eps2 I)^{-1}`` with Hessian ``H + eps2 I``.

    Minimizes the expected output error when the layer input carries
    independent zero-mean noise of covariance ``eps2 I``.
    """
    H = np.asarray(H.H if isinstance(H, Hessian) else H, dtype=np.float64)
    if noise.eps2 == 0:
        return ldlq_quantize(W, H, quantizer, ridge)
    J = noise.covariance(H.shape[0])
    return ldlq_quantize(compensated_weights(W, H, J), H + J, quantizer, ridge)


def noise_loss_terms(W, U, H, J) -> tuple[float, float]:
    """Closed-form ``(surrogate, constant)`` whose sum is ``E|(W-U)X - UZ|^2``."""
    W, U, H, J = (np.asarray(m, dtype=np.float64) for m in (W, U, H, J))
    Wt = compensated_weights(W, H, J)
    E = Wt - U
    surrogate = float(np.trace(E @ (H + J) @ E.T))
    C = W @ (H - H @ np.linalg.solve(H + J, H)) @ W.T
    return surrogate, float(np.trace(C))


def noisy_loss(W, U, H, eps2: float) -> float:
    """Expected ``|W X - U (X + Z)|^2`` for ``E[XX^T] = H`` and ``Z ~ N(0, eps2 I)``."""
    U = np.asarray(U, dtype=np.float64)
    return proxy_loss(W, U, H) + eps2 * float(np.sum(U**2))


def estimate_noise(activations, cfg: QuantizerConfig) -> NoiseModel:
    """Per-coordinate MSE of the NestQuant codec on sample activation rows."""
    x = np.atleast_2d(np.asarray(activations, dtype=np.float64))
    if x.size == 0:
        raise ValueError("empty activation sample")
    rec = codec.dequantize_matrix(codec.quantize_matrix(x, cfg))
    return NoiseModel(float(np.mean((x - rec) ** 2)))


def amplification(W, samples) -> float:
    """``E|W v| / E|v|`` over the rows of ``samples`` (zero rows skipped)."""
    v = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    norms = np.linalg.norm(v, axis=1)
    v, norms = v[norms > 0], norms[norms > 0]
    if v.shape[0] == 0:
        raise ValueError("all samples have zero norm")
    out = np.linalg.norm(v @ np.asarray(W, dtype=np.float64).T, axis=1)
    return float(out.mean() / norms.mean())


def amplification_ratio(W, samples, n_gaussian: int = 4096, seed: int = 0) -> float:
    """Gain on isotropic Gaussian input divided by gain on the given activations."""
    n = np.asarray(W).shape[1]
    z = np.random.default_rng(seed).standard_normal((n_gaussian, n))
    return amplification(W, z) / amplification(W, samples)
