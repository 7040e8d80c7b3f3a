"""Deterministic Hadamard rotations ``H1 (x) H2`` with a fast transform.

``H2`` is a Sylvester matrix of size ``2**k``; ``H1`` is a small stored
Hadamard matrix (Sylvester for 1, 2, 4; Paley for 12 and 20) used when ``n``
is not a power of two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sylvester(size: int) -> np.ndarray:
    if size < 1 or size & (size - 1):
        raise ValueError("Sylvester construction needs a power of two")
    h = np.ones((1, 1))
    while h.shape[0] < size:
        h = np.block([[h, h], [h, -h]])
    return h


def _legendre(a: int, p: int) -> int:
    a %= p
    if a == 0:
        return 0
    return 1 if pow(a, (p - 1) // 2, p) == 1 else -1


def paley(p: int) -> np.ndarray:
    """Paley type-I Hadamard matrix of size ``p + 1`` for a prime ``p = 3 mod 4``."""
    if p % 4 != 3:
        raise ValueError("Paley type I needs p = 3 mod 4")
    jac = np.array([[_legendre(j - i, p) for j in range(p)] for i in range(p)], dtype=np.float64)
    s = np.zeros((p + 1, p + 1))
    s[0, 1:] = 1.0
    s[1:, 0] = -1.0
    s[1:, 1:] = jac
    return np.eye(p + 1) + s


STORED = {1: sylvester(1), 2: sylvester(2), 4: sylvester(4), 12: paley(11), 20: paley(19)}


@dataclass(frozen=True)
class HadamardSpec:
    n: int
    m: int
    log2_rest: int

    @property
    def h1(self) -> np.ndarray:
        return STORED[self.m]

    def dense(self) -> np.ndarray:
        """The unnormalized ``n x n`` matrix ``H1 (x) H2`` (entries +-1)."""
        return np.kron(self.h1, sylvester(2**self.log2_rest))


def hadamard_spec(n: int) -> HadamardSpec:
    """Factor ``n = m * 2**k`` with ``m`` a stored size (powers of two use ``m = 1``)."""
    if n < 1:
        raise ValueError("dimension must be positive")
    for m in sorted(STORED):
        rest = n // m
        if n % m == 0 and rest & (rest - 1) == 0:
            return HadamardSpec(n, m, rest.bit_length() - 1)
    raise ValueError(f"no stored Hadamard factor for n={n}; stored sizes {sorted(STORED)}")


def fast_hadamard_transform(x, spec: HadamardSpec | None = None, counter: dict | None = None,
                            transpose: bool = False) -> np.ndarray:
    """Orthonormal ``(H / sqrt(n)) x`` along the last axis.

    ``transpose=True`` applies ``H.T / sqrt(n)``, the inverse rotation.
    ``counter["ops"]`` accumulates scalar operations per transformed vector.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = spec or hadamard_spec(n)
    if spec.n != n:
        raise ValueError(f"spec is for n={spec.n}, got vectors of length {n}")
    lead = x.shape[:-1]
    rest = 2**spec.log2_rest
    y = x.reshape(lead + (spec.m, rest))
    y = _fwht_stage(y, counter, n)
    if spec.m > 1:
        h1 = spec.h1.T if transpose else spec.h1
        y = np.einsum("ij,...jk->...ik", h1, y)
        if counter is not None:
            counter["ops"] = counter.get("ops", 0) + n * spec.m
    if counter is not None:
        counter["ops"] = counter.get("ops", 0) + n
    return y.reshape(lead + (n,)) / math.sqrt(n)


def _fwht_stage(y: np.ndarray, counter: dict | None, n: int) -> np.ndarray:
    size = y.shape[-1]
    lead = y.shape[:-1]
    h = 1
    while h < size:
        z = y.reshape(lead + (size // (2 * h), 2, h))
        a, b = z[..., 0, :], z[..., 1, :]
        y = np.stack([a + b, a - b], axis=-2).reshape(lead + (size,))
        if counter is not None:
            counter["ops"] = counter.get("ops", 0) + n
        h *= 2
    return y


def rotate_matrix_rows(mat, spec: HadamardSpec | None = None) -> np.ndarray:
    """Rotate every row: returns ``M @ (H / sqrt(n)).T``."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    return fast_hadamard_transform(mat, spec)
