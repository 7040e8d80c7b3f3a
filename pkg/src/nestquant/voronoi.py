"""Voronoi (nested-lattice) codebook over E8 with nesting ratio ``q``.

A code is the residue vector ``coords(Q(x)) mod q`` in ``Z_q^8``; decoding
returns the minimum-energy point of the coset ``G c + q E8``.
"""

from __future__ import annotations

import itertools
from typing import Callable

import numpy as np

from . import lattice
from .lattice import DIM, GENERATOR, GENERATOR_INV

Oracle = Callable[[np.ndarray], np.ndarray]


def _check_q(q: int) -> int:
    if int(q) != q or q < 2:
        raise ValueError(f"nesting ratio q must be an integer >= 2, got {q!r}")
    return int(q)


def encode(x, q: int) -> np.ndarray:
    """Residues in ``[0, q)`` of the nearest lattice point's coordinates."""
    q = _check_q(q)
    p = lattice.closest_point_e8(x)
    v = np.round(p @ GENERATOR_INV.T)
    return np.mod(v, q).astype(np.int64)


def decode(codes, q: int, oracle: Oracle = lattice.closest_point_e8) -> np.ndarray:
    """Coset representative ``p - q * Q(p / q)`` with ``p = G c``.

    Pass ``oracle=lattice.nestquantm_oracle`` for the simplified decoder.
    """
    q = _check_q(q)
    c = np.asarray(codes)
    if c.shape[-1:] != (DIM,):
        raise ValueError(f"expected trailing dimension {DIM}, got shape {c.shape}")
    if np.any(c < 0) or np.any(c >= q):
        raise ValueError("code residues must lie in [0, q)")
    p = c.astype(np.float64) @ GENERATOR.T
    return p - q * oracle(p / q)


def roundtrip(x, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode and decode in one pass; returns ``(codes, reconstruction, overload)``."""
    q = _check_q(q)
    p = lattice.closest_point_e8(x)
    codes = np.mod(np.round(p @ GENERATOR_INV.T), q)
    recon = decode(codes, q)
    overload = np.any(recon != p, axis=-1)
    return codes.astype(np.int64), recon, overload


def is_overload(x, q: int) -> np.ndarray:
    """True where the decoded point differs from the nearest lattice point."""
    return roundtrip(x, q)[2]


def all_codes(q: int) -> np.ndarray:
    """Every element of ``Z_q^8`` (q**8 rows); only sensible for tiny ``q``."""
    q = _check_q(q)
    if q**DIM > 10**6:
        raise ValueError("codebook too large to enumerate")
    return np.array(list(itertools.product(range(q), repeat=DIM)), dtype=np.int64)


def codebook(q: int) -> np.ndarray:
    """All ``q**8`` codewords, in the order of :func:`all_codes`."""
    return decode(all_codes(q), q)
