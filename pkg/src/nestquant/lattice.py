"""Closest-point oracles and coordinates for the D8 and Gosset (E8) lattices.

All functions accept a single 8-vector or a stacked ``(..., 8)`` array and
work on the last axis. Rounding ties go toward +inf; when several
coordinates share the cheapest parity flip, the lowest index is flipped.
"""

from __future__ import annotations

import itertools

import numba
import numpy as np

DIM = 8
MEMBERSHIP_TOL = 1e-6

# Columns are lattice basis vectors. This is the fast-decode matrix for 2*E8,
# halved so that it generates E8 itself (|det| = 1).
GENERATOR = 0.5 * np.array(
    [
        [1, 0, 0, 0, 0, 0, 0, 0],
        [1, 0, 2, 0, 0, 0, 0, 0],
        [1, 0, 0, 0, 2, 0, 0, 0],
        [1, 0, 0, 0, 0, 0, 2, 0],
        [1, 4, 2, 2, 2, 2, 2, 2],
        [1, 0, 0, 2, 0, 0, 0, 0],
        [1, 0, 0, 0, 0, 2, 0, 0],
        [1, 0, 0, 0, 0, 0, 0, 2],
    ],
    dtype=np.float64,
)
# Exact inverse: every entry is a multiple of 1/2, so this is representable.
GENERATOR_INV = np.round(2.0 * np.linalg.inv(GENERATOR)) / 2.0


def _as_blocks(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (DIM,):
        raise ValueError(f"expected trailing dimension {DIM}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


@numba.njit(cache=True)
def _round_coset(x, half, fixed_flip, out, dist):
    # nearest point of D8 + half*(1,...,1) for every row of x
    for i in range(x.shape[0]):
        total = 0.0
        amax = -1.0
        pos = 0
        for j in range(DIM):
            y = x[i, j] - half
            r = np.floor(y + 0.5)
            out[i, j] = r
            total += r
            a = abs(y - r)
            if a > amax:
                amax = a
                pos = j
        if total % 2 != 0:
            if fixed_flip:
                pos = 0
            if x[i, pos] - half - out[i, pos] >= 0:
                out[i, pos] += 1.0
            else:
                out[i, pos] -= 1.0
        d = 0.0
        for j in range(DIM):
            out[i, j] += half
            d += (x[i, j] - out[i, j]) ** 2
        dist[i] = d


@numba.njit(cache=True)
def _nearest_e8(x, fixed_flip, out):
    n = x.shape[0]
    c1 = np.empty((n, DIM))
    d1 = np.empty(n)
    d2 = np.empty(n)
    _round_coset(x, 0.0, fixed_flip, c1, d1)
    _round_coset(x, 0.5, fixed_flip, out, d2)
    for i in range(n):
        # distance ties go to the half-integer coset
        if d1[i] < d2[i]:
            for j in range(DIM):
                out[i, j] = c1[i, j]


def _flat(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.reshape(-1, DIM))


def closest_point_d8(x, offset: float = 0.0) -> np.ndarray:
    """Nearest point of the coset ``D8 + offset*(1,...,1)``; ``offset`` is 0 or 1/2."""
    if offset not in (0.0, 0.5):
        raise ValueError("offset must be 0 or 0.5")
    x = _as_blocks(x)
    flat = _flat(x)
    out = np.empty_like(flat)
    _round_coset(flat, float(offset), False, out, np.empty(flat.shape[0]))
    return out.reshape(x.shape)


def _closest_e8(x: np.ndarray, fixed_flip: bool) -> np.ndarray:
    flat = _flat(x)
    out = np.empty_like(flat)
    _nearest_e8(flat, fixed_flip, out)
    return out.reshape(x.shape)


def closest_point_e8(x) -> np.ndarray:
    """Exact nearest E8 point: best of the D8 and D8+1/2 candidates."""
    return _closest_e8(_as_blocks(x), fixed_flip=False)


def nestquantm_oracle(x) -> np.ndarray:
    """E8 oracle whose parity fix always flips coordinate 0.

    Not a nearest-point map, but it commutes with every lattice shift:
    ``f(x + v) == f(x) + v`` for all ``v`` in E8.
    """
    return _closest_e8(_as_blocks(x), fixed_flip=True)


def is_in_e8(p, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    twice = 2.0 * p
    t = np.round(twice)
    if not np.all(np.abs(twice - t) <= 2 * tol):
        return np.zeros(p.shape[:-1], dtype=bool) if p.ndim > 1 else np.bool_(False)
    # all integer or all half-integer, with even sum of the integer part
    par = np.mod(t, 2)
    same = np.all(par == par[..., :1], axis=-1)
    shifted = (t - par[..., :1]) / 2.0
    even = np.mod(shifted.sum(axis=-1), 2) == 0
    return same & even


def coords(p) -> np.ndarray:
    """Integer coordinates ``v`` with ``GENERATOR @ v == p``."""
    p = np.asarray(p, dtype=np.float64)
    v = p @ GENERATOR_INV.T
    vi = np.round(v)
    if np.max(np.abs(v - vi), initial=0.0) > MEMBERSHIP_TOL:
        raise ValueError("point is not in E8 (non-integer lattice coordinates)")
    return vi.astype(np.int64)


def point_from_coords(v) -> np.ndarray:
    v = np.asarray(v)
    if not np.issubdtype(v.dtype, np.integer):
        if np.any(v != np.round(v)):
            raise ValueError("lattice coordinates must be integers")
    return np.asarray(v, dtype=np.float64) @ GENERATOR.T


def _offset_table(width: int) -> tuple[np.ndarray, np.ndarray]:
    steps = np.arange(-width, width + 1, dtype=np.float64)
    table = np.array(list(itertools.product(steps, repeat=DIM)))
    return table, table.sum(axis=1)


_BRUTE_TABLES: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def closest_point_e8_bruteforce(x, window: int = 1, chunk: int = 64) -> np.ndarray:
    """Exhaustive nearest E8 point, for testing the fast oracle.

    Every coordinate of the nearest point lies within the covering radius (1)
    of ``x``, so scanning integer and half-integer points within ``window``
    steps of the coordinate-wise roundings is exhaustive for ``window >= 1``.
    """
    x = _as_blocks(x)
    if np.max(np.abs(x), initial=0.0) > 100:
        raise ValueError("bruteforce search window requires |x|_inf <= 100")
    if window < 1:
        raise ValueError("window must be >= 1")
    if window not in _BRUTE_TABLES:
        _BRUTE_TABLES[window] = _offset_table(window)
    table, table_sum = _BRUTE_TABLES[window]
    table_sq = np.sum(table**2, axis=1)

    flat = x.reshape(-1, DIM)
    out = np.empty_like(flat)
    for lo in range(0, flat.shape[0], chunk):
        xs = flat[lo : lo + chunk]
        best_d = np.full(xs.shape[0], np.inf)
        best = np.zeros_like(xs)
        for half in (0.0, 0.5):
            base = np.floor(xs - half + 0.5)
            resid = xs - half - base
            # |resid - o|^2 expanded so the candidate scan is one matmul
            d = np.sum(resid**2, axis=1)[:, None] - 2.0 * resid @ table.T + table_sq[None, :]
            parity = (base.sum(axis=1)[:, None] + table_sum[None, :]) % 2
            d = np.where(parity == 0, d, np.inf)
            idx = np.argmin(d, axis=1)
            dmin = d[np.arange(xs.shape[0]), idx]
            cand = base + table[idx] + half
            take = dmin < best_d
            best_d = np.where(take, dmin, best_d)
            best = np.where(take[:, None], cand, best)
        out[lo : lo + chunk] = best
    return out.reshape(x.shape)


def e8_roots() -> np.ndarray:
    """The 240 minimal vectors of E8 (squared norm 2)."""
    roots = []
    for i, j in itertools.combinations(range(DIM), 2):
        for si in (-1.0, 1.0):
            for sj in (-1.0, 1.0):
                v = np.zeros(DIM)
                v[i], v[j] = si, sj
                roots.append(v)
    for signs in itertools.product((-0.5, 0.5), repeat=DIM):
        if sum(s < 0 for s in signs) % 2 == 0:
            roots.append(np.array(signs))
    return np.array(roots)
