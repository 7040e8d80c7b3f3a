"""Choosing the set of codebook scales.

Every candidate scale is profiled on sample 8-blocks (per-block MSE and
whether the block overloads). A dynamic program then picks the subset of at
most ``k`` scales minimizing the total error when every block uses the
smallest selected scale that does not overload it.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import voronoi
from .lattice import DIM


def _grid(start: float, stop: float, step: float) -> list[float]:
    count = int(round((stop - start) / step))
    return [start + i * step for i in range(count + 1)]


# Universes in units of 1/q (divide by q for absolute scales).
UNIVERSES = {
    # 1..40, spacing 0.25 in the bulk widening to 2 in the tail
    "appendixG": _grid(1.0, 8.0, 0.25) + _grid(8.5, 16.0, 0.5) + _grid(17.0, 24.0, 1.0) + _grid(26.0, 40.0, 2.0),
    "synthetic": [0.5 * i for i in range(1, 51)],
    "appendixF": _grid(0.25, 10.0, 0.25),
}

WEIGHT_MARGIN = 3.0
ACTIVATION_MARGIN = 4.0


def universe(name: str, q: int) -> np.ndarray:
    """Absolute scales of a named universe for nesting ratio ``q``."""
    if name not in UNIVERSES:
        raise KeyError(f"unknown beta universe {name!r}; choose from {sorted(UNIVERSES)}")
    return np.asarray(UNIVERSES[name]) / q


@dataclass
class ErrorProfile:
    """Per-sample, per-scale MSE (per coordinate) and overload flags."""

    betas: np.ndarray
    mse: np.ndarray
    overload: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.mse.shape[0]

    def safe(self) -> np.ndarray:
        """Indices of scales with no overload on any sample."""
        return np.flatnonzero(~self.overload.any(axis=0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "beta", "mse", "overload"])
        for p in range(self.n_samples):
            for j, b in enumerate(self.betas):
                w.writerow([p, repr(float(b)), repr(float(self.mse[p, j])), int(self.overload[p, j])])
        return buf.getvalue()


def profile_errors(samples, betas: Sequence[float], q: int) -> ErrorProfile:
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, DIM)
    betas = np.asarray(betas, dtype=np.float64)
    if samples.shape[0] == 0 or betas.size == 0:
        raise ValueError("need at least one sample and one beta")
    if np.any(betas <= 0) or np.any(np.diff(betas) <= 0):
        raise ValueError("betas must be positive and strictly increasing")
    mse = np.empty((samples.shape[0], betas.size))
    overload = np.empty((samples.shape[0], betas.size), dtype=bool)
    for j, beta in enumerate(betas):
        _, rec, ovl = voronoi.roundtrip(samples / beta, q)
        mse[:, j] = np.sum((samples - rec * beta) ** 2, axis=1) / DIM
        overload[:, j] = ovl
    return ErrorProfile(betas, mse, overload)


def transition_costs(profile: ErrorProfile) -> np.ndarray:
    """``cost[s, i]``: error of samples overloading at scale ``s`` but not ``i``.

    Row 0 is the empty predecessor (every sample overloads); scale ``j`` of the
    universe is row/column ``j + 1``.
    """
    n, m = profile.mse.shape
    over = np.vstack([np.ones((1, n)), profile.overload.T.astype(np.float64)])
    served = np.where(profile.overload, 0.0, profile.mse)
    cost = np.full((m + 1, m + 1), np.inf)
    cost[:, 1:] = over @ served
    return cost


def dp_optimal_betas(profile: ErrorProfile, k: int, exact: bool = False) -> tuple[list[int], float]:
    """Best subset of at most ``k`` scales (exactly ``k`` with ``exact``) under First-beta coding.

    Returns 0-based universe indices (ascending) and the summed per-sample MSE
    of that subset. The transition sums are exact when every sample's overload
    flags are monotone in beta; a sample that is served at one scale, overloads
    at a larger one and is served again further up is counted twice by the
    recursion, so the optimum can be missed on such profiles.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    safe = profile.safe()
    if safe.size == 0:
        raise ValueError(
            "no beta in the universe is overload-free on the samples; "
            "extend the universe with larger betas (add a safety margin)"
        )
    m = profile.mse.shape[1]
    cost = transition_costs(profile)
    dp = np.full((m + 1, k + 1), np.inf)
    prev = np.full((m + 1, k + 1), -1, dtype=np.int64)
    dp[0, 0] = 0.0
    for i in range(1, m + 1):
        for j in range(1, k + 1):
            cand = dp[:i, j - 1] + cost[:i, i]
            s = int(np.argmin(cand))
            dp[i, j] = cand[s]
            prev[i, j] = s

    ends = safe + 1
    lo = k if exact else 1
    table = dp[ends, lo:]
    if not np.isfinite(table).any():
        raise ValueError(f"no admissible subset of size {k}")
    width = table.shape[1]
    flat = int(np.argmin(table))
    pos, j = int(ends[flat // width]), flat % width + lo
    chosen = []
    while j > 0:
        chosen.append(pos - 1)
        pos = int(prev[pos, j])
        j -= 1
    chosen.sort()
    return chosen, first_beta_cost(profile, chosen)


def first_beta_cost(profile: ErrorProfile, subset: Sequence[int]) -> float:
    """Summed MSE when each sample takes the first non-overloading scale in ``subset``.

    The largest selected scale is the fallback when all of them overload.
    """
    subset = sorted(subset)
    mse = profile.mse[:, subset]
    ok = ~profile.overload[:, subset]
    ok[:, -1] = True
    first = np.argmax(ok, axis=1)
    return float(mse[np.arange(mse.shape[0]), first].sum())


def opt_beta_cost(profile: ErrorProfile, subset: Sequence[int]) -> float:
    return float(profile.mse[:, sorted(subset)].min(axis=1).sum())


def brute_force_betas(profile: ErrorProfile, k: int, budget: int = 10**6,
                      exact: bool = False) -> tuple[list[int], float]:
    """Exhaustive minimizer of :func:`first_beta_cost` over subsets of size <= k (== k with ``exact``).

    Only subsets whose largest scale is overload-free are admissible, matching
    the dynamic program.
    """
    m = profile.mse.shape[1]
    if sum(math.comb(m, j) for j in range(k if exact else 1, k + 1)) > budget:
        raise ValueError("too many subsets for brute force")
    safe = set(profile.safe().tolist())
    if not safe:
        raise ValueError("no overload-free beta in the universe")
    best, best_cost = None, math.inf
    for size in range(k if exact else 1, k + 1):
        for subset in itertools.combinations(range(m), size):
            if subset[-1] not in safe:
                continue
            c = first_beta_cost(profile, subset)
            if c < best_cost:
                best, best_cost = list(subset), c
    if best is None:
        raise ValueError(f"no admissible subset of size {k}")
    return best, best_cost


def apply_margin(beta_max_needed: float, kind: str, q: int) -> float:
    """Pad the largest needed scale against overloads on unseen data."""
    if beta_max_needed <= 0 or q <= 0:
        raise ValueError("inputs must be positive")
    if kind == "weights":
        return beta_max_needed + WEIGHT_MARGIN / q
    if kind in ("activations", "keys", "values"):
        return beta_max_needed + ACTIVATION_MARGIN / q
    raise ValueError(f"unknown tensor kind {kind!r}")


def select_betas(samples, betas: Sequence[float], q: int, k: int) -> tuple[np.ndarray, float]:
    """Profile ``samples`` and return the chosen absolute scales and per-coordinate RMSE."""
    prof = profile_errors(samples, betas, q)
    idx, total = dp_optimal_betas(prof, k)
    return prof.betas[idx], math.sqrt(total / prof.n_samples)
