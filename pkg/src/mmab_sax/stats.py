"""Confidence radii, checkpoints, test durations and capacity inference.

All logarithms are natural.  ``n/g(n)`` equals ``2/B(n)^2`` and is increasing
in ``n`` for every admissible parameter set (its derivative is positive once
``g > 2``, and ``g(1) = log(4MK/delta) > log 8``), which lets the checkpoint
search use bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

CHECKPOINT_BASE = 9
HARD_INFLATION = 5.0
COORDINATOR_RATIO = 3.0 / 5.0
LISTENER_RATIO = 9.0 / 25.0
SIGNAL_GAMMA = 12

_EPS = 1e-12


@dataclass(frozen=True)
class ConfidenceParams:
    delta: float
    M: int
    K: int
    h: float = HARD_INFLATION
    checkpoint_base: float = CHECKPOINT_BASE

    def __post_init__(self):
        if self.h <= 2:
            raise ValueError("inflation factor must exceed 2")
        if self.checkpoint_base <= 1:
            raise ValueError("checkpoint base must exceed 1")

    @classmethod
    def hard(cls, delta: float, M: int, K: int) -> "ConfidenceParams":
        return cls(delta, M, K)

    @classmethod
    def variant(cls, delta: float, M: int, K: int) -> "ConfidenceParams":
        return cls(delta, M, K, h=2.0 * M, checkpoint_base=variant_base(M))

    def g(self, n):
        return g(n, self.delta, self.M, self.K)

    def B(self, n):
        return B(n, self.delta, self.M, self.K)

    def level(self, n: int) -> int:
        if n <= 0:
            return -1
        return power_level(n / g(n, self.delta, self.M, self.K), self.checkpoint_base)


def g(n, delta: float, M: int, K: int):
    n = np.asarray(n, dtype=float)
    out = np.log(4.0 * n * n * M * K / delta)
    return float(out) if out.ndim == 0 else out


def B(n, delta: float, M: int, K: int):
    """Confidence radius; +inf when there are no samples."""
    if isinstance(n, (int, float, np.integer, np.floating)):
        return math.sqrt(2.0 * math.log(4.0 * n * n * M * K / delta) / n) if n > 0 else math.inf
    n_arr = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(n_arr > 0, n_arr, 1.0)
        out = np.where(n_arr > 0, np.sqrt(2.0 * np.log(4.0 * safe * safe * M * K / delta) / safe), np.inf)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# checkpoints


def power_level(x: float, base: float = CHECKPOINT_BASE) -> int:
    """Largest integer alpha with base**alpha <= x; -1 when x < 1."""
    if x < 1:
        return -1
    a = int(math.floor(math.log(x) / math.log(base)))
    while base ** (a + 1) <= x:
        a += 1
    while a > 0 and base ** a > x:
        a -= 1
    return a


def base9_floor(x: float) -> float:
    if not x >= 1:
        raise ValueError(f"base-9 floor undefined for x={x} < 1")
    return float(CHECKPOINT_BASE ** power_level(x))


def checkpoint_level(n: int, delta: float, M: int, K: int) -> int:
    if n <= 0:
        return -1
    return power_level(n / g(n, delta, M, K))


def is_checkpoint(n_prev: int, n_curr: int, delta: float, M: int, K: int,
                  base: float = CHECKPOINT_BASE) -> bool:
    """True iff the power level of n/g(n) increases between two clock values."""
    p = ConfidenceParams(delta, M, K, checkpoint_base=base)
    return p.level(n_curr) > p.level(n_prev)


def is_checkpoint_ratio(ratio_prev: float, ratio_curr: float, base: float = CHECKPOINT_BASE) -> bool:
    return power_level(ratio_curr, base) > power_level(ratio_prev, base)


def next_level_clock(n: int, params: ConfidenceParams) -> int:
    """Smallest clock value n' > n whose level exceeds level(n)."""
    target = params.level(n) + 1
    lo, hi = n, max(2 * n, 2)
    while params.level(hi) < target:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if params.level(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def checkpoint_sequence(n_max: int, delta: float, M: int, K: int,
                        base: float = CHECKPOINT_BASE) -> list[tuple[int, int]]:
    """(clock value, new level) at every level crossing up to n_max."""
    p = ConfidenceParams(delta, M, K, checkpoint_base=base)
    out, n = [], 0
    while True:
        n = next_level_clock(n, p)
        if n > n_max:
            return out
        out.append((n, p.level(n)))


def variant_base(M: int) -> float:
    return 4.0 * (2 * M + 1) / (2 * M - 1)


def variant_checkpoints(alpha_max: int, M: int) -> list[float]:
    base = variant_base(M)
    return [base ** a for a in range(1, alpha_max + 1)]


# ---------------------------------------------------------------------------
# triggers and durations


def inflated_trigger(mu_hat: float, n: int, h: float, delta: float, M: int, K: int) -> bool:
    return mu_hat - h * B(n, delta, M, K) >= 0


def inflated_trigger_radius(mu_hat: float, b_val: float, h: float) -> bool:
    return mu_hat - h * b_val >= 0


def sandwich_bounds(mu: float, h: float = HARD_INFLATION) -> tuple[float, float]:
    """Bounds on n/g(n) at the first inflated trigger under the good event."""
    return 2 * (h - 1) ** 2 / mu ** 2, 8 * (h + 1) ** 2 / mu ** 2


def omega(gamma: int, b_val: float, delta: float, K: int, M: int) -> int:
    """Zero-run length that certifies a collision at confidence delta/(4K^2M)."""
    x = gamma * b_val
    if not 0 < x < 1:
        raise ValueError(f"gamma*B must lie in (0, 1), got {x}")
    return int(math.ceil(math.log(delta / (4 * K * K * M)) / math.log(1 - x) - _EPS))


def omega_prime(b_val: float, delta: float, K: int, M: int) -> int:
    if not b_val > 0:
        raise ValueError("radius must be positive")
    return int(math.ceil(math.log(4 * K * K * M / delta) / b_val ** 2 - _EPS))


def zero_test_samples(mu: float, delta_prime: float) -> int:
    """Minimal n with (1 - mu)**n <= delta_prime."""
    if not 0 < delta_prime < 1:
        raise ValueError("delta_prime must lie in (0, 1)")
    if mu <= 0:
        raise ValueError("a zero-mean arm cannot distinguish collisions")
    if mu >= 1:
        return 1
    n = max(1, math.ceil(math.log(delta_prime) / math.log1p(-mu)))
    # guard the ceiling against rounding in either direction
    while (1 - mu) ** n > delta_prime:
        n += 1
    while n > 1 and (1 - mu) ** (n - 1) <= delta_prime:
        n -= 1
    return n


def largest_gamma(min_mu_hat: float, min_radius: float, b_val: float) -> int:
    """Largest integer gamma with gamma*b_val < min_mu_hat - min_radius (0 if none)."""
    x = min_mu_hat - min_radius
    if x <= 0 or not math.isfinite(b_val) or b_val <= 0:
        return 0
    gam = int(math.floor(x / b_val))
    if gam * b_val >= x * (1 - _EPS):
        gam -= 1
    return max(gam, 0)


# ---------------------------------------------------------------------------
# capacities


def infer_capacity(zero_run_flags: Mapping[int, bool]) -> int:
    """Capacity from per-group-size all-zero flags.

    Returns min{psi : all zeros} - 1, or the largest tested psi when no group
    size produced a zero run ("at least that many").  A return of 0 means the
    singleton group read all zeros, which contradicts a positive mean.
    """
    if not zero_run_flags:
        raise ValueError("no group sizes tested")
    hits = [psi for psi, z in zero_run_flags.items() if z]
    return min(hits) - 1 if hits else max(zero_run_flags)


def capacity_known(n2: int, mu_hat: float, b_val: float, delta: float, M: int, K: int) -> bool:
    if n2 <= 0 or mu_hat - b_val <= 0:
        return False
    return math.log(n2 * M * K * K / delta) / (mu_hat - b_val) <= n2


def candidate_set(mu_hat: np.ndarray, trigger_arm: int, ratio: float,
                  arms=None) -> tuple[int, ...]:
    """Arms whose estimate is at least ``ratio`` times the trigger arm's estimate."""
    idx = range(len(mu_hat)) if arms is None else arms
    thr = ratio * mu_hat[trigger_arm]
    return tuple(a for a in idx if a == trigger_arm or mu_hat[a] >= thr)
