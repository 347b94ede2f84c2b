"""Collision-coded bits on the communication arm.

A signal-testing block is split into slots, one per tester group.  During a
slot the group's listeners sit on the communication arm while everybody else
cycles over the remaining arms by rank.  The coordinator sends a 1 by
camping on the communication arm for the whole block, which overloads it for
every tester group (hard feedback) or lifts the per-capita reward (aggregate
feedback, where groups are one short of capacity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class BlockLayout:
    M: int
    K: int
    comm: int            # 0-based communication arm
    group_size: int      # listeners per tester group
    width: int           # pulls per slot
    groups: tuple[tuple[int, ...], ...]
    base: np.ndarray     # (M, length) arms when the coordinator sends 0

    @property
    def length(self) -> int:
        return self.width * len(self.groups)

    def slot_of(self, p: int) -> int:
        for j, g in enumerate(self.groups):
            if p in g:
                return j
        raise KeyError(p)

    def row(self, p: int, bit: int = 0) -> np.ndarray:
        if p == 1 and bit:
            return np.full(self.length, self.comm, dtype=np.int64)
        return self.base[p - 1]

    def arms(self, bit: int) -> np.ndarray:
        out = self.base.copy()
        if bit:
            out[0] = self.comm
        return out

    def own_slot(self, p: int, rewards: np.ndarray) -> np.ndarray:
        j = self.slot_of(p)
        return rewards[j * self.width:(j + 1) * self.width]


def tester_groups(M: int, size: int) -> tuple[tuple[int, ...], ...]:
    """Listeners 2..M in consecutive groups; the last is topped up from the front."""
    listeners = list(range(2, M + 1))
    if not 1 <= size <= len(listeners):
        raise ValueError(f"tester group size {size} invalid for {len(listeners)} listeners")
    groups = [listeners[k:k + size] for k in range(0, len(listeners), size)]
    short = size - len(groups[-1])
    if short:
        groups[-1] = sorted(groups[-1] + [q for q in listeners if q not in groups[-1]][:short])
    return tuple(tuple(g) for g in groups)


@lru_cache(maxsize=64)
def block_layout(M: int, K: int, comm: int, group_size: int, width: int) -> BlockLayout:
    groups = tester_groups(M, group_size)
    pool = np.array([a for a in range(K) if a != comm], dtype=np.int64)
    base = np.empty((M, width * len(groups)), dtype=np.int64)
    i = np.arange(1, width + 1)
    for j, grp in enumerate(groups):
        sl = slice(j * width, (j + 1) * width)
        others = [q for q in range(1, M + 1) if q not in grp]
        for q in grp:
            base[q - 1, sl] = comm
        for rank, q in enumerate(others, start=1):
            base[q - 1, sl] = pool[(rank + i - 1) % len(pool)]
    base.setflags(write=False)
    return BlockLayout(M, K, comm, group_size, width, groups, base)


def read_bit(slot_rewards: np.ndarray, *, variant: bool = False, mu_hat: float = 0.0,
             group_size: int = 1, M: int = 1) -> int:
    """Decode one bit from the listener's own slot."""
    if not variant:
        return int(np.all(slot_rewards == 0))
    per_capita = float(np.mean(slot_rewards)) / group_size
    return int(per_capita >= mu_hat * (1 + 1 / (2 * M)))


# ---------------------------------------------------------------------------
# frames


def encode_arms(subset: Iterable[int], K: int, offset: int = 1) -> list[int]:
    s = set(subset)
    return [int(a + offset in s) for a in range(K)]


def decode_arms(bits: Sequence[int], offset: int = 1) -> frozenset[int]:
    return frozenset(a + offset for a, b in enumerate(bits) if b)


def valid_frame(arms: frozenset[int], active: Iterable[int]) -> bool:
    """A frame must name a nonempty proper subset of the active arms."""
    act = set(active)
    return bool(arms) and arms < act


def int_bits(value: int, width: int) -> list[int]:
    if not 0 <= value < 2 ** width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return [(value >> (width - 1 - k)) & 1 for k in range(width)]


def bits_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = 2 * v + int(b)
    return v


def gamma_digits(b_val: float) -> int:
    """Decimal digits needed for any gamma below 1/B."""
    top = int(math.floor(1 / b_val)) if b_val > 0 else 0
    return max(1, len(str(top)))


def encode_gamma(gamma: int, digits: int) -> list[int]:
    """Decimal digits of gamma, last digit first, each as 4 bits MSB first."""
    if not 0 <= gamma < 10 ** digits:
        raise ValueError(f"gamma={gamma} needs more than {digits} digits")
    out: list[int] = []
    for k in range(digits):
        out += int_bits((gamma // 10 ** k) % 10, 4)
    return out


def decode_gamma(bits: Sequence[int]) -> int:
    if len(bits) % 4:
        raise ValueError("gamma frame must be a whole number of 4-bit digits")
    return sum(bits_int(bits[4 * k:4 * k + 4]) * 10 ** k for k in range(len(bits) // 4))
