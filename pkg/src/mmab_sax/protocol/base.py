"""Segments, player knowledge and the event channel.

A player is a generator that yields :class:`Segment` objects.  The harness
plays each segment, feeding the player's own rewards back into it, and then
resumes the generator.  Long exploration stretches are periodic, so a segment
stores one period of arms and, instead of raw rewards, per-key reward sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..env import AGGREGATE, HARD
from ..stats import ConfidenceParams

# regret ledger buckets
PHASE1 = "phase1"
PHASE2 = "phase2-explore"
COMM = "communication"
PHASE3 = "phase3"
EXPLOIT = "exploitation"
FALLBACK = "fallback"
TAGS = (PHASE1, PHASE2, COMM, PHASE3, EXPLOIT, FALLBACK)

FOREVER = 2**62


@dataclass(frozen=True)
class Knowledge:
    """Everything a player may know besides its own rewards."""

    index: int
    M: int
    K: int
    T: int
    delta: float
    mode: str = HARD

    @property
    def variant(self) -> bool:
        return self.mode == AGGREGATE

    @property
    def params(self) -> ConfidenceParams:
        if self.variant:
            return ConfidenceParams.variant(self.delta, self.M, self.K)
        return ConfidenceParams.hard(self.delta, self.M, self.K)


class Segment:
    """A stretch of pulls for one player.

    ``pattern`` holds one period of 0-based arms.  If ``keys`` is given, each
    position of the period maps to a statistic slot (or -1) and rewards are
    summed per slot; with ``per_period`` the sums are kept per period, giving
    prefix sums at every period boundary.  ``keep`` stores raw rewards.
    ``until(seg, start, r)`` lets a segment end itself: given the rewards of
    the next chunk it returns how many of them it accepts, or None for all.
    """

    __slots__ = ("pattern", "length", "tag", "sync", "keys", "nkeys", "per_period",
                 "keep", "sums", "rewards", "meta", "final", "monitor", "until")

    def __init__(self, pattern, length: int, tag: str, sync=None, *, keys=None, nkeys: int = 0,
                 per_period: bool = False, keep: bool = False, meta=None, final: bool = False,
                 monitor=None, until=None):
        self.pattern = np.atleast_1d(np.asarray(pattern, dtype=np.int64))
        self.length = int(length)
        self.tag = tag
        self.sync = sync
        self.keys = None if keys is None else np.asarray(keys, dtype=np.int64)
        self.nkeys = nkeys
        self.per_period = per_period
        self.keep = keep
        self.meta = meta
        self.final = final
        self.monitor = monitor
        self.until = until
        P = len(self.pattern)
        if self.keys is not None:
            rows = math.ceil(self.length / P) if per_period else 1
            self.sums = np.zeros((rows, nkeys))
        else:
            self.sums = None
        self.rewards = np.zeros(self.length) if keep else None

    @property
    def period(self) -> int:
        return len(self.pattern)

    def arms(self, start: int, n: int) -> np.ndarray:
        P = len(self.pattern)
        if P == 1:
            return np.full(n, self.pattern[0], dtype=np.int64)
        return self.pattern[(start + np.arange(n)) % P]

    def feed(self, start: int, r: np.ndarray) -> None:
        if self.keep:
            self.rewards[start:start + len(r)] = r
        if self.keys is None:
            return
        pos = start + np.arange(len(r))
        k = self.keys[pos % self.period]
        ok = k >= 0
        if self.per_period:
            r0, r1 = start // self.period, (start + len(r) - 1) // self.period + 1
            idx = (pos[ok] // self.period - r0) * self.nkeys + k[ok]
            rows = self.sums[r0:r1]
            rows += np.bincount(idx, weights=r[ok], minlength=rows.size).reshape(rows.shape)
        else:
            self.sums[0] += np.bincount(k[ok], weights=r[ok], minlength=self.nkeys)


def fixed_segment(arm: int, length: int, tag: str, sync=None) -> Segment:
    return Segment([arm], length, tag, sync)


def commit_segment(arm: int) -> Segment:
    return Segment([arm], FOREVER, EXPLOIT, None, final=True)


@dataclass
class Context:
    """Knowledge plus an event sink; the sink never returns information."""

    know: Knowledge
    emit: Callable[..., None] = field(default=lambda kind, **kw: None)
    strict: bool = False
    record: dict = field(default_factory=dict)

    def log(self, kind: str, **data: Any) -> None:
        self.emit(kind, **data)
