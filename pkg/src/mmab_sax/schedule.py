"""Deterministic round-robin schedules shared by every player.

Player and arm indices in the public helpers are 1-based to match the usual
notation; the array builders return 0-based arm indices ready for the
environment.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np


def simple_rr_arm(p: int, i: int, K: int) -> int:
    """Arm pulled by player ``p`` in round ``i`` of simple round robin."""
    return (p + i - 1) % K + 1


@dataclass(frozen=True)
class GroupPlan:
    psi: int
    pass_no: int
    groups: tuple[tuple[int, ...], ...]

    def full_groups(self) -> tuple[tuple[int, ...], ...]:
        return tuple(g for g in self.groups if len(g) == self.psi)

    def group_of(self, player: int) -> int:
        for j, g in enumerate(self.groups):
            if player in g:
                return j
        raise KeyError(player)


def grouped_rr_plan(psi: int, pass_no: int, active_players: Sequence[int]) -> GroupPlan:
    """Split players into groups of ``psi``.

    Pass 1 takes consecutive blocks in ascending index order, pass 2 in
    descending order, so the leftover players of pass 1 (highest indices)
    head a full group in pass 2.
    """
    players = sorted(active_players)
    if not 1 <= psi <= len(players):
        raise ValueError(f"group size {psi} invalid for {len(players)} players")
    if pass_no not in (1, 2):
        raise ValueError("pass must be 1 or 2")
    seq = players if pass_no == 1 else players[::-1]
    groups = tuple(tuple(seq[k:k + psi]) for k in range(0, len(seq), psi))
    return GroupPlan(psi, pass_no, groups)


@dataclass(frozen=True)
class SessionLayout:
    """One grouped round-robin session, laid out step by step.

    ``arms[r, s]`` is the 0-based arm of the r-th player of ``players`` at
    step s; ``psi``/``pass_no`` label the step and ``full[r, s]`` says whether
    that player sat in a full group.  ``group_size[r, s]`` is the size of the
    player's nominal group.
    """

    players: tuple[int, ...]
    pool: tuple[int, ...]
    arms: np.ndarray
    psi: np.ndarray
    pass_no: np.ndarray
    full: np.ndarray
    group_size: np.ndarray

    @property
    def length(self) -> int:
        return self.arms.shape[1]

    def row(self, player: int) -> int:
        return self.players.index(player)


@lru_cache(maxsize=256)
def session_layout(players: tuple[int, ...], pool: tuple[int, ...]) -> SessionLayout:
    """Grouped round-robin session for ``players`` cycling over ``pool`` (0-based arms).

    Group j in round i pulls ``pool[(j + i - 1) mod |pool|]`` (0-based j, 1-based i),
    the group-level analogue of simple round robin.
    """
    m, k = len(players), len(pool)
    if m > k:
        raise ValueError("grouped round robin needs at least as many arms as players")
    length = 2 * k * m
    arms = np.empty((m, length), dtype=np.int64)
    full = np.empty((m, length), dtype=bool)
    gsize = np.empty((m, length), dtype=np.int64)
    psi_arr = np.empty(length, dtype=np.int64)
    pass_arr = np.empty(length, dtype=np.int64)
    pos = {p: r for r, p in enumerate(players)}
    pool_arr = np.asarray(pool, dtype=np.int64)
    s = 0
    for psi in range(1, m + 1):
        for pass_no in (1, 2):
            plan = grouped_rr_plan(psi, pass_no, players)
            rounds = np.arange(1, k + 1)
            for j, grp in enumerate(plan.groups):
                cyc = pool_arr[(j + rounds - 1) % k]
                for p in grp:
                    r = pos[p]
                    arms[r, s:s + k] = cyc
                    full[r, s:s + k] = len(grp) == psi
                    gsize[r, s:s + k] = len(grp)
            psi_arr[s:s + k] = psi
            pass_arr[s:s + k] = pass_no
            s += k
    for a in (arms, full, gsize, psi_arr, pass_arr):
        a.setflags(write=False)
    return SessionLayout(tuple(players), tuple(pool), arms, psi_arr, pass_arr, full, gsize)


def session_plan(active_players: Sequence[int], K: int) -> list[tuple[int, ...]]:
    """Step list of one session over arms 1..K: each entry is the per-player arm tuple."""
    lay = session_layout(tuple(sorted(active_players)), tuple(range(K)))
    return [tuple(int(a) + 1 for a in lay.arms[:, s]) for s in range(lay.length)]


def session_length(m: int, k: int) -> int:
    return 2 * k * m


def rr_block(players: Sequence[int], pool: Sequence[int], steps: int, start: int = 1) -> np.ndarray:
    """Simple round robin of ``players`` (by rank) over ``pool``; (m, steps) 0-based arms."""
    pool_arr = np.asarray(pool, dtype=np.int64)
    k = len(pool_arr)
    ranks = np.arange(1, len(players) + 1)[:, None]
    i = np.arange(start, start + steps)[None, :]
    return pool_arr[(ranks + i - 1) % k]


# ---------------------------------------------------------------------------
# pull counters


class PullCounters:
    """Full-group exploration pull tallies N^p(arm, psi) for every player.

    Every player can maintain the whole table locally because the schedule
    is common knowledge; only counted (exploration) pulls are recorded.
    """

    def __init__(self, M: int, K: int):
        self.M, self.K = M, K
        self.counts = np.zeros((M + 1, K + 1, M + 1), dtype=np.int64)

    def record_pull(self, p: int, arm: int, psi: int, in_full_group: bool) -> None:
        if in_full_group:
            self.counts[p, arm, psi] += 1

    def record_session(self, layout: SessionLayout, sessions: int = 1) -> None:
        for r, p in enumerate(layout.players):
            mask = layout.full[r]
            np.add.at(self.counts[p], (layout.arms[r][mask] + 1, layout.psi[mask]), sessions)

    def own(self, p: int, arm: int, psi: int) -> int:
        return int(self.counts[p, arm, psi])

    def minimum(self, arm: int, psi: int, players: Sequence[int] | None = None) -> int:
        ps = list(players) if players is not None else list(range(1, self.M + 1))
        return int(self.counts[ps, arm, psi].min())
