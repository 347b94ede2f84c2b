"""Recursive allocation: fix the top cluster or shrink to it.

Active players are always the lowest indices 1..m, so the coordinator stays
active until the end and the active set is described by its size alone.
Newly committed players are the highest-index active players; they fill the
absorbed arms in ascending arm order, each up to its capacity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping


@dataclass
class RecursionState:
    M: int
    K: int
    fixed: frozenset[int] = frozenset()
    committed: dict[int, int] = field(default_factory=dict)   # player -> 0-based arm
    active_arms: frozenset[int] = frozenset()
    epoch: int = 0
    done: bool = False
    assignment: dict[int, int] = field(default_factory=dict)
    m_hint: int | None = None   # active count as heard by a committed player

    def __post_init__(self):
        if not self.active_arms:
            self.active_arms = frozenset(range(self.K))

    @property
    def m(self) -> int:
        if self.m_hint is not None:
            return self.m_hint
        return self.M - len(self.committed)

    @property
    def active_players(self) -> tuple[int, ...]:
        return tuple(range(1, self.m + 1))

    @property
    def pool(self) -> tuple[int, ...]:
        """Arms cycled by the active players: everything not fixed."""
        return tuple(a for a in range(self.K) if a not in self.fixed)


@dataclass(frozen=True)
class Outcome:
    absorbed: bool
    done: bool
    m_after: int


def _fill(players, arms, caps) -> dict[int, int]:
    out, it = {}, iter(players)
    for a in sorted(arms):
        for _ in range(caps[a]):
            p = next(it, None)
            if p is None:
                return out
            out[p] = a
    return out


def recursion_step(state: RecursionState, v_top, v_bottom,
                   capacities: Mapping[int, int]) -> Outcome:
    """Advance one epoch; ``capacities`` covers V_top (0-based arms)."""
    v_top, v_bottom = frozenset(v_top), frozenset(v_bottom)
    m = state.m
    caps = {a: min(int(capacities[a]), m) for a in v_top}
    state.epoch += 1
    absorbed = len(state.committed) + sum(caps.values()) <= state.M
    if absorbed:
        state.fixed = state.fixed | v_top
        if len(state.committed) + sum(caps.values()) == state.M:
            state.committed.update(_fill(state.active_players, v_top, caps))
            state.done = True
        else:
            newly = _fill(sorted(state.active_players, reverse=True), v_top, caps)
            state.committed.update(newly)
            state.active_arms = v_bottom
    else:
        state.active_arms = v_top
    if not state.done and len(state.active_arms) == 1:
        (a,) = state.active_arms
        state.committed.update({p: a for p in state.active_players})
        state.done = True
    if state.done:
        state.assignment = dict(state.committed)
    return Outcome(absorbed, state.done, state.m)


def apply_outcome(state: RecursionState, v_top, v_bottom, outcome: Outcome) -> None:
    """Update a committed player's view from broadcast outcome bits alone."""
    v_top, v_bottom = frozenset(v_top), frozenset(v_bottom)
    state.epoch += 1
    if outcome.absorbed:
        state.fixed = state.fixed | v_top
        state.active_arms = v_bottom
    else:
        state.active_arms = v_top
    state.done = outcome.done
    state.m_hint = outcome.m_after
