"""Player policies: A-CAPELLA, the UCB fallback and a round-robin baseline."""

from __future__ import annotations

import numpy as np

from .base import FALLBACK, FOREVER, PHASE1, Context, Segment
from .phase1 import coordinator_phase1, listener_phase1
from .phase2 import Timeline

POLICIES = ("acapella", "simple_rr")


def ucb_choice(sums: np.ndarray, counts: np.ndarray, radius) -> int:
    """Optimistic arm among the candidates; unpulled arms first, ties to the lowest position."""
    if (counts == 0).any():
        return int(np.flatnonzero(counts == 0)[0])
    return int(np.argmax(sums / counts + radius(counts)))


def ucb_stay(sums: np.ndarray, counts: np.ndarray, j: int, radius):
    """Stop rule for a run of pulls on the current UCB choice ``j``.

    The radius depends on the arm's own count only, so rival indices are
    frozen while ``j`` is pulled.  The returned callable takes the rewards of
    the next pulls and gives how many of them happen before ``j`` loses the
    argmax (ties go to the lowest position), or None if it never does.
    """
    idx = sums / np.maximum(counts, 1) + radius(counts)
    below = idx[:j].max() if j > 0 else -np.inf
    above = idx[j + 1:].max() if j + 1 < len(idx) else -np.inf

    def until(seg, start, r):
        n = np.arange(1, len(r) + 1) + counts[j] + start
        s = sums[j] + seg.sums[0][0] + np.cumsum(r)
        own = s / n + radius(n)
        lost = np.flatnonzero((own <= below) | (own < above))
        return int(lost[0]) + 1 if lost.size else None
    return until


def ucb(ctx: Context, arms):
    arms = list(arms)
    k = ctx.know
    ctx.record["fallback"] = True
    ctx.log("ucb", arms=arms)
    sums = np.zeros(len(arms))
    counts = np.zeros(len(arms), dtype=np.int64)
    while True:
        j = ucb_choice(sums, counts, k.params.B)
        if (counts == 0).any():
            seg = Segment([arms[j]], 1, FALLBACK, None, keep=True)
            yield seg
            sums[j] += seg.rewards[0]
            counts[j] += 1
            continue
        # pull j until its index falls off the top, however long that is
        seg = Segment([arms[j]], FOREVER, FALLBACK, None, keys=[0], nkeys=1,
                      until=ucb_stay(sums, counts, j, k.params.B))
        yield seg
        sums[j] += seg.sums[0][0]
        counts[j] += seg.length


def simple_rr(ctx: Context):
    """Fixed simple round robin over every arm, forever."""
    k = ctx.know
    i = np.arange(1, k.K + 1)
    yield Segment((k.index + i - 1) % k.K, FOREVER, PHASE1, None, final=True)


def acapella(ctx: Context):
    k = ctx.know
    if k.M == 1:
        yield from ucb(ctx, range(k.K))
        return
    phase1 = coordinator_phase1 if k.index == 1 else listener_phase1
    r1 = yield from phase1(ctx)
    ctx.record["phase1_end"] = ctx.record.get("t", 0)
    if r1.kind == "fallback":
        yield from ucb(ctx, r1.candidates)
        return
    yield from Timeline(ctx, r1).run()


def make_player(ctx: Context, policy: str = "acapella"):
    if policy == "acapella":
        return acapella(ctx)
    if policy == "simple_rr":
        return simple_rr(ctx)
    raise ValueError(f"unknown policy {policy!r}")
