"""Phase 1: grouped exploration and election of the communication arm.

All players run grouped round-robin sessions over every arm.  The schedule
clock is N(., 1), which grows by two per session.  At each checkpoint with a
usable signal duration, a listening window is inserted: the listeners run
grouped sessions among themselves while the coordinator either sits on a
free arm or, when signalling, camps on the elected arm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import stats as S
from ..schedule import session_layout
from .base import COMM, PHASE1, Context, Segment


class ExploreStats:
    """Own reward sums and full-group counts per (arm, group size)."""

    def __init__(self, K: int, M: int):
        self.K, self.M = K, M
        self.sum = np.zeros(K * M)
        self.cnt = np.zeros(K * M, dtype=np.int64)

    def key(self, a: int, psi: int) -> int:
        return a * self.M + psi - 1

    def view(self, s=None, c=None):
        s = self.sum if s is None else s
        c = self.cnt if c is None else c
        return s.reshape(self.K, self.M), c.reshape(self.K, self.M)

    def mu1(self, s=None, c=None) -> np.ndarray:
        sm, cn = self.view(s, c)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(cn[:, 0] > 0, sm[:, 0] / np.maximum(cn[:, 0], 1), 0.0)

    def capacity(self, a: int, variant: bool, s=None, c=None) -> int:
        sm, cn = self.view(s, c)
        tested = [psi for psi in range(1, self.M + 1) if cn[a, psi - 1] > 0]
        if not tested:
            return 0
        if not variant:
            return S.infer_capacity({psi: sm[a, psi - 1] == 0 for psi in tested})
        base = sm[a, 0] / max(cn[a, 0], 1)
        thr = base * (1 - 1 / (2 * self.M))
        return S.infer_capacity({psi: sm[a, psi - 1] / (psi * cn[a, psi - 1]) < thr
                                 for psi in tested})

    def capacity_known(self, a: int, know) -> bool:
        sm, cn = self.view()
        if self.M < 2:
            return False
        n1 = int(cn[a, 0])
        n2 = int(cn[a, 1:].min())
        return S.capacity_known(n2, self.mu1()[a], know.params.B(n1), know.delta, know.M, know.K)


@dataclass
class Phase1Result:
    kind: str                       # "phase2" or "fallback"
    clock: int
    comm: int = -1
    cstar: int = 0
    candidates: tuple[int, ...] = ()
    mu_comm: float = 0.0
    stats: ExploreStats | None = None
    t0: int | None = None
    info: dict = field(default_factory=dict)


def explore_segment(p: int, M: int, K: int, sessions: int, keyed: bool = True) -> Segment:
    lay = session_layout(tuple(range(1, M + 1)), tuple(range(K)))
    r = p - 1
    keys = np.where(lay.full[r], lay.arms[r] * M + lay.psi - 1, -1)
    counts = np.bincount(keys[keys >= 0], minlength=K * M)
    meta = {"psi": lay.psi, "pass": lay.pass_no, "full": lay.full[r]}
    return Segment(lay.arms[r], sessions * lay.length, PHASE1, ("p1", M, K),
                   keys=keys if keyed else None, nkeys=K * M, per_period=True, meta=meta,
                   monitor={"space": "explore", "counts": counts, "M": M})


def window_layout(M: int, K: int):
    return session_layout(tuple(range(2, M + 1)), tuple(range(K)))


def free_arms(M: int, K: int) -> np.ndarray:
    """Arm left unused by the listener groups at each step of a window session."""
    lay = window_layout(M, K)
    i = np.arange(lay.length) % K + 1
    ngroups = np.ceil((M - 1) / lay.psi).astype(np.int64)
    return (ngroups + i - 1) % K


def window_valid(know, clock: int) -> bool:
    if know.M < 2:
        return False
    if know.variant:
        return clock > 0
    return S.SIGNAL_GAMMA * know.params.B(clock) < 1


def window_duration(know, clock: int) -> int:
    b = know.params.B(clock)
    if know.variant:
        return S.omega_prime(b, know.delta, know.K, know.M)
    return S.omega(S.SIGNAL_GAMMA, b, know.delta, know.K, know.M)


def signal_group(know, cap: int) -> int:
    """Tester group size that makes the coordinator's presence visible."""
    return cap - 1 if know.variant else cap


def eligible(know, cap: int) -> bool:
    lo = 2 if know.variant else 1
    return lo <= cap < know.M


def next_checkpoint(know, clock: int) -> int:
    if know.variant:
        return _variant_next(clock, know.M)
    return S.next_level_clock(clock, know.params)


def _variant_next(clock: int, M: int) -> int:
    base = S.variant_base(M)
    a = S.power_level(clock, base) + 1 if clock >= 1 else 1
    return max(clock + 1, math.ceil(base ** a))


def checkpoint_level(know, clock: int) -> int:
    if know.variant:
        return S.power_level(clock, S.variant_base(know.M)) if clock >= 1 else -1
    return know.params.level(clock)


class Phase1:
    """Exploration state shared by both roles."""

    def __init__(self, ctx: Context):
        self.ctx = ctx
        k = ctx.know
        self.know = k
        self.stats = ExploreStats(k.K, k.M)
        self.clock = 0
        self.t0 = None
        self.trigger_arm = None
        self.mu_t0 = None
        self.caps_t0 = None

    # -- exploration legs ---------------------------------------------------
    def leg(self):
        k = self.know
        target = next_checkpoint(k, self.clock)
        sessions = max(1, math.ceil((target - self.clock) / 2))
        per = 2 * k.K * k.M
        left = max(1, math.ceil((k.T - self.ctx.record.get("t", 0)) / per))
        sessions = min(sessions, left)
        seg = explore_segment(k.index, k.M, k.K, sessions)
        yield seg
        self.ctx.record["t"] = self.ctx.record.get("t", 0) + seg.length
        counts = seg.monitor["counts"]
        csum = self.stats.sum + np.cumsum(seg.sums, axis=0)
        ccnt = self.stats.cnt + np.outer(np.arange(1, sessions + 1), counts)
        if self.t0 is None:
            self._check_trigger(csum, ccnt)
        self.stats.sum, self.stats.cnt = csum[-1].copy(), ccnt[-1].copy()
        self.clock += 2 * sessions

    def _check_trigger(self, csum, ccnt):
        k, M = self.know, self.know.M
        n1 = ccnt[:, ::M]
        mu = csum[:, ::M] / np.maximum(n1, 1)
        b = k.params.B(n1)
        hit = (mu - k.params.h * b >= 0) & (n1 > 0)
        rows = np.flatnonzero(hit.any(axis=1))
        if not len(rows):
            return
        r = rows[0]
        arms = np.flatnonzero(hit[r])
        self.trigger_arm = int(max(arms, key=lambda a: (mu[r, a], -a)))
        self.t0 = int(self.clock + 2 * (r + 1))
        self.mu_t0 = mu[r].copy()
        if k.variant:
            self.caps_t0 = [self.stats.capacity(a, True, csum[r], ccnt[r]) for a in range(k.K)]
        self.ctx.log("trigger", arm=self.trigger_arm, clock=self.t0,
                     mu_hat=float(mu[r, self.trigger_arm]),
                     n_over_g=float(self.t0 / k.params.g(self.t0)))

    def candidates(self, ratio: float) -> tuple[int, ...]:
        return S.candidate_set(self.mu_t0, self.trigger_arm, ratio)

    def cap(self, a: int) -> tuple[int, bool]:
        """(capacity estimate, known?) for arm a at the current clock."""
        if self.know.variant:
            if self.caps_t0 is None:
                return 0, False
            return self.caps_t0[a], True
        return self.stats.capacity(a, False), self.stats.capacity_known(a, self.know)

    def window_segment(self, sessions: int, p: int, camp: int | None) -> Segment:
        k = self.know
        lay = window_layout(k.M, k.K)
        length = sessions * lay.length
        if p == 1:
            pattern = np.array([camp]) if camp is not None else free_arms(k.M, k.K)
            return Segment(pattern, length, COMM, ("win", self.clock))
        r = p - 2
        meta = {"psi": lay.psi, "pass": lay.pass_no, "full": lay.full[r]}
        return Segment(lay.arms[r], length, COMM, ("win", self.clock), keep=True, meta=meta)

    def play(self, seg):
        yield seg
        self.ctx.record["t"] = self.ctx.record.get("t", 0) + seg.length

    def result(self, kind, **kw) -> Phase1Result:
        return Phase1Result(kind, self.clock, stats=self.stats, t0=self.t0, **kw)


def coordinator_phase1(ctx: Context):
    ph = Phase1(ctx)
    k = ctx.know
    t_prime = None
    fallback_windows = None   # windows still honoured after giving up
    while True:
        yield from ph.leg()
        if ph.t0 is not None and t_prime is None:
            t_prime = ph.clock
            cands = ph.candidates(S.COORDINATOR_RATIO)
            ctx.log("candidates", role="coordinator", arms=list(cands), t_prime=t_prime)
            is_comm = False
        else:
            is_comm = t_prime is not None and fallback_windows is None
        if not window_valid(k, ph.clock):
            continue
        w = window_duration(k, ph.clock)
        if not is_comm:
            yield from ph.play(ph.window_segment(w, 1, None))
            if fallback_windows is not None:
                fallback_windows -= 1
                if fallback_windows == 0:
                    return ph.result("fallback", candidates=cands, info={"window": w})
            continue
        mu = ph.stats.mu1()
        ok = []
        for a in cands:
            c, known = ph.cap(a)
            if known and eligible(k, c):
                ok.append(a)
        if not ok:
            # keep the listeners' window schedule until they give up as well
            ctx.log("fallback", role="coordinator", clock=ph.clock)
            fallback_windows = 2
            yield from ph.play(ph.window_segment(w, 1, None))
            continue
        comm = int(max(ok, key=lambda a: (mu[a], -a)))
        cstar = ph.cap(comm)[0]
        ctx.log("signal", arm=comm, clock=ph.clock, omega=w, capacity=cstar)
        yield from ph.play(ph.window_segment(w, 1, comm))
        return ph.result("phase2", comm=comm, cstar=cstar, candidates=cands,
                         mu_comm=float(mu[comm]), info={"window": w})


def detect(ph: Phase1, rewards: np.ndarray, sessions: int, arms_ok, w: int) -> list[int]:
    k = ph.know
    lay = window_layout(k.M, k.K)
    r = k.index - 2
    arms = np.tile(lay.arms[r], sessions)
    gsize = np.tile(lay.group_size[r], sessions)
    mu = ph.stats.mu1()
    hits = []
    for a, cap in arms_ok:
        size = signal_group(k, cap)
        q = (arms == a) & (gsize == size)
        if q.sum() < w:
            continue
        if not k.variant:
            if np.all(rewards[q] == 0):
                hits.append(a)
        elif rewards[q].mean() / size >= mu[a] * (1 + 1 / (2 * k.M)):
            hits.append(a)
    return hits


def listener_phase1(ctx: Context):
    ph = Phase1(ctx)
    k = ctx.know
    cands = None
    misses = 0
    while True:
        yield from ph.leg()
        if ph.t0 is not None and cands is None:
            cands = ph.candidates(S.LISTENER_RATIO)
            ctx.log("candidates", role="listener", arms=list(cands))
        if not window_valid(k, ph.clock):
            continue
        w = window_duration(k, ph.clock)
        seg = ph.window_segment(w, k.index, None)
        watch = []
        if cands is not None:
            for a in cands:
                c, known = ph.cap(a)
                if known and eligible(k, c):
                    watch.append((a, c))
        yield from ph.play(seg)
        if cands is None:
            continue
        hits = detect(ph, seg.rewards, w, watch, w)
        if hits:
            if len(hits) > 1:
                ctx.log("anomaly", what="several signalled arms", arms=hits)
            comm = min(hits)
            cstar = dict(watch)[comm]
            ctx.log("detect", arm=comm, clock=ph.clock, omega=w, capacity=cstar)
            return ph.result("phase2", comm=comm, cstar=cstar, candidates=cands,
                             mu_comm=float(ph.stats.mu1()[comm]), info={"window": w})
        misses += 1
        if misses >= 3:
            ctx.log("fallback", role="listener", clock=ph.clock)
            return ph.result("fallback", candidates=cands)
