"""Phases 2 and 3 and the recursion, on a timeline every player can follow.

Active players (always the lowest indices) cycle over every non-fixed arm by
rank, which keeps them collision-free, while committed players sit on their
arms.  At each checkpoint all players join a signal-testing block.  When the
coordinator's graph splits it sends, block by block: a start bit, the
top-cluster frame (one bit per arm), the gamma digits if capacities must be
probed, and finally the recursion outcome so committed players stay in step.
"""

from __future__ import annotations

import math

import numpy as np

from .. import stats as S
from ..schedule import session_layout
from . import codec
from .base import COMM, EXPLOIT, PHASE2, PHASE3, Context, Segment, commit_segment
from .graph import top_component
from .phase1 import Phase1Result, next_checkpoint, signal_group
from .recursion import Outcome, RecursionState, apply_outcome, recursion_step


class Timeline:
    def __init__(self, ctx: Context, r1: Phase1Result):
        self.ctx = ctx
        k = self.know = ctx.know
        self.p = k.index
        self.clock = r1.clock
        self.comm, self.cstar = r1.comm, r1.cstar
        self.stats = r1.stats
        self.mu_comm = r1.mu_comm
        self.gsize = signal_group(k, self.cstar)
        self.layout = codec.block_layout(k.M, k.K, self.comm, self.gsize, r1.info["window"])
        self.rec = RecursionState(k.M, k.K)
        self.known: dict[int, int | None] = {self.comm: self.cstar}
        self.arm: int | None = None          # own fixed arm once committed
        self.nblocks = 0
        self.mbits = k.M.bit_length()
        ctx.record.update(comm=self.comm, omega=self.layout.width, cstar=self.cstar,
                          t_comm=self.clock)

    # -- plumbing -------------------------------------------------------------
    def _play(self, seg):
        yield seg
        self.ctx.record["t"] = self.ctx.record.get("t", 0) + seg.length

    @property
    def left(self) -> int:
        return max(1, self.know.T - self.ctx.record.get("t", 0))

    def block(self, bit: int = 0):
        self.nblocks += 1
        coord = self.p == 1
        seg = Segment(self.layout.row(self.p, bit), self.layout.length, COMM,
                      ("blk", self.nblocks), keep=not coord)
        yield from self._play(seg)
        if coord:
            return bit
        k = self.know
        return codec.read_bit(self.layout.own_slot(self.p, seg.rewards), variant=k.variant,
                              mu_hat=self.mu_comm, group_size=self.gsize, M=k.M)

    def bits(self, values=None, n: int = 0):
        out = []
        for j in range(n if values is None else len(values)):
            out.append((yield from self.block(0 if values is None else values[j])))
        return out

    # -- exploration leg ----------------------------------------------------
    def leg(self):
        k, M = self.know, self.know.M
        cycles = next_checkpoint(k, self.clock) - self.clock
        pool = self.rec.pool
        L = len(pool)
        cycles = min(cycles, math.ceil(self.left / L))
        sync = ("p2", self.clock, self.rec.epoch)
        if self.arm is not None:
            seg = Segment([self.arm], cycles * L, EXPLOIT, sync)
            yield from self._play(seg)
        else:
            i = np.arange(1, L + 1)
            pattern = np.asarray(pool)[(self.p + i - 1) % L]
            keys = pattern * M
            seg = Segment(pattern, cycles * L, PHASE2, sync, keys=keys, nkeys=k.K * M,
                          monitor={"space": "explore", "counts": np.bincount(keys, minlength=k.K * M),
                                   "M": M})
            yield from self._play(seg)
            self.stats.sum += seg.sums[0]
            self.stats.cnt += cycles * seg.monitor["counts"]
        self.clock += cycles

    # -- phase 3 ------------------------------------------------------------
    def phase3(self, sessions: int, v_top):
        k, M = self.know, self.know.M
        m, pool = self.rec.m, self.rec.pool
        length = sessions * 2 * len(pool) * m
        sync = ("p3", self.clock, self.rec.epoch)
        if self.arm is not None:
            yield from self._play(Segment([self.arm], length, EXPLOIT, sync))
            return {}
        lay = session_layout(tuple(range(1, m + 1)), tuple(pool))
        r = self.p - 1
        watch = np.isin(lay.arms[r], list(v_top)) & lay.full[r]
        keys = np.where(watch, lay.arms[r] * M + lay.psi - 1, -1)
        meta = {"psi": lay.psi, "pass": lay.pass_no, "full": lay.full[r]}
        seg = Segment(lay.arms[r], length, PHASE3, sync, keys=keys, nkeys=k.K * M, meta=meta)
        yield from self._play(seg)
        sm = seg.sums[0].reshape(k.K, M)
        cn = (sessions * np.bincount(keys[keys >= 0], minlength=k.K * M)).reshape(k.K, M)
        caps = {}
        for a in v_top:
            tested = [psi for psi in range(1, m + 1) if cn[a, psi - 1] > 0]
            if k.variant:
                thr = sm[a, 0] / cn[a, 0] * (1 - 1 / (2 * M))
                flags = {psi: sm[a, psi - 1] / (psi * cn[a, psi - 1]) < thr for psi in tested}
            else:
                flags = {psi: sm[a, psi - 1] == 0 for psi in tested}
            caps[a] = S.infer_capacity(flags)
        self.ctx.log("capacities", caps={int(a): int(c) for a, c in caps.items()})
        return caps

    def phase3_sessions(self, gamma: int | None) -> int:
        b = self.know.params.B(self.clock)
        if self.know.variant:
            return S.omega_prime(b, self.know.delta, self.know.K, self.know.M)
        return S.omega(gamma, b, self.know.delta, self.know.K, self.know.M)

    # -- coordinator decision -----------------------------------------------
    def decide(self):
        """(v_top, v_bottom, need3, gamma) or None when nothing is sent yet."""
        k = self.know
        act = sorted(self.rec.active_arms)
        mu = self.stats.mu1()
        n1 = self.stats.view()[1][:, 0]
        rad = k.params.B(n1)
        part = top_component(act, mu, rad)
        if part is None:
            return None
        v_top, v_bottom = part
        need3 = not v_top <= self.known.keys()
        gamma = None
        if need3 and not k.variant:
            top = sorted(v_top)
            gamma = S.largest_gamma(min(mu[a] - rad[a] for a in top), 0.0, max(rad[a] for a in top))
            if gamma < 1:
                self.ctx.log("postpone", clock=self.clock, v_top=top)
                return None
        return v_top, v_bottom, need3, gamma

    # -- main loop ----------------------------------------------------------
    def run(self):
        k = self.know
        coord = self.p == 1
        # the clock stands still while communicating, so after an epoch the
        # current checkpoint is still the first one ahead: test again at once
        fresh = False
        while True:
            if not fresh:
                yield from self.leg()
            fresh = False
            plan = self.decide() if coord else None
            start = yield from self.block(1 if plan else 0)
            if not start:
                continue
            if coord:
                v_top, v_bottom, need3, gamma = plan
                yield from self.bits(codec.encode_arms(v_top, k.K, offset=0))
                self.ctx.log("frame", v_top=sorted(v_top), clock=self.clock)
            else:
                frame = yield from self.bits(n=k.K)
                v_top = codec.decode_arms(frame, offset=0)
                if not codec.valid_frame(v_top, self.rec.active_arms):
                    self.ctx.log("anomaly", what="unparseable frame", bits=frame)
                    continue
                v_bottom = frozenset(self.rec.active_arms) - v_top
                need3, gamma = not v_top <= self.known.keys(), None
                self.ctx.log("frame", v_top=sorted(v_top), clock=self.clock)
            caps = {a: self.known[a] for a in v_top if a in self.known}
            if need3:
                digits = codec.gamma_digits(k.params.B(self.clock))
                if not k.variant:
                    if coord:
                        yield from self.bits(codec.encode_gamma(gamma, digits))
                    else:
                        gamma = codec.decode_gamma((yield from self.bits(n=4 * digits)))
                caps.update((yield from self.phase3(self.phase3_sessions(gamma), v_top)))
                self.known.update({a: caps.get(a) for a in v_top})
            done = yield from self.outcome(v_top, v_bottom, caps)
            if done:
                break
            fresh = True
        arm = self.arm if self.arm is not None else self.rec.assignment[self.p]
        self.ctx.record["final_arm"] = int(arm)
        self.ctx.log("commit", arm=int(arm))
        yield commit_segment(arm)

    def outcome(self, v_top, v_bottom, caps):
        k = self.know
        if self.arm is None:
            out = recursion_step(self.rec, v_top, v_bottom, caps)
            send = [int(out.absorbed), int(out.done)]
            if out.absorbed and not out.done:
                send += codec.int_bits(out.m_after, self.mbits)
            if self.p == 1:
                yield from self.bits(send)
            else:
                heard = yield from self.bits(n=2)
                if heard[0] and not heard[1]:
                    heard += yield from self.bits(n=self.mbits)
                if heard != send:
                    self.ctx.log("anomaly", what="outcome mismatch", own=send, heard=heard)
            if self.p in self.rec.committed and not out.done:
                self.arm = self.rec.committed[self.p]
                self.ctx.log("committed", arm=int(self.arm), epoch=self.rec.epoch)
            self.ctx.record["epochs"] = self.rec.epoch
            return out.done
        heard = yield from self.bits(n=2)
        m_after = self.rec.m
        if heard[0] and not heard[1]:
            m_after = codec.bits_int((yield from self.bits(n=self.mbits)))
        apply_outcome(self.rec, v_top, v_bottom, Outcome(bool(heard[0]), bool(heard[1]), m_after))
        self.ctx.record["epochs"] = self.rec.epoch
        return bool(heard[1])
