"""Lockstep driver, regret ledger, good-event monitor and horizon sweeps."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .env import (AGGREGATE, InstanceConfig, RewardStreams, feedback_block, occupancy,
                  optimal_allocation, realized_value)
from .protocol import TAGS, Context, Knowledge, make_player
from .stats import B

CHUNK = 1 << 15
SERIES_POINTS = 10_000
DELTA_POLICIES = ("explicit", "theorem_default")


class DesyncError(RuntimeError):
    """Players disagree about where they are in the shared schedule."""


@dataclass(frozen=True)
class RunConfig:
    instance: InstanceConfig
    policy: str = "acapella"
    delta_policy: str = "explicit"
    trace: bool = False
    strict: bool = False
    monitor: bool = True
    stop: str | None = None      # "phase1": end once every player has left Phase 1

    def effective_instance(self) -> InstanceConfig:
        if self.delta_policy == "explicit":
            return self.instance
        if self.delta_policy != "theorem_default":
            raise ValueError(f"unknown delta policy {self.delta_policy!r}")
        inst = self.instance
        T = max(inst.horizon, 2)
        return inst.with_overrides(delta=1.0 / (T * T * inst.M * inst.K ** 2))


class RegretLedger:
    """Cumulative pseudo-regret with phase subtotals and a bucketed series."""

    def __init__(self, horizon: int, points: int = SERIES_POINTS):
        self.horizon = horizon
        self.stride = max(1, math.ceil(horizon / points))
        self.buckets = np.zeros(max(1, math.ceil(horizon / self.stride)))
        self.by_phase = {tag: 0.0 for tag in TAGS}
        self.total = 0.0

    def add(self, t: int, r: np.ndarray, tag: str) -> None:
        if not len(r):
            return
        s = float(r.sum())
        self.total += s
        self.by_phase[tag] = self.by_phase.get(tag, 0.0) + s
        b0 = t // self.stride
        idx = (t + np.arange(len(r))) // self.stride - b0
        part = np.bincount(idx, weights=r)
        self.buckets[b0:b0 + len(part)] += part

    def add_periodic(self, t: int, period: np.ndarray, n: int, tag: str) -> float:
        """Add ``n`` steps that repeat the per-step regrets in ``period``."""
        P = len(period)
        cs = np.concatenate([[0.0], np.cumsum(period)])

        def upto(x):
            x = np.asarray(x, dtype=np.int64)
            return (x // P) * cs[-1] + cs[x % P]

        total = float(upto(n))
        self.total += total
        self.by_phase[tag] = self.by_phase.get(tag, 0.0) + total
        b0, b1 = t // self.stride, (t + n - 1) // self.stride
        edges = np.clip(np.arange(b0, b1 + 2) * self.stride - t, 0, n)
        self.buckets[b0:b1 + 1] += np.diff(upto(edges))
        return total

    @property
    def cumulative(self) -> float:
        return self.total

    def series(self) -> tuple[np.ndarray, np.ndarray]:
        ends = np.minimum((np.arange(len(self.buckets)) + 1) * self.stride, self.horizon)
        return ends, np.cumsum(self.buckets)


class GoodEventMonitor:
    """Checks every exploration estimate against the true means (oracle access)."""

    def __init__(self, instance: InstanceConfig):
        self.inst = instance
        self.state: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.violations: list[dict] = []

    def truth(self, M: int) -> np.ndarray:
        mu, cap = self.inst.means, self.inst.capacities
        psi = np.arange(1, M + 1)[None, :]
        if self.inst.feedback_mode == AGGREGATE:
            return mu[:, None] * np.minimum(psi, cap[:, None]) / psi
        return np.where(psi <= cap[:, None], mu[:, None], 0.0)

    def observe(self, p: int, seg) -> None:
        info = seg.monitor
        if info is None or seg.sums is None:
            return
        M, counts = info["M"], info["counts"]
        K = self.inst.K
        s0, c0 = self.state.get(p, (np.zeros(K * M), np.zeros(K * M, dtype=np.int64)))
        if seg.per_period:
            csum = s0 + np.cumsum(seg.sums, axis=0)
            ccnt = c0 + np.outer(np.arange(1, len(seg.sums) + 1), counts)
        else:
            reps = seg.length // seg.period
            csum, ccnt = (s0 + seg.sums[0])[None], (c0 + reps * counts)[None]
        self.state[p] = (csum[-1].copy(), ccnt[-1].copy())
        psi = np.tile(np.arange(1, M + 1), K)
        est = csum / np.maximum(ccnt, 1)
        if self.inst.feedback_mode == AGGREGATE:
            est = est / psi
        rad = B(np.maximum(ccnt, 1), self.inst.delta, self.inst.M, K)
        bad = (ccnt > 0) & (np.abs(est - self.truth(M).ravel()) > rad + 1e-12)
        if bad.any():
            row, key = np.argwhere(bad)[0]
            self.violations.append({"player": p, "arm": int(key // M) + 1, "psi": int(key % M) + 1,
                                    "count": int(ccnt[row, key])})

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class RunResult:
    horizon: int
    seed: int
    cumulative_regret: float
    by_phase: dict
    series: tuple
    final_assignment: tuple | None
    good_event: bool
    violations: list
    desync: bool
    desync_at: int | None
    incomplete: bool
    phase1_steps: int
    partition_epochs: int
    commit_time: int | None
    post_commit_regret: float
    timeline: list = field(default_factory=list)
    events: list = field(default_factory=list)
    records: list = field(default_factory=list)
    optimal_counts: tuple = ()
    steps: int = 0               # steps simulated; below horizon only after an early stop

    def assignment_counts(self, K: int) -> tuple[int, ...] | None:
        if self.final_assignment is None:
            return None
        c = [0] * K
        for a in self.final_assignment:
            c[a - 1] += 1
        return tuple(c)

    def row(self) -> dict:
        fa = "" if self.final_assignment is None else ";".join(map(str, self.final_assignment))
        return {"horizon": self.horizon, "seed": self.seed,
                "cumulative_regret": f"{self.cumulative_regret:.6f}",
                "good_event": int(self.good_event), "phase1_steps": self.phase1_steps,
                "partition_epochs": self.partition_epochs, "final_assignment": fa}


CSV_COLUMNS = ("horizon", "seed", "cumulative_regret", "good_event", "phase1_steps",
               "partition_epochs", "final_assignment")
TRACE_COLUMNS = ("t", "player", "arm", "psi", "pass", "in_full_group", "reward")


def _joint_period(segs, offs, limit: int = 1 << 20) -> int:
    P = 1
    for s in segs:
        P = math.lcm(P, s.period)
    return min(P, limit)


def run_episode(config: RunConfig, trace_path: str | Path | None = None) -> RunResult:
    inst = config.effective_instance()
    M, K, T = inst.M, inst.K, inst.horizon
    streams = RewardStreams(inst.seed, M)
    opt = optimal_allocation(inst)
    ledger = RegretLedger(T)
    monitor = GoodEventMonitor(inst) if config.monitor else None
    events: list[dict] = []
    clock = {"t": 0}

    def sink(p):
        def emit(kind, **data):
            events.append({"t": clock["t"], "player": p, "event": kind, **data})
        return emit

    ctxs = [Context(Knowledge(p, M, K, T, inst.delta, inst.feedback_mode), emit=sink(p),
                    strict=config.strict) for p in range(1, M + 1)]
    gens = [make_player(c, config.policy) for c in ctxs]
    cur = [next(g) for g in gens]
    off = [0] * M
    timeline = [(0, p + 1, cur[p].tag) for p in range(M)]
    desync_at = None
    commit_time, post = None, 0.0
    writer, fh = None, None
    if trace_path is not None and config.trace:
        fh = open(trace_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
    t = 0
    if _desynced(cur, off):
        desync_at = 0
        events.append({"t": 0, "player": 0, "event": "desync"})
        if config.strict:
            raise DesyncError("players out of step at t=0")
    try:
        while t < T:
            if all(s.final for s in cur):
                commit_time = t
                P = _joint_period(cur, off)
                n = min(P, T - t)
                arms = np.stack([s.arms(o, n) for s, o in zip(cur, off)])
                per = opt.value - realized_value(inst, occupancy(arms, K))
                post = ledger.add_periodic(t, per, T - t, cur[0].tag)
                if writer is not None:
                    _trace_rows(writer, t, cur, off, arms, None)
                t = T
                break
            n = min(min(s.length - o for s, o in zip(cur, off)), T - t, CHUNK)
            for s, o in zip(cur, off):
                if s.until is not None:
                    n = min(n, max(16, o))   # grow with the run, so few chunks are wasted
            arms = np.stack([s.arms(o, n) for s, o in zip(cur, off)])
            u = streams.uniforms(n)
            fb = feedback_block(inst, arms, u)
            # a self-ending segment cuts the chunk short; the others' later
            # steps would have met a different profile, so they are redone
            stops = {}
            for p in range(M):
                if cur[p].until is not None:
                    k = cur[p].until(cur[p], off[p], fb[p])
                    if k is not None:
                        stops[p] = k
            if stops:
                cut = min(stops.values())
                if cut < n:
                    streams.unread(u[:, cut:])
                    n, arms, fb = cut, arms[:, :cut], fb[:, :cut]
                for p, k in stops.items():
                    if k == cut:
                        cur[p].length = off[p] + cut
            ledger.add(t, opt.value - realized_value(inst, occupancy(arms, K)), cur[0].tag)
            if writer is not None:
                _trace_rows(writer, t, cur, off, arms, fb)
            for p in range(M):
                cur[p].feed(off[p], fb[p])
                off[p] += n
            t += n
            clock["t"] = t
            started = []
            for p in range(M):
                if off[p] == cur[p].length:
                    if monitor is not None:
                        monitor.observe(p + 1, cur[p])
                    cur[p] = gens[p].send(None)
                    off[p] = 0
                    started.append(p)
                    if timeline[-1][1:] != (p + 1, cur[p].tag):
                        timeline.append((t, p + 1, cur[p].tag))
            if started and config.stop == "phase1" and all("phase1_end" in c.record for c in ctxs):
                break
            if started and t < T:
                bad = _desynced(cur, off)
                if bad and desync_at is None:
                    desync_at = t
                    events.append({"t": t, "player": 0, "event": "desync"})
                    if config.strict:
                        raise DesyncError(f"players out of step at t={t}")
    finally:
        if fh is not None:
            fh.close()
    records = [dict(c.record) for c in ctxs]
    finals = [r.get("final_arm") for r in records]
    done = all(f is not None for f in finals) and commit_time is not None
    fa = tuple(int(f) + 1 for f in finals) if done else None
    if config.policy != "acapella":
        fa, done = None, True
    return RunResult(
        horizon=T, seed=inst.seed, cumulative_regret=ledger.cumulative,
        by_phase=dict(ledger.by_phase), series=ledger.series(), final_assignment=fa,
        good_event=monitor.ok if monitor is not None else True,
        violations=monitor.violations if monitor is not None else [],
        desync=desync_at is not None, desync_at=desync_at, incomplete=not done,
        phase1_steps=int(records[0].get("phase1_end", T)),
        partition_epochs=int(records[0].get("epochs", 0)),
        commit_time=commit_time, post_commit_regret=post, timeline=timeline,
        events=events, records=records, optimal_counts=opt.counts, steps=t)


def _desynced(cur, off) -> bool:
    keyed = [(s.sync, o) for s, o in zip(cur, off) if s.sync is not None]
    if len(keyed) < 2:
        return False
    return len({k for k, _ in keyed}) > 1 or any(o for _, o in keyed)


def _trace_rows(writer, t, cur, off, arms, fb) -> None:
    M, n = arms.shape
    for j in range(n):
        for p in range(M):
            s = cur[p]
            meta = s.meta or {}
            pos = (off[p] + j) % s.period if "psi" in meta else None
            psi = int(meta["psi"][pos]) if pos is not None else 0
            pss = int(meta["pass"][pos]) if pos is not None else 0
            full = int(meta["full"][pos]) if pos is not None else 0
            r = "" if fb is None else f"{fb[p, j]:.6g}"
            writer.writerow((t + j, p + 1, int(arms[p, j]) + 1, psi, pss, full, r))


def write_events(result: RunResult, path: str | Path) -> None:
    with open(path, "w") as fh:
        for ev in result.events:
            fh.write(json.dumps(ev, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset, tuple, np.ndarray)):
        return list(x)
    raise TypeError(type(x))


# ---------------------------------------------------------------------------
# sweeps


def resolve_jobs(jobs: int | None = None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("MMAB_SAX_JOBS", "1") or 1)
    return max(1, jobs)


def _episode_row(args) -> dict:
    instance, horizon, seed, policy, delta_policy = args
    cfg = RunConfig(instance.with_overrides(horizon=int(horizon), seed=int(seed)),
                    policy=policy, delta_policy=delta_policy)
    res = run_episode(cfg)
    row = res.row()
    row["_regret"] = res.cumulative_regret
    row["_desync"] = res.desync
    return row


def sweep(horizons: Sequence[int], seeds: Iterable[int], instance: InstanceConfig,
          jobs: int | None = None, policy: str = "acapella",
          delta_policy: str = "explicit") -> list[dict]:
    """One row per (horizon, seed), sorted by that key."""
    tasks = [(instance, int(T), int(s), policy, delta_policy) for T in horizons for s in seeds]
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(tasks) == 1:
        rows = [_episode_row(a) for a in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_episode_row, tasks))
    return sorted(rows, key=lambda r: (int(r["horizon"]), int(r["seed"])))


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Mean and sample standard deviation of cumulative regret per horizon."""
    by: dict[int, list[float]] = {}
    for r in rows:
        by.setdefault(int(r["horizon"]), []).append(float(r["cumulative_regret"]))
    out = []
    for T in sorted(by):
        v = np.array(by[T])
        out.append({"horizon": T, "n": len(v), "mean": float(v.mean()),
                    "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0})
    return out


def good_event_rate(instance: InstanceConfig, n_seeds: int, seed0: int = 0) -> float:
    ok = 0
    for s in range(seed0, seed0 + n_seeds):
        res = run_episode(RunConfig(instance.with_overrides(seed=s)))
        ok += res.good_event
    return ok / n_seeds
