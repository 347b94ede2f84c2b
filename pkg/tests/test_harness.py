import csv
import json

import numpy as np
import pytest

from mmab_sax import env, harness
from mmab_sax.harness import (DesyncError, GoodEventMonitor, RegretLedger, RunConfig, run_episode,
                              summarize, sweep, write_events)
from mmab_sax.protocol.base import FOREVER, PHASE1, Segment


def small(**kw):
    return env.make_instance([0.9, 0.6, 0.3, 0.2], [2, 1, 1, 1], 3, **kw)


def test_ledger_add_and_periodic_match_brute_force():
    rng = np.random.default_rng(0)
    per = rng.random(7)
    led = RegretLedger(1000, points=37)
    direct = rng.random(123)
    led.add(0, direct, PHASE1)
    led.add_periodic(123, per, 877, "exploitation")
    full = np.concatenate([direct, np.resize(per, 877)])
    assert led.cumulative == pytest.approx(full.sum())
    ends, cum = led.series()
    assert cum[-1] == pytest.approx(full.sum())
    assert np.allclose(cum, np.cumsum(full)[ends - 1])
    assert led.by_phase["exploitation"] == pytest.approx(np.resize(per, 877).sum())


def test_episode_reproducible_and_phase_totals():
    inst = small(horizon=400_000, seed=5)
    a, b = run_episode(RunConfig(inst)), run_episode(RunConfig(inst))
    assert a.row() == b.row()
    assert sum(a.by_phase.values()) == pytest.approx(a.cumulative_regret)
    assert a.series[1][-1] == pytest.approx(a.cumulative_regret)
    assert a.steps == inst.horizon


def test_seeds_change_bernoulli_paths():
    r = [run_episode(RunConfig(small(horizon=60_000, seed=s))) for s in (1, 2)]
    t = [[e["clock"] for e in x.events if e["event"] == "trigger"] for x in r]
    assert t[0] != t[1]


def test_theorem_default_delta():
    inst = small(horizon=1000)
    eff = RunConfig(inst, delta_policy="theorem_default").effective_instance()
    assert eff.delta == pytest.approx(1 / (1000 ** 2 * 3 * 16))


def test_monitor_flags_a_bad_estimate():
    inst = small(horizon=10)
    mon = GoodEventMonitor(inst)
    seg = Segment([0], 5, PHASE1, keys=[0], nkeys=4 * 3,
                  monitor={"M": 3, "counts": np.eye(1, 12, 0, dtype=np.int64)[0]})
    seg.feed(0, np.zeros(5))           # five zeros from a mean-0.9 arm
    mon.observe(1, seg)
    assert mon.ok                      # radius at n=5 is still wide
    big = Segment([0], 4000, PHASE1, keys=[0], nkeys=12,
                  monitor={"M": 3, "counts": np.eye(1, 12, 0, dtype=np.int64)[0]})
    big.feed(0, np.zeros(4000))
    mon.observe(1, big)
    assert not mon.ok and mon.violations[0]["arm"] == 1


def test_truncation_and_trace(tmp_path):
    inst = small(horizon=300, seed=2)
    res = run_episode(RunConfig(inst, trace=True), trace_path=tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert len(rows) == 300 * 3
    assert tuple(rows[0]) == harness.TRACE_COLUMNS
    assert {r["player"] for r in rows} == {"1", "2", "3"}
    write_events(res, tmp_path / "e.jsonl")
    for line in open(tmp_path / "e.jsonl"):
        json.loads(line)


def test_trace_regret_matches_ledger(tmp_path):
    inst = small(horizon=2000, seed=3)
    res = run_episode(RunConfig(inst, trace=True), trace_path=tmp_path / "t.csv")
    arms = np.zeros((2000, 3), dtype=int)
    for r in csv.DictReader(open(tmp_path / "t.csv")):
        arms[int(r["t"]), int(r["player"]) - 1] = int(r["arm"])
    opt = env.optimal_allocation(inst)
    want = sum(env.step_regret(inst, arms[t], opt) for t in range(2000))
    assert res.cumulative_regret == pytest.approx(want)


def test_desync_is_flagged(monkeypatch):
    def player(ctx, policy="acapella"):
        def gen():
            yield Segment([ctx.know.index - 1], 10, PHASE1, ("leg", 0))
            yield Segment([ctx.know.index - 1], 10, PHASE1, ("leg", ctx.know.index))
            yield Segment([ctx.know.index - 1], FOREVER, PHASE1, None, final=True)
        return gen()
    monkeypatch.setattr(harness, "make_player", player)
    inst = small(horizon=100)
    res = run_episode(RunConfig(inst))
    assert res.desync and res.desync_at == 10
    with pytest.raises(DesyncError):
        run_episode(RunConfig(inst, strict=True))


def test_sweep_serial_equals_parallel_and_summary():
    inst = small(horizon=1)
    a = sweep([5000, 500], [0, 1], inst, jobs=1)
    b = sweep([5000, 500], [0, 1], inst, jobs=2)
    assert a == b
    assert [(r["horizon"], r["seed"]) for r in a] == [(500, 0), (500, 1), (5000, 0), (5000, 1)]
    s = summarize(a)
    assert [x["horizon"] for x in s] == [500, 5000] and all(x["n"] == 2 for x in s)


def test_jobs_env_fallback(monkeypatch):
    monkeypatch.setenv("MMAB_SAX_JOBS", "3")
    assert harness.resolve_jobs(None) == 3
    assert harness.resolve_jobs(2) == 2
