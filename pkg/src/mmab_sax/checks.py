"""Fast property suites behind ``mmab-sax check``.

Each suite returns ``(passed, detail)``; the CLI prints one line per suite.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from . import env, schedule
from . import stats as S
from .harness import RunConfig, run_episode
from .protocol import codec


def brute_force_value(instance: env.InstanceConfig) -> float:
    """Best per-step expected reward over every action profile."""
    K, M = instance.K, instance.M
    best = 0.0
    for prof in itertools.product(range(K), repeat=M):
        occ = env.occupancy(np.array(prof)[:, None], K)
        best = max(best, float(env.realized_value(instance, occ)[0]))
    return best


def transmit(instance: env.InstanceConfig, bits, comm: int, cstar: int, width: int,
             seed: int = 0) -> list[list[int]]:
    """Send ``bits`` block by block; return what each listener decoded."""
    M = instance.M
    variant = instance.feedback_mode == env.AGGREGATE
    size = cstar - 1 if variant else cstar
    lay = codec.block_layout(M, instance.K, comm, size, width)
    streams = env.RewardStreams(seed, M)
    heard = [[] for _ in range(M - 1)]
    for b in bits:
        arms = lay.arms(b)
        fb = env.feedback_block(instance, arms, streams.uniforms(lay.length))
        for p in range(2, M + 1):
            heard[p - 2].append(codec.read_bit(lay.own_slot(p, fb[p - 1]), variant=variant,
                                               mu_hat=instance.means[comm], group_size=size, M=M))
    return heard


def check_oracle() -> tuple[bool, str]:
    n = bad = 0
    for K in range(1, 5):
        for M in range(1, min(K, 3) + 1):
            for caps in itertools.product(range(1, 3), repeat=K):
                if sum(caps) < M:
                    continue
                means = np.linspace(0.9, 0.1, K) if K > 1 else [0.5]
                inst = env.make_instance(means, caps, M, horizon=1)
                n += 1
                bad += not math.isclose(env.optimal_allocation(inst).value,
                                        brute_force_value(inst), abs_tol=1e-12)
    return bad == 0, f"{n - bad}/{n} instances match exhaustive search"


def check_codec() -> tuple[bool, str]:
    n = bad = 0
    for K in range(3, 7):
        inst = env.make_instance(np.linspace(0.9, 0.2, K), [2] + [1] * (K - 1), 3, horizon=1,
                                 dist="point_mass")
        for r in range(K + 1):
            for sub in itertools.combinations(range(1, K + 1), r):
                frame = codec.encode_arms(sub, K)
                heard = transmit(inst, frame, comm=0, cstar=2, width=3)
                n += 1
                bad += any(codec.decode_arms(h) != frozenset(sub) for h in heard)
    return bad == 0, f"{n - bad}/{n} frames recovered by every listener"


def check_schedule() -> tuple[bool, str]:
    for M in range(1, 13):
        for psi in range(1, M + 1):
            covered = set()
            for pss in (1, 2):
                for g in schedule.grouped_rr_plan(psi, pss, range(1, M + 1)).full_groups():
                    covered |= set(g)
            if covered != set(range(1, M + 1)):
                return False, f"player left out of full groups at M={M}, psi={psi}"
    for K in range(1, 9):
        for M in range(1, K + 1):
            arms = schedule.rr_block(range(1, M + 1), range(K), K)
            if any(len(set(arms[:, s])) < M for s in range(K)):
                return False, f"simple round robin collides at M={M}, K={K}"
    return True, "full-group coverage and collision freedom for M <= 12, K <= 8"


def check_zero_test() -> tuple[bool, str]:
    for mu in np.linspace(0.05, 0.95, 20):
        for dp in np.geomspace(1e-6, 0.5, 20):
            n = S.zero_test_samples(mu, dp)
            if not ((1 - mu) ** n <= dp and (n == 1 or (1 - mu) ** (n - 1) > dp)):
                return False, f"not minimal at mu={mu}, delta'={dp}"
    return True, "400 grid points minimal"


def check_ledger() -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    for _ in range(10):
        K = int(rng.integers(2, 6))
        M = int(rng.integers(1, K + 1))
        means = rng.permutation(np.linspace(0.05, 0.95, K))
        caps = rng.integers(1, 3, K)
        caps[0] = M
        rounds = int(rng.integers(1, 20))
        inst = env.make_instance(means, caps, M, horizon=rounds * K)
        res = run_episode(RunConfig(inst, policy="simple_rr", monitor=False))
        opt = env.optimal_allocation(inst)
        want = rounds * (K * opt.value - M * inst.means.sum())
        if not math.isclose(res.cumulative_regret, want, rel_tol=1e-9, abs_tol=1e-9):
            return False, f"ledger {res.cumulative_regret} != closed form {want}"
    return True, "simple round-robin regret matches the closed form"


def check_end_to_end() -> tuple[bool, str]:
    inst = env.make_instance([0.9, 0.3, 0.2], [1, 1, 1], 2, horizon=800_000, dist="point_mass")
    res = run_episode(RunConfig(inst))
    ok = res.assignment_counts(inst.K) == res.optimal_counts and res.post_commit_regret == 0
    return ok, f"assignment {res.final_assignment}, oracle counts {res.optimal_counts}"


SUITES: dict[str, Callable[[], tuple[bool, str]]] = {
    "oracle": check_oracle,
    "codec": check_codec,
    "schedule": check_schedule,
    "zero-test": check_zero_test,
    "ledger": check_ledger,
    "end-to-end": check_end_to_end,
}


def run_checks(names=None) -> list[tuple[str, bool, str]]:
    out = []
    for name in names or SUITES:
        try:
            ok, detail = SUITES[name]()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, ok, detail))
    return out
