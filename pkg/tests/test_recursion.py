import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmab_sax import env
from mmab_sax.protocol.recursion import Outcome, RecursionState, apply_outcome, recursion_step


def counts_of(assign, K):
    c = [0] * K
    for a in assign.values():
        c[a] += 1
    return tuple(c)


def test_absorb_commits_highest_players_in_ascending_arm_order():
    st_ = RecursionState(M=4, K=5)
    out = recursion_step(st_, {0, 1}, {2, 3, 4}, {0: 1, 1: 2})
    assert out == Outcome(True, False, 1)
    assert st_.committed == {4: 0, 3: 1, 2: 1}
    assert st_.fixed == {0, 1} and st_.active_arms == {2, 3, 4}
    assert st_.pool == (2, 3, 4) and st_.active_players == (1,)


def test_shrink_when_top_cluster_holds_everyone():
    st_ = RecursionState(M=3, K=4)
    out = recursion_step(st_, {0, 1}, {2, 3}, {0: 2, 1: 2})
    assert out == Outcome(False, False, 3)
    assert st_.active_arms == {0, 1} and not st_.committed


def test_exact_fill_finishes():
    st_ = RecursionState(M=3, K=4)
    out = recursion_step(st_, {0, 1}, {2, 3}, {0: 2, 1: 1})
    assert out.done and st_.assignment == {1: 0, 2: 0, 3: 1}


def test_single_arm_left_takes_everyone():
    st_ = RecursionState(M=2, K=3)
    out = recursion_step(st_, {0, 1}, {2}, {0: 5, 1: 5})
    assert not out.absorbed and not out.done
    out = recursion_step(st_, {0}, {1}, {0: 5})
    # capacity saturates at m = 2, which exactly fills M
    assert out.done and st_.assignment == {1: 0, 2: 0}


def test_committed_view_tracks_coordinator():
    full = RecursionState(M=4, K=6)
    view = RecursionState(M=4, K=6)
    steps = [({0}, {1, 2, 3, 4, 5}, {0: 1}), ({1, 2}, {3, 4, 5}, {1: 3, 2: 3}),
             ({1}, {2}, {1: 3})]
    for top, bot, caps in steps:
        out = recursion_step(full, top, bot, caps)
        apply_outcome(view, top, bot, out)
        assert view.done == full.done
        if not full.done:
            assert view.m == full.m
            assert view.pool == full.pool and view.active_arms == full.active_arms
    assert full.done


def drive(means, caps, M, rng):
    """Run the recursion with exact clusters: any top-k split of the sorted active arms."""
    K = len(means)
    st_ = RecursionState(M=M, K=K)
    for _ in range(4 * K):
        if st_.done:
            break
        act = sorted(st_.active_arms, key=lambda a: -means[a])
        k = int(rng.integers(1, len(act)))
        top, bot = set(act[:k]), set(act[k:])
        recursion_step(st_, top, bot, {a: caps[a] for a in top})
    return st_


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 7).flatmap(lambda K: st.tuples(
    st.just(K), st.integers(1, K), st.lists(st.integers(1, 4), min_size=K, max_size=K),
    st.permutations(list(range(K))), st.integers(0, 2**32 - 1))))
def test_any_split_sequence_reaches_the_oracle(args):
    K, M, caps, perm, seed = args
    means = [(p + 1) / (K + 1) for p in perm]
    st_ = drive(means, caps, M, np.random.default_rng(seed))
    assert st_.done
    assert sorted(st_.assignment) == list(range(1, M + 1))
    opt = env.optimal_allocation(env.make_instance(means, caps, M, horizon=1))
    assert counts_of(st_.assignment, K) == opt.counts
