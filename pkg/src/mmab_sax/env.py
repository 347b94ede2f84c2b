"""Bandit instances with shareable, capacity-limited arms.

Rewards are drawn from a counter-based generator (Philox) with one substream
per player, and every player consumes exactly one uniform per time step no
matter which arm it pulls.  A run is therefore reproducible bit-for-bit
regardless of how the simulation chunks time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as _sps

HARD = "hard_sax"
AGGREGATE = "aggregate_soft"
FEEDBACK_MODES = (HARD, AGGREGATE)
DISTRIBUTIONS = ("bernoulli", "point_mass", "beta")

# concentration of the beta family; mean is preserved, variance shrinks as this grows
BETA_CONCENTRATION = 2.0


class ConfigError(ValueError):
    """Invalid or infeasible instance configuration."""


@dataclass(frozen=True)
class ArmSpec:
    mean: float
    capacity: int
    dist: str = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.mean <= 1.0:
            raise ConfigError(f"arm mean {self.mean} outside [0, 1]")
        if int(self.capacity) != self.capacity or self.capacity < 1:
            raise ConfigError(f"arm capacity must be a positive integer, got {self.capacity}")
        if self.dist not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.dist!r}")


@dataclass(frozen=True)
class InstanceConfig:
    arms: tuple[ArmSpec, ...]
    players: int
    horizon: int
    delta: float = 0.05
    feedback_mode: str = HARD
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        K, M = len(self.arms), self.players
        if M < 1:
            raise ConfigError("need at least one player")
        if K < M:
            raise ConfigError(f"need K >= M, got K={K}, M={M}")
        if not 0.0 < self.delta < 0.5:
            raise ConfigError(f"delta must lie in (0, 1/2), got {self.delta}")
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")
        if self.feedback_mode not in FEEDBACK_MODES:
            raise ConfigError(f"unknown feedback mode {self.feedback_mode!r}")
        means = [a.mean for a in self.arms]
        if len(set(means)) != len(means):
            raise ConfigError("arm means must be pairwise distinct")
        if sum(a.capacity for a in self.arms) < M:
            raise ConfigError("infeasible instance: total capacity below player count")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def K(self) -> int:
        return len(self.arms)

    @property
    def M(self) -> int:
        return self.players

    @property
    def means(self) -> np.ndarray:
        return np.array([a.mean for a in self.arms], dtype=float)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([a.capacity for a in self.arms], dtype=np.int64)

    def with_overrides(self, **kw) -> "InstanceConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "arms": [{"mean": a.mean, "capacity": a.capacity, "dist": a.dist} for a in self.arms],
            "players": self.players,
            "horizon": self.horizon,
            "delta": self.delta,
            "feedback_mode": self.feedback_mode,
            "seed": self.seed,
        }


def make_instance(means: Sequence[float], capacities: Sequence[int], players: int,
                  horizon: int = 10_000, *, dist: str = "bernoulli", **kw) -> InstanceConfig:
    arms = tuple(ArmSpec(float(m), int(c), dist) for m, c in zip(means, capacities, strict=True))
    return InstanceConfig(arms=arms, players=players, horizon=horizon, **kw)


def instance_from_dict(doc: dict) -> InstanceConfig:
    try:
        arms = tuple(
            ArmSpec(float(a["mean"]), int(a["capacity"]), a.get("dist", "bernoulli"))
            for a in doc["arms"]
        )
        return InstanceConfig(
            arms=arms,
            players=int(doc["players"]),
            horizon=int(float(doc.get("horizon", 10_000))),
            delta=float(doc.get("delta", 0.05)),
            feedback_mode=doc.get("feedback_mode", HARD),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed instance document: {exc}") from exc


def load_instance(path: str | Path) -> InstanceConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return instance_from_dict(doc)


# ---------------------------------------------------------------------------
# reward sampling


class RewardStreams:
    """Per-player Philox substreams keyed by (seed, player)."""

    def __init__(self, seed: int, players: int):
        self._gens = [
            np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), p]))
            for p in range(players)
        ]
        self._back = np.zeros((players, 0))

    def uniforms(self, n: int) -> np.ndarray:
        """Return an (M, n) block of uniforms, one per player per step."""
        take = min(n, self._back.shape[1])
        head, self._back = self._back[:, :take], self._back[:, take:]
        if take == n:
            return head
        fresh = np.stack([g.random(n - take) for g in self._gens])
        return np.concatenate([head, fresh], axis=1) if take else fresh

    def unread(self, u: np.ndarray) -> None:
        """Hand back the unused tail of a block; it is served again next."""
        self._back = np.concatenate([u, self._back], axis=1)


def _draws(instance: InstanceConfig, arms: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms to reward draws of the pulled arms (0-based arm indices)."""
    out = np.empty(arms.shape, dtype=float)
    for a, spec in enumerate(instance.arms):
        mask = arms == a
        if not mask.any():
            continue
        if spec.dist == "point_mass" or spec.mean in (0.0, 1.0):
            out[mask] = spec.mean
        elif spec.dist == "bernoulli":
            out[mask] = (u[mask] < spec.mean).astype(float)
        else:
            k = BETA_CONCENTRATION
            out[mask] = _sps.beta.ppf(u[mask], k * spec.mean, k * (1.0 - spec.mean))
    return out


def occupancy(arms: np.ndarray, K: int) -> np.ndarray:
    """Per-step count of players on every arm; ``arms`` is (M, n), result (n, K)."""
    M, n = arms.shape
    flat = (np.arange(n) * K + arms).ravel()
    return np.bincount(flat, minlength=n * K).reshape(n, K)


def feedback_block(instance: InstanceConfig, arms: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorised feedback for an (M, n) block of 0-based arm choices."""
    arms = np.asarray(arms, dtype=np.int64)
    K = instance.K
    if arms.size and (arms.min() < 0 or arms.max() >= K):
        raise ConfigError("arm index out of range")
    draws = _draws(instance, arms, u)
    occ = occupancy(arms, K)
    n = arms.shape[1]
    step = np.broadcast_to(np.arange(n), arms.shape)
    occ_here = occ[step, arms]
    cap_here = instance.capacities[arms]
    if instance.feedback_mode == HARD:
        return np.where(occ_here <= cap_here, draws, 0.0)
    # aggregate: the lowest-index players up to capacity are served; everyone
    # on the arm observes the summed reward of the served players
    M = arms.shape[0]
    rank = np.zeros_like(arms)
    seen = np.zeros((n, K), dtype=np.int64)
    for p in range(M):
        rank[p] = seen[np.arange(n), arms[p]]
        seen[np.arange(n), arms[p]] += 1
    served = rank < cap_here
    total = np.zeros((n, K))
    np.add.at(total, (step.ravel(), arms.ravel()), np.where(served, draws, 0.0).ravel())
    return total[step, arms]


def sample_feedback(instance: InstanceConfig, profile: Sequence[int],
                    rng: np.random.Generator) -> np.ndarray:
    """One-step feedback for an action profile of 1-based arm indices."""
    profile = np.asarray(profile, dtype=np.int64)
    if profile.shape != (instance.M,):
        raise ConfigError(f"profile must have exactly {instance.M} entries")
    if profile.min() < 1 or profile.max() > instance.K:
        raise ConfigError("arm index out of range")
    u = rng.random((instance.M, 1))
    return feedback_block(instance, profile[:, None] - 1, u)[:, 0]


# ---------------------------------------------------------------------------
# optimal allocation and pseudo-regret


@dataclass(frozen=True)
class OptimalAllocation:
    V: int
    counts: tuple[int, ...]
    value: float
    order: tuple[int, ...] = field(default=())


def optimal_allocation(instance: InstanceConfig) -> OptimalAllocation:
    """Greedy fill of arms by decreasing mean, each up to its capacity."""
    means, caps, M = instance.means, instance.capacities, instance.M
    if caps.sum() < M:
        raise ConfigError("infeasible instance: total capacity below player count")
    order = tuple(int(i) for i in np.argsort(-means, kind="stable"))
    counts = [0] * instance.K
    left, V = M, 0
    for a in order:
        if left == 0:
            break
        take = min(int(caps[a]), left)
        counts[a] = take
        left -= take
        V += 1
    value = float(sum(c * m for c, m in zip(counts, means)))
    return OptimalAllocation(V=V, counts=tuple(counts), value=value, order=order)


def realized_value(instance: InstanceConfig, occ: np.ndarray) -> np.ndarray:
    """Expected collected reward per step given (n, K) occupancies."""
    caps, means = instance.capacities, instance.means
    if instance.feedback_mode == HARD:
        return (occ * (occ <= caps) * means).sum(axis=1)
    return (np.minimum(occ, caps) * means).sum(axis=1)


def step_regret(instance: InstanceConfig, profile: Sequence[int],
                opt: OptimalAllocation | None = None) -> float:
    """Pseudo-regret of one action profile (1-based arm indices)."""
    opt = opt or optimal_allocation(instance)
    arms = np.asarray(profile, dtype=np.int64)[:, None] - 1
    occ = occupancy(arms, instance.K)
    return float(max(opt.value - realized_value(instance, occ)[0], 0.0))
