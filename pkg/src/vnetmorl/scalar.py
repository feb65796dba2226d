"""Scalarised MO-DQN / MO-DDQN baselines."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from .neural import NetworkError, NetworkSpec, Optimizer, OptimizerConfig, QNetwork, all_finite
from .replay import Batch, TransitionPool

QFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarAgentConfig:
    variant: str = "ddqn"
    gamma: float = 0.995
    batch_size: int = 64
    target_period: int = 200
    hidden: Tuple[int, ...] = (256, 256, 256, 256)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    replay_capacity: int = 100_000
    learning_starts: int = 64

    def __post_init__(self):
        if self.variant not in ("dqn", "ddqn"):
            raise ValueError(f"variant must be 'dqn' or 'ddqn', got {self.variant!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.batch_size < 1 or self.target_period < 1:
            raise ValueError("batch_size and target_period must be >= 1")


def scalarize(r) -> float:
    r = np.asarray(r, dtype=float)
    return r.sum(axis=-1)


def greedy(q_row: np.ndarray) -> int:
    """Argmax with ties resolved to the lowest index."""
    return int(np.argmax(q_row))


def select_action(q_net: QFunction, s: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice over the flat action set."""
    q = q_net(s)
    if rng.random() < epsilon:
        return int(rng.integers(q.shape[-1]))
    return greedy(q)


def td_target(batch: Batch, q_eval: QFunction, q_target: QFunction, gamma: float,
              variant: str = "ddqn") -> np.ndarray:
    """Bootstrapped scalar targets; terminal transitions keep the reward only."""
    r = scalarize(batch.r)
    q_next_target = q_target(batch.s_next)
    if variant == "dqn":
        bootstrap = q_next_target.max(axis=1)
    elif variant == "ddqn":
        chosen = np.argmax(q_eval(batch.s_next), axis=1)
        bootstrap = q_next_target[np.arange(len(r)), chosen]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return np.where(batch.terminal, r, r + gamma * bootstrap)


class ScalarAgent:
    """Weighted-sum DQN/DDQN over the flat 15-way joint action."""

    def __init__(self, obs_dim: int, n_actions: int, cfg: ScalarAgentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        spec = NetworkSpec(obs_dim, cfg.hidden, n_actions)
        self.q = QNetwork.create(spec, rng)
        self.q_target = self.q.clone()
        self.optimizer = Optimizer(cfg.optimizer)
        self.pool = TransitionPool(cfg.replay_capacity, obs_dim, n_actions=n_actions)
        self.updates = 0

    def act(self, s: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return greedy(self.q(s))

    def train_step(self, rng: np.random.Generator):
        """One gradient step on the TD mean-squared error; ``None`` until warm."""
        cfg = self.cfg
        if len(self.pool) < max(cfg.batch_size, cfg.learning_starts):
            return None
        batch = self.pool.sample_transitions(cfg.batch_size, rng)
        y = td_target(batch, self.q, self.q_target, cfg.gamma, cfg.variant)
        out, cache = self.q.forward(batch.s)
        rows = np.arange(len(y))
        err = out[rows, batch.a] - y
        loss = float(np.mean(err ** 2))
        grad = np.zeros_like(out)
        grad[rows, batch.a] = 2.0 * err / len(y)
        self.optimizer.apply_update(self.q.params, self.q.backward(cache, grad))
        if not all_finite(self.q.params):
            raise NetworkError("parameters became non-finite")
        self.updates += 1
        if self.updates % cfg.target_period == 0:
            self.q_target.load_from(self.q)
        return loss

    def networks(self) -> dict:
        return {"q": self.q}
