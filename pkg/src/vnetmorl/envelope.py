"""Envelope MO-DDQN: preference-conditioned vector Q-learning with homotopy loss."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .neural import NetworkError, NetworkSpec, Optimizer, OptimizerConfig, QNetwork, all_finite
from .replay import Batch, PreferencePool, TransitionPool
from .schedules import LambdaSchedule

# (states (N, d), preferences (G, H)) -> Q tensor (N, G, A, H)
VectorQFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EnvelopeAgentConfig:
    gamma: float = 0.995
    batch_size: int = 64
    n_preferences: int = 4
    target_period: int = 200
    double: bool = True
    lambda_path: str = "linear"
    total_steps: int = 10_000
    hidden: Tuple[int, ...] = (256, 256, 256, 256)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    replay_capacity: int = 100_000
    learning_starts: int = 64
    n_objectives: int = 2

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if min(self.batch_size, self.n_preferences, self.target_period, self.total_steps) < 1:
            raise ValueError("batch_size, n_preferences, target_period and total_steps must be >= 1")


def check_preference(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if w.ndim != 1 or (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"preference must be a nonnegative vector summing to 1, got {omega!r}")
    return w


def network_q(net: QNetwork, n_actions: int, n_objectives: int = 2) -> VectorQFunction:
    """Wrap a network on ``s ⊕ ω`` inputs as a batched vector-Q function."""

    def q(states: np.ndarray, prefs: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        prefs = np.atleast_2d(prefs)
        n, g = len(states), len(prefs)
        x = np.concatenate([np.repeat(states, g, axis=0), np.tile(prefs, (n, 1))], axis=1)
        return net(x).reshape(n, g, n_actions, n_objectives)

    return q


def select_action(q_values: np.ndarray, omega, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over ``ω^T Q`` given the ``(A, H)`` block for the current state."""
    w = check_preference(omega)
    q_values = np.asarray(q_values, dtype=float)
    if rng.random() < epsilon:
        return int(rng.integers(q_values.shape[0]))
    return int(np.argmax(q_values @ w))


def envelope_target(batch: Batch, W: np.ndarray, q_target: VectorQFunction, gamma: float,
                    q_eval: Optional[VectorQFunction] = None) -> np.ndarray:
    """Vector targets of shape ``(N, G, H)``.

    For each transition ``z`` and preference ``ω_g`` the pair ``(a', ω')``
    over ``A x W`` maximising ``ω_g^T Q(s'_z, a', ω')`` is chosen (with
    ``q_eval`` when given, else ``q_target``), and the full vector of
    ``q_target`` at that pair is bootstrapped. Ties fall to the lowest flat
    index in ``(ω', a')`` order.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if len(W) == 0:
        raise ValueError("preference set must be nonempty")
    r = np.asarray(batch.r, dtype=float)
    n, g = len(r), len(W)
    q_next = q_target(batch.s_next, W)  # (N, G', A, H)
    q_sel = q_next if q_eval is None else q_eval(batch.s_next, W)
    n_act = q_next.shape[2]
    proj = np.einsum("gh,nkah->ngka", W, q_sel).reshape(n, g, g * n_act)
    flat = np.argmax(proj, axis=2)
    k_star, a_star = np.divmod(flat, n_act)
    chosen = q_next[np.arange(n)[:, None], k_star, a_star]  # (N, G, H)
    y = r[:, None, :] + gamma * chosen
    return np.where(np.asarray(batch.terminal, dtype=bool)[:, None, None], r[:, None, :], y)


def homotopy_loss(y_hat: np.ndarray, q: np.ndarray, omegas: np.ndarray, lam: float) -> Tuple[float, np.ndarray]:
    """``(1 - λ)·mean‖ŷ - Q‖² + λ·mean|ω^T ŷ - ω^T Q|`` and its gradient w.r.t. ``Q``.

    All arrays are ``(P, H)`` with one row per (transition, preference) pair.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    diff = q - y_hat
    p = len(diff)
    proj = np.einsum("ph,ph->p", omegas, diff)
    loss_a = float(np.mean(np.sum(diff ** 2, axis=1)))
    loss_b = float(np.mean(np.abs(proj)))
    grad = (1.0 - lam) * 2.0 * diff / p + lam * np.sign(proj)[:, None] * omegas / p
    return (1.0 - lam) * loss_a + lam * loss_b, grad


def loss(y_hat: np.ndarray, q: np.ndarray, omegas: np.ndarray, lam: float) -> float:
    return homotopy_loss(y_hat, q, omegas, lam)[0]


class EnvelopeAgent:
    """Vector Q-network on ``s ⊕ ω`` with an ``|A| x H`` output block."""

    def __init__(self, obs_dim: int, n_actions: int, cfg: EnvelopeAgentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        h = cfg.n_objectives
        spec = NetworkSpec(obs_dim + h, cfg.hidden, n_actions * h)
        self.q = QNetwork.create(spec, rng)
        self.q_target = self.q.clone()
        self.optimizer = Optimizer(cfg.optimizer)
        self.pool = TransitionPool(cfg.replay_capacity, obs_dim, reward_dim=h, n_actions=n_actions)
        self.preferences = PreferencePool(h)
        self.lambdas = LambdaSchedule(cfg.total_steps, cfg.lambda_path)
        self.updates = 0
        self.last_lambda: Optional[float] = None

    def q_values(self, s: np.ndarray, omega) -> np.ndarray:
        return network_q(self.q, self.n_actions, self.cfg.n_objectives)(s, np.asarray(omega, dtype=float))[0, 0]

    def act(self, s: np.ndarray, omega, epsilon: float, rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return select_action(self.q_values(s, omega), omega, 0.0, rng)

    def train_step(self, rng: np.random.Generator, batch: Optional[Batch] = None,
                   W: Optional[np.ndarray] = None):
        """One homotopy update on hindsight-resampled preferences; ``None`` until warm."""
        cfg = self.cfg
        if batch is None:
            if len(self.pool) < max(cfg.batch_size, cfg.learning_starts):
                return None
            batch = self.pool.sample_transitions(cfg.batch_size, rng)
        if W is None:
            W = self.preferences.sample_preferences(cfg.n_preferences, rng)
        h = cfg.n_objectives
        q_t = network_q(self.q_target, self.n_actions, h)
        q_e = network_q(self.q, self.n_actions, h) if cfg.double else None
        y = envelope_target(batch, W, q_t, cfg.gamma, q_e)
        n, g = y.shape[:2]
        x = np.concatenate([np.repeat(batch.s, g, axis=0), np.tile(W, (n, 1))], axis=1)
        out, cache = self.q.forward(x)
        block = out.reshape(n * g, self.n_actions, h)
        rows = np.arange(n * g)
        acts = np.repeat(batch.a, g)
        lam = self.lambdas(self.updates)
        value, grad_q = homotopy_loss(y.reshape(n * g, h), block[rows, acts], np.tile(W, (n, 1)), lam)
        grad = np.zeros_like(block)
        grad[rows, acts] = grad_q
        self.optimizer.apply_update(self.q.params, self.q.backward(cache, grad.reshape(out.shape)))
        if not all_finite(self.q.params):
            raise NetworkError("parameters became non-finite")
        self.updates += 1
        self.last_lambda = lam
        if self.updates % cfg.target_period == 0:
            self.q_target.load_from(self.q)
        return value

    def networks(self) -> dict:
        return {"q": self.q}


def execute_policy(agent: EnvelopeAgent, env, omega, episodes: int, seeds: Optional[List] = None):
    """Greedy rollouts conditioned on ``omega``.

    Returns ``(records, mean_return)`` where ``mean_return`` averages the
    per-episode discounted return vectors.
    """
    w = check_preference(omega)
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    records = []
    for e in range(episodes):
        obs = env.reset(None if seeds is None else seeds[e])
        done = False
        while not done:
            actions = [int(np.argmax(agent.q_values(o, w) @ w)) for o in obs]
            obs, _, done, _ = env.step(actions)
        records.append(env.episode_metrics(e, float(w[0])))
    mean = np.array([[r.R_tran, r.R_tele] for r in records]).mean(axis=0)
    return records, mean
