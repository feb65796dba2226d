"""Two-state, three-action, two-objective MOMDP with an enumerable CCS.

From ``s0``: action 0 yields ``(0, 0)`` and moves to ``s1``; actions 1 and 2
pay ``(0.6, 0)`` and ``(0, 0.6)`` and end the episode. From ``s1`` every
action ends the episode, paying ``(1, 0)``, ``(0, 1)`` or ``(0.6, 0.6)``.
The middle vertex ``(0.54, 0.54)`` under ``gamma = 0.9`` sits strictly above
the chord joining ``(0.9, 0)`` and ``(0, 0.9)``, so it belongs to the CCS.
"""
from __future__ import annotations

import itertools
from typing import List, Optional, Sequence

import numpy as np

from .env import EnvError, MetricsRecord
from .envelope import EnvelopeAgent, EnvelopeAgentConfig, execute_policy
from .neural import OptimizerConfig
from .replay import Transition

N_STATES = 2
N_ACTIONS = 3
REWARDS = {
    (0, 0): (0.0, 0.0),
    (0, 1): (0.6, 0.0),
    (0, 2): (0.0, 0.6),
    (1, 0): (1.0, 0.0),
    (1, 1): (0.0, 1.0),
    (1, 2): (0.6, 0.6),
}


def one_hot(state: int) -> np.ndarray:
    v = np.zeros(N_STATES)
    v[state] = 1.0
    return v


class TwoStateMOMDP:
    """Single-agent environment exposing the same step protocol as :class:`VehicularEnv`."""

    obs_dim = N_STATES
    n_actions = N_ACTIONS
    T_hl = 2

    def __init__(self, gamma: float = 0.9):
        self.gamma = gamma
        self.state = 0
        self.t = 0
        self.done = True

    def reset(self, seed=None) -> List[np.ndarray]:
        self.state = 0
        self.t = 0
        self.done = False
        self.returns = np.zeros((1, 2))
        self.discount = 1.0
        return [one_hot(0)]

    def step(self, actions: Sequence[int]):
        if self.done:
            raise EnvError("episode is over; call reset()")
        a = int(actions[0])
        if not 0 <= a < N_ACTIONS:
            raise EnvError(f"action {a} out of range")
        r = np.array([REWARDS[(self.state, a)]])
        self.returns += self.discount * r
        self.discount *= self.gamma
        self.t += 1
        if self.state == 0 and a == 0:
            self.state = 1
        else:
            self.done = True
        return [one_hot(self.state)], r, self.done, None

    def episode_metrics(self, episode: int, omega_tran: Optional[float] = None) -> MetricsRecord:
        R = self.returns[0]
        return MetricsRecord(episode, float(R[0]), float(R[1]), 0.0, 0.0, omega_tran)


def policy_returns(gamma: float = 0.9) -> List[tuple]:
    """Discounted return of every deterministic policy, by exhaustive enumeration."""
    out = []
    for a0, a1 in itertools.product(range(N_ACTIONS), repeat=2):
        r0 = np.array(REWARDS[(0, a0)])
        total = r0 + (gamma * np.array(REWARDS[(1, a1)]) if a0 == 0 else 0.0)
        out.append(tuple(float(x) for x in total))
    return sorted(set(out))


def optimal_return(omega, gamma: float = 0.9) -> np.ndarray:
    """Return vector of the best deterministic policy for ``omega``."""
    pts = np.array(policy_returns(gamma))
    return pts[int(np.argmax(pts @ np.asarray(omega, dtype=float)))]


def train_envelope(seed: int, steps: int = 2000, gamma: float = 0.9) -> EnvelopeAgent:
    """Envelope training on :class:`TwoStateMOMDP` with linear ε decay to 0.1 at mid-run."""
    rng = np.random.default_rng(seed)
    cfg = EnvelopeAgentConfig(gamma=gamma, batch_size=32, target_period=100, total_steps=steps,
                              hidden=(32, 32), optimizer=OptimizerConfig(learning_rate=1e-3),
                              learning_starts=32)
    env = TwoStateMOMDP(gamma)
    agent = EnvelopeAgent(N_STATES, N_ACTIONS, cfg, rng)
    t = 0
    while t < steps:
        obs = env.reset()
        omega = agent.preferences.sample_preferences(1, rng)[0]
        eps = max(0.1, 1.0 - t / (0.5 * steps))
        done = False
        while not done and t < steps:
            a = agent.act(obs[0], omega, eps, rng)
            nxt, r, done, _ = env.step([a])
            agent.pool.push(Transition(obs[0], a, r[0], nxt[0], done))
            agent.train_step(rng)
            obs = nxt
            t += 1
    return agent


def recovery_errors(agent: EnvelopeAgent, omegas: Sequence[float], gamma: float = 0.9) -> List[float]:
    """∞-norm gap between the greedy return at each ``[w, 1 - w]`` and the optimal CCS vertex."""
    env = TwoStateMOMDP(gamma)
    out = []
    for w in omegas:
        omega = np.array([w, 1.0 - w])
        _, mean = execute_policy(agent, env, omega, 1)
        out.append(float(np.max(np.abs(mean - optimal_return(omega, gamma)))))
    return out
