"""Transition ring buffer and preference sampler."""
from __future__ import annotations

from collections import deque
from typing import NamedTuple, Optional

import numpy as np


class Transition(NamedTuple):
    s: np.ndarray
    a: int
    r: np.ndarray
    s_next: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.a)


class TransitionPool:
    """Fixed-capacity FIFO store of transitions held in growable arrays."""

    def __init__(self, capacity: int, obs_dim: int, reward_dim: int = 2, n_actions: int = 15):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.n_actions = n_actions
        n = min(capacity, 1024)
        self.s = np.zeros((n, obs_dim))
        self.s_next = np.zeros((n, obs_dim))
        self.a = np.zeros(n, dtype=np.int64)
        self.r = np.zeros((n, reward_dim))
        self.terminal = np.zeros(n, dtype=bool)
        self._next = 0
        self._size = 0

    def _grow(self) -> None:
        """Double storage (up to capacity); only called while the pool is not yet full."""
        n = min(self.capacity, 2 * len(self.a))
        for name in ("s", "s_next", "a", "r", "terminal"):
            old = getattr(self, name)
            new = np.zeros((n,) + old.shape[1:], dtype=old.dtype)
            new[:len(old)] = old
            setattr(self, name, new)

    def __len__(self):
        return self._size

    def push(self, t: Transition) -> None:
        if not 0 <= t.a < self.n_actions:
            raise ValueError(f"action {t.a} out of range")
        r = np.asarray(t.r, dtype=float)
        if not np.isfinite(r).all():
            raise ValueError("rewards must be finite")
        i = self._next
        if i >= len(self.a):
            self._grow()
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = r
        self.s_next[i] = t.s_next
        self.terminal[i] = t.terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _ordered_index(self, k):
        """Storage slot of the k-th oldest stored transition (vectorised over ``k``)."""
        start = self._next if self._size == self.capacity else 0
        return (start + k) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        if not 0 <= k < self._size:
            raise IndexError(k)
        i = self._ordered_index(k)
        return Transition(self.s[i].copy(), int(self.a[i]), self.r[i].copy(),
                          self.s_next[i].copy(), bool(self.terminal[i]))

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty pool")
        return rng.integers(0, self._size, size=n)

    def sample_transitions(self, n: int, rng: np.random.Generator) -> Batch:
        """``n`` uniform draws with replacement."""
        if n == 0:
            idx = np.zeros(0, dtype=np.int64)
        else:
            idx = self._ordered_index(self.sample_indices(n, rng))
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx])


class PreferencePool:
    """Uniform sampler over the probability simplex.

    For two objectives this is ``[u, 1 - u]`` with ``u ~ U(0, 1)``; for more it
    is a flat Dirichlet draw. ``history`` optionally keeps the most recently
    emitted preferences.
    """

    def __init__(self, n_objectives: int = 2, history: int = 0):
        if n_objectives < 2:
            raise ValueError("need at least two objectives")
        self.n_objectives = n_objectives
        self.history: Optional[deque] = deque(maxlen=history) if history else None

    def sample_preferences(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.n_objectives == 2:
            u = rng.random(n)
            w = np.column_stack([u, 1.0 - u])
        else:
            w = rng.dirichlet(np.ones(self.n_objectives), size=n)
            w[:, -1] = 1.0 - w[:, :-1].sum(axis=1)
        if self.history is not None:
            self.history.extend(w.copy())
        return w
