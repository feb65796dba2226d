"""Exploration and homotopy schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class EpsilonSchedule:
    """Per-episode exponential decay reaching ``epsilon_mid`` halfway through training."""

    episodes: int
    epsilon_start: float = 1.0
    epsilon_mid: float = 0.1
    epsilon_min: float = 0.05
    mid_fraction: float = 0.5

    def __post_init__(self):
        for name in ("epsilon_start", "epsilon_mid", "epsilon_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def factor(self) -> float:
        horizon = max(1.0, self.mid_fraction * self.episodes)
        if self.epsilon_start <= 0:
            return 0.0
        return (self.epsilon_mid / self.epsilon_start) ** (1.0 / horizon)

    def __call__(self, episode: int) -> float:
        return max(self.epsilon_min, self.epsilon_start * self.factor ** episode)


@dataclass(frozen=True)
class LambdaSchedule:
    """Homotopy weight path from 0 at the first update to 1 at the last."""

    total_steps: int
    kind: str = "linear"

    def __post_init__(self):
        if self.kind not in ("linear", "cosine"):
            raise ValueError(f"unknown lambda path {self.kind!r}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")

    def __call__(self, step: int) -> float:
        if self.total_steps == 1:
            return 1.0
        frac = min(max(step / (self.total_steps - 1), 0.0), 1.0)
        if self.kind == "cosine":
            return 0.5 * (1.0 - math.cos(math.pi * frac))
        return frac
