"""RF / THz downlink link model.

Pure functions for RF and THz SINR, the finite-blocklength achievable rate,
and the handover-aware weighted data rate. Scalar functions take plain floats
and small dataclasses; the ``*_matrix`` variants evaluate every (AV, BS) pair
at once for the environment's inner loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

SPEED_OF_LIGHT = 299_792_458.0

# Handover penalty applied to the weighted rate
MU_KEEP = 0.0
MU_SWITCH_RBS = 0.1
MU_SWITCH_TBS = 0.5

RBS = "RBS"
TBS = "TBS"


class ChannelDomainError(ValueError):
    """Raised when a channel function receives inputs outside its domain."""


@dataclass(frozen=True)
class RadioConfig:
    f_R: float = 3.5e9
    f_T: float = 1.0e12
    P_R_tx: float = 1.0
    P_T_tx: float = 1.0
    G_R_tx: float = 316.2
    G_R_rx: float = 316.2
    G_T_max_tx: float = 316.2
    G_T_max_rx: float = 316.2
    G_T_min: float = 0.0
    theta_tx: float = math.radians(10.0)
    theta_rx: float = math.radians(10.0)
    alpha: float = 4.0
    K_a: float = 0.05
    W_R: float = 4.0e7
    W_T: float = 5.0e8
    sigma2: float = 1e-13
    N_0: float = 1e-12
    h_R: float = 10.0
    h_T: float = 5.0
    L_B_R: float = 16.0
    L_B_T: float = 25.0
    eps_c: float = 1e-5
    Q_R: int = 5
    Q_T: int = 10

    def __post_init__(self):
        positive = ("f_R", "f_T", "P_R_tx", "P_T_tx", "G_R_tx", "G_R_rx",
                    "G_T_max_tx", "G_T_max_rx", "W_R", "W_T", "sigma2", "N_0")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ChannelDomainError(f"{name} must be finite and > 0, got {value}")
        if not 0.0 < self.eps_c < 0.5:
            raise ChannelDomainError(f"eps_c must lie in (0, 0.5), got {self.eps_c}")
        for name in ("theta_tx", "theta_rx"):
            value = getattr(self, name)
            if not 0.0 <= value <= 2 * math.pi:
                raise ChannelDomainError(f"{name} must lie in [0, 2*pi], got {value}")
        if self.L_B_R < 1 or self.L_B_T < 1:
            raise ChannelDomainError("blocklengths must be >= 1")
        if self.alpha < 2:
            raise ChannelDomainError(f"alpha must be >= 2, got {self.alpha}")
        if self.K_a < 0 or self.G_T_min < 0:
            raise ChannelDomainError("K_a and G_T_min must be nonnegative")
        if self.Q_R < 1 or self.Q_T < 1:
            raise ChannelDomainError("quotas must be >= 1")

    @property
    def gamma_R(self) -> float:
        """RF gain-times-Friis factor G_tx G_rx (c / 4 pi f_R)^2."""
        return self.G_R_tx * self.G_R_rx * (SPEED_OF_LIGHT / (4 * math.pi * self.f_R)) ** 2

    @property
    def friis_T(self) -> float:
        return (SPEED_OF_LIGHT / (4 * math.pi * self.f_T)) ** 2

    @property
    def gamma_T(self) -> float:
        return self.G_T_max_tx * self.G_T_max_rx * self.friis_T

    @property
    def F_tx(self) -> float:
        return self.theta_tx / (2 * math.pi)

    @property
    def F_rx(self) -> float:
        return self.theta_rx / (2 * math.pi)

    @property
    def mean_alignment_gain(self) -> float:
        """Expected interferer gain product with zero side lobes."""
        return self.G_T_max_tx * self.G_T_max_rx * self.F_tx * self.F_rx


@dataclass(frozen=True)
class LinkGeometry:
    d: float
    h: float

    @property
    def r(self) -> float:
        return math.hypot(self.d, self.h)


@dataclass(frozen=True)
class ChannelSample:
    sinr: float
    rate: float
    wr: float
    mu: float


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ChannelDomainError(f"non-finite input {v}")


def _distance(geom: LinkGeometry) -> float:
    _check_finite(geom.d, geom.h)
    if geom.d < 0 or geom.h < 0:
        raise ChannelDomainError("distances and heights must be nonnegative")
    r = geom.r
    if r <= 0:
        raise ChannelDomainError("link distance must be > 0")
    return r


def rf_sinr(geom_serving: LinkGeometry, fading_serving: float,
            interferers: Iterable[Tuple[LinkGeometry, float]], cfg: RadioConfig) -> float:
    """Downlink SINR from an RBS with exponential fading and co-channel RBS interference."""
    r = _distance(geom_serving)
    _check_finite(fading_serving)
    if fading_serving < 0:
        raise ChannelDomainError("fading power must be nonnegative")
    gamma = cfg.gamma_R
    interference = 0.0
    for geom_k, fading_k in interferers:
        r_k = _distance(geom_k)
        _check_finite(fading_k)
        interference += cfg.P_R_tx * gamma * r_k ** (-cfg.alpha) * fading_k
    signal = cfg.P_R_tx * gamma * fading_serving
    return signal / (r ** cfg.alpha * (cfg.sigma2 + interference))


def thz_noise(r_serving: float, interferer_terms: Sequence[Tuple[float, float]],
              cfg: RadioConfig) -> float:
    """Thermal plus molecular-absorption noise for a THz link.

    ``interferer_terms`` holds ``(r_k, gain_product)`` pairs; the gain product
    replaces ``G_max^2 F_tx F_rx`` so sampled beam alignments can be used.
    """
    noise = cfg.N_0 + cfg.P_T_tx * cfg.gamma_T * r_serving ** -2 * (-math.expm1(-cfg.K_a * r_serving))
    for r_k, gain in interferer_terms:
        noise += gain * cfg.friis_T * cfg.P_T_tx * r_k ** -2 * (-math.expm1(-cfg.K_a * r_k))
    return noise


def thz_sinr(geom_serving: LinkGeometry, interferers: Iterable[Tuple[LinkGeometry, float]],
             cfg: RadioConfig) -> float:
    """THz SINR with beam-aligned serving link and randomly aligned interferers."""
    r = _distance(geom_serving)
    terms = []
    for geom_k, gain in interferers:
        r_k = _distance(geom_k)
        _check_finite(gain)
        if gain < 0:
            raise ChannelDomainError("alignment gain product must be nonnegative")
        terms.append((r_k, gain))
    interference = sum(gain * cfg.friis_T * cfg.P_T_tx * math.exp(-cfg.K_a * r_k) * r_k ** -2
                       for r_k, gain in terms)
    signal = cfg.gamma_T * cfg.P_T_tx * math.exp(-cfg.K_a * r) * r ** -2
    return signal / (thz_noise(r, terms, cfg) + interference)


def sample_beam_alignment(rng: np.random.Generator, cfg: RadioConfig, size=None):
    """Draw the gain product of an interfering TBS beam pair.

    Main lobes are hit independently with probability ``theta / 2 pi`` at the
    transmitter and receiver; side lobes contribute ``G_T_min``.
    """
    tx_main = rng.random(size) < cfg.F_tx
    rx_main = rng.random(size) < cfg.F_rx
    g_tx = np.where(tx_main, cfg.G_T_max_tx, cfg.G_T_min)
    g_rx = np.where(rx_main, cfg.G_T_max_rx, cfg.G_T_min)
    product = g_tx * g_rx
    if size is None:
        return float(product)
    return product


def inverse_q(p: float) -> float:
    """Inverse of the standard Gaussian tail function Q."""
    if not (0.0 < p < 1.0):
        raise ChannelDomainError(f"inverse_q needs 0 < p < 1, got {p}")
    return float(-ndtri(p))


def achievable_rate(sinr: float, W: float, L_B: float, eps_c: float) -> float:
    """Finite-blocklength normal-approximation rate in bit/s, clamped at zero."""
    _check_finite(sinr, W, L_B, eps_c)
    if sinr < 0 or W <= 0 or L_B < 1:
        raise ChannelDomainError("need sinr >= 0, W > 0, L_B >= 1")
    if not 0.0 < eps_c < 0.5:
        raise ChannelDomainError(f"eps_c must lie in (0, 0.5), got {eps_c}")
    dispersion = -math.expm1(-2.0 * math.log1p(sinr))
    nats = math.log1p(sinr) - math.sqrt(dispersion / L_B) * inverse_q(eps_c)
    return max(0.0, W / math.log(2.0) * nats)


def handover_penalty(current_bs, candidate_bs, candidate_kind: str) -> float:
    """HO penalty for moving from ``current_bs`` to ``candidate_bs``."""
    if current_bs is not None and candidate_bs == current_bs:
        return MU_KEEP
    if candidate_kind == RBS:
        return MU_SWITCH_RBS
    if candidate_kind == TBS:
        return MU_SWITCH_TBS
    raise ValueError(f"unknown base station kind {candidate_kind!r}")


def weighted_rate(rate: float, quota: int, load: int, mu: float) -> float:
    if rate < 0:
        raise ChannelDomainError(f"rate must be nonnegative, got {rate}")
    if quota < 1 or load < 0:
        raise ChannelDomainError("need quota >= 1 and load >= 0")
    divisor = min(quota, load) if load > 0 else 1
    return rate / divisor * (1.0 - mu)


# -- vectorised forms used by the environment --------------------------------

def link_distances(av_xy: np.ndarray, bs_xy: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """3-D distances, shape (n_av, n_bs)."""
    d = np.hypot(av_xy[:, None, 0] - bs_xy[None, :, 0], av_xy[:, None, 1] - bs_xy[None, :, 1])
    return np.sqrt(d * d + heights[None, :] ** 2)


def rf_sinr_matrix(r: np.ndarray, fading: np.ndarray, cfg: RadioConfig) -> np.ndarray:
    """SINR for every (AV, RBS) pair; every other RBS interferes."""
    received = cfg.P_R_tx * cfg.gamma_R * fading * r ** (-cfg.alpha)
    interference = received.sum(axis=1, keepdims=True) - received
    return received / (cfg.sigma2 + interference)


def thz_sinr_matrix(r: np.ndarray, gains: np.ndarray, cfg: RadioConfig) -> np.ndarray:
    """SINR for every (AV, TBS) pair.

    ``gains[j, k]`` is the alignment gain product of TBS ``k`` towards AV ``j``
    when ``k`` acts as an interferer.
    """
    loss = r ** -2.0
    absorbed = np.exp(-cfg.K_a * r)
    leaked = -np.expm1(-cfg.K_a * r)
    base = cfg.friis_T * cfg.P_T_tx * loss
    interf_all = gains * base * absorbed
    interf_noise_all = gains * base * leaked
    interference = interf_all.sum(axis=1, keepdims=True) - interf_all
    noise_interf = interf_noise_all.sum(axis=1, keepdims=True) - interf_noise_all
    noise = cfg.N_0 + cfg.P_T_tx * cfg.gamma_T * loss * leaked + noise_interf
    signal = cfg.gamma_T * cfg.P_T_tx * absorbed * loss
    return signal / (noise + interference)


def achievable_rate_array(sinr: np.ndarray, W, L_B, eps_c: float) -> np.ndarray:
    q = inverse_q(eps_c)
    log_term = np.log1p(sinr)
    dispersion = -np.expm1(-2.0 * log_term)
    nats = log_term - np.sqrt(dispersion / L_B) * q
    return np.maximum(0.0, W / math.log(2.0) * nats)
