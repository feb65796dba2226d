"""Independent reference computations used by the self-check suites and tests.

Nothing here shares code with the modules it checks: channel formulas are
re-derived in arbitrary precision, gradients come from finite differences,
and set filters and Bellman targets use plain enumeration.
"""
from __future__ import annotations

import itertools
from typing import Callable, List, Sequence, Tuple

import mpmath as mp
import numpy as np

DPS = 50
C_LIGHT = mp.mpf(299792458)


def _mp(x) -> mp.mpf:
    return mp.mpf(float(x))


def rf_sinr_mp(r, fading, interferers: Sequence[Tuple[float, float]], cfg) -> mp.mpf:
    """RF SINR from distances; ``interferers`` holds ``(r_k, fading_k)``."""
    with mp.workdps(DPS):
        friis = (C_LIGHT / (4 * mp.pi * _mp(cfg.f_R))) ** 2
        g = _mp(cfg.G_R_tx) * _mp(cfg.G_R_rx) * friis
        p, a = _mp(cfg.P_R_tx), _mp(cfg.alpha)
        interference = mp.fsum(p * g * _mp(rk) ** (-a) * _mp(hk) for rk, hk in interferers)
        return p * g * _mp(fading) / (_mp(r) ** a * (_mp(cfg.sigma2) + interference))


def thz_sinr_mp(r, interferers: Sequence[Tuple[float, float]], cfg) -> mp.mpf:
    """THz SINR; ``interferers`` holds ``(r_k, gain_product)``."""
    with mp.workdps(DPS):
        friis = (C_LIGHT / (4 * mp.pi * _mp(cfg.f_T))) ** 2
        p, k = _mp(cfg.P_T_tx), _mp(cfg.K_a)
        g_serv = _mp(cfg.G_T_max_tx) * _mp(cfg.G_T_max_rx) * friis
        r = _mp(r)
        noise = _mp(cfg.N_0) + p * g_serv * (1 - mp.exp(-k * r)) / r ** 2
        interference = mp.mpf(0)
        for rk, gk in interferers:
            rk, gk = _mp(rk), _mp(gk)
            noise += gk * friis * p * (1 - mp.exp(-k * rk)) / rk ** 2
            interference += gk * friis * p * mp.exp(-k * rk) / rk ** 2
        return g_serv * p * mp.exp(-k * r) / r ** 2 / (noise + interference)


def inverse_q_mp(p) -> mp.mpf:
    with mp.workdps(DPS):
        return mp.sqrt(2) * mp.erfinv(1 - 2 * _mp(p))


def achievable_rate_mp(sinr, W, L_B, eps_c) -> mp.mpf:
    with mp.workdps(DPS):
        s = _mp(sinr) if not isinstance(sinr, mp.mpf) else sinr
        v = 1 - 1 / (1 + s) ** 2
        nats = mp.log(1 + s) - mp.sqrt(v / _mp(L_B)) * inverse_q_mp(eps_c)
        return max(mp.mpf(0), _mp(W) / mp.log(2) * nats)


def finite_difference_gradient(f: Callable[[], float], array: np.ndarray, index: tuple,
                               h: float = 1e-6) -> float:
    """Central difference of ``f`` w.r.t. ``array[index]`` (restored afterwards)."""
    old = array[index]
    array[index] = old + h
    plus = f()
    array[index] = old - h
    minus = f()
    array[index] = old
    return (plus - minus) / (2 * h)


def brute_force_pareto(points: np.ndarray, tol: float = 1e-9) -> List[int]:
    """O(n^2) filter; the first index of each duplicate group represents it."""
    pts = np.asarray(points, dtype=float)
    keep = []
    for i, p in enumerate(pts):
        dominated = False
        for j, q in enumerate(pts):
            if j == i:
                continue
            same = np.all(np.abs(p - q) <= tol)
            if same and j < i:
                dominated = True
            elif not same and np.all(q >= p - tol) and np.any(q > p + tol):
                dominated = True
            if dominated:
                break
        if not dominated:
            keep.append(i)
    return keep


def brute_force_ccs(points: np.ndarray, n_grid: int = 10_000, tol: float = 1e-9) -> List[int]:
    """Pareto points that attain the maximal utility for some ω on a dense grid."""
    pts = np.asarray(points, dtype=float)
    front = brute_force_pareto(pts, tol)
    sub = pts[front]
    u = np.linspace(0.0, 1.0, n_grid)
    omegas = np.column_stack([u, 1.0 - u])
    util = omegas @ sub.T  # (grid, points)
    best = util.max(axis=1, keepdims=True)
    hit = (util >= best - tol).any(axis=0)
    return [front[k] for k in np.flatnonzero(hit)]


def monte_carlo_hypervolume(points: np.ndarray, reference, rng: np.random.Generator,
                            n: int = 200_000) -> float:
    pts = np.asarray(points, dtype=float)
    ref = np.asarray(reference, dtype=float)
    upper = pts.max(axis=0)
    samples = ref + rng.random((n, 2)) * (upper - ref)
    covered = np.zeros(n, dtype=bool)
    for p in pts:
        covered |= np.all(samples <= p, axis=1)
    return float(covered.mean() * np.prod(upper - ref))


def enumerate_envelope_target(r, s_next: int, terminal: bool, omega_g, W, Q, gamma,
                              Q_select=None) -> np.ndarray:
    """Envelope target for one transition by scanning every ``(ω', a')`` pair.

    ``Q[s][k][a]`` is the H-vector for state ``s``, preference index ``k`` and
    action ``a``.
    """
    r = np.asarray(r, dtype=float)
    if terminal:
        return r.copy()
    sel = Q if Q_select is None else Q_select
    best, best_val = None, -np.inf
    for k, a in itertools.product(range(len(W)), range(len(Q[s_next][0]))):
        val = float(np.dot(omega_g, sel[s_next][k][a]))
        if val > best_val:
            best, best_val = (k, a), val
    k, a = best
    return r + gamma * np.asarray(Q[s_next][k][a], dtype=float)


def value_iteration(P: np.ndarray, R: np.ndarray, terminal: np.ndarray, gamma: float,
                    iters: int = 10_000, tol: float = 1e-13) -> np.ndarray:
    """Optimal Q for a deterministic tabular MDP.

    ``P[s, a]`` is the next state, ``R[s, a]`` the scalar reward and
    ``terminal[s, a]`` whether the episode ends after the move.
    """
    Q = np.zeros(R.shape)
    for _ in range(iters):
        new = R + gamma * np.where(terminal, 0.0, Q.max(axis=1)[P])
        if np.max(np.abs(new - Q)) < tol:
            return new
        Q = new
    return Q
