"""Oracle-backed self-check suites run by ``vnetmorl check``."""
from __future__ import annotations

import math
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np

from . import channel, oracles
from .envelope import envelope_target
from .neural import NetworkSpec, QNetwork, load_checkpoint, save_checkpoint
from .pareto import ccs_indices
from .replay import Batch
from .scalar import td_target

CheckResult = Tuple[bool, str]


def random_channel_case(rng: np.random.Generator):
    """One random configuration with serving and interfering link distances."""
    cfg = channel.RadioConfig(
        f_R=rng.uniform(1e9, 6e9), f_T=rng.uniform(1e11, 1e12),
        G_R_tx=rng.uniform(1, 500), G_R_rx=rng.uniform(1, 500),
        G_T_max_tx=rng.uniform(1, 500), G_T_max_rx=rng.uniform(1, 500),
        alpha=rng.uniform(2, 5), K_a=rng.uniform(0, 0.1),
        sigma2=10 ** rng.uniform(-15, -11), N_0=10 ** rng.uniform(-14, -10),
        eps_c=10 ** rng.uniform(-7, -2),
    )
    geom = channel.LinkGeometry(rng.uniform(1, 300), rng.uniform(1, 20))
    n_int = int(rng.integers(0, 5))
    rf_int = [(channel.LinkGeometry(rng.uniform(1, 500), rng.uniform(1, 20)), rng.exponential())
              for _ in range(n_int)]
    thz_int = [(channel.LinkGeometry(rng.uniform(1, 100), rng.uniform(1, 20)),
                rng.choice([0.0, cfg.G_T_max_tx * cfg.G_T_max_rx])) for _ in range(n_int)]
    return cfg, geom, rng.exponential(), rf_int, thz_int


def _rel(a: float, b) -> float:
    b = float(b)
    return abs(a - b) / max(abs(b), 1e-300)


def check_channel(draws: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        cfg, geom, fading, rf_int, thz_int = random_channel_case(rng)
        rf = channel.rf_sinr(geom, fading, rf_int, cfg)
        ref = oracles.rf_sinr_mp(geom.r, fading, [(g.r, h) for g, h in rf_int], cfg)
        worst = max(worst, _rel(rf, ref))
        thz = channel.thz_sinr(geom, thz_int, cfg)
        ref = oracles.thz_sinr_mp(geom.r, [(g.r, k) for g, k in thz_int], cfg)
        worst = max(worst, _rel(thz, ref))
        for sinr, W, L_B in ((rf, cfg.W_R, cfg.L_B_R), (thz, cfg.W_T, cfg.L_B_T)):
            rate = channel.achievable_rate(sinr, W, L_B, cfg.eps_c)
            ref = oracles.achievable_rate_mp(sinr, W, L_B, cfg.eps_c)
            if ref > 0 and rate > 0:
                worst = max(worst, _rel(rate, ref))
            elif (ref > 0) != (rate > 0):
                return False, f"rate clamp disagrees at sinr={sinr}"
    mu_ok = (channel.handover_penalty(3, 3, channel.TBS) == 0.0
             and channel.handover_penalty(3, 4, channel.RBS) == 0.1
             and channel.handover_penalty(3, 4, channel.TBS) == 0.5)
    ok = worst <= 1e-9 and mu_ok
    return ok, f"max relative error {worst:.2e} over {draws} draws; handover penalties {'exact' if mu_ok else 'WRONG'}"


SHANNON_GRID_DB = (20.0, 60.0)


def check_shannon(points: int = 50, eps_c: float = 1e-5) -> CheckResult:
    """Huge blocklength must recover ``log2(1 + SINR)``.

    The residual dispersion gap is ``Qinv(eps) sqrt(V / L_B) / ln(1 + s)``;
    at ``L_B = 1e12`` and the default ``eps_c`` it sits below 1e-6 only from
    about 18.5 dB upward, hence the grid.
    """
    worst = 0.0
    lo, hi = SHANNON_GRID_DB
    for s in np.logspace(lo / 10, hi / 10, points):
        rate = channel.achievable_rate(float(s), 1.0, 1e12, eps_c)
        worst = max(worst, _rel(rate, math.log2(1 + s)))
    return worst <= 1e-6, f"max relative gap to log2(1+SINR) {worst:.2e}"


def gradient_check(spec: NetworkSpec, probes: int, rng: np.random.Generator, h: float = 1e-6) -> float:
    """Worst relative error between backprop and central differences over random parameters."""
    net = QNetwork.create(spec, rng)
    x = rng.normal(size=(4, spec.input_dim))
    g_out = rng.normal(size=(4, spec.output_dim))

    def objective() -> float:
        return float(np.sum(net(x) * g_out))

    _, cache = net.forward(x)
    grads = net.backward(cache, g_out)
    params, grad_arrays = net.params.arrays(), grads.arrays()
    worst = 0.0
    for _ in range(probes):
        k = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(n)) for n in params[k].shape)
        numeric = oracles.finite_difference_gradient(objective, params[k], idx, h)
        analytic = float(grad_arrays[k][idx])
        scale = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def check_neural(probes: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = gradient_check(NetworkSpec(30, (64, 64), 30), probes, rng)
    net = QNetwork.create(NetworkSpec(8, (16,), 4), rng)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "ck.json"
        save_checkpoint(path, {"q": net})
        back = load_checkpoint(path)[0]["q"]
    exact = all(np.array_equal(a, b) for a, b in zip(net.params.arrays(), back.params.arrays()))
    return worst <= 1e-4 and exact, (f"max backprop/finite-difference relative error {worst:.2e}; "
                                    f"checkpoint round trip {'exact' if exact else 'MISMATCH'}")


def check_pareto(sets: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    for k in range(sets):
        pts = rng.random((int(rng.integers(1, 101)), 2))
        hull = sorted(ccs_indices(pts))
        brute = sorted(oracles.brute_force_ccs(pts))
        if hull != brute:
            return False, f"set {k}: hull {hull} != grid {brute}"
    fig = np.array([(1.0, 0.0), (0.0, 1.0), (0.4, 0.4)])
    if sorted(ccs_indices(fig)) != [0, 1]:
        return False, "concave middle point was not excluded"
    return True, f"hull CCS equals grid brute force on {sets} random sets"


class TabularVectorQ:
    """Vector Q table indexed by one-hot state and by exact preference match."""

    def __init__(self, table: np.ndarray, prefs: np.ndarray):
        self.table = table  # (S, K, A, H)
        self.prefs = [tuple(p) for p in np.asarray(prefs, dtype=float)]

    def __call__(self, states: np.ndarray, W: np.ndarray) -> np.ndarray:
        s = np.argmax(np.atleast_2d(states), axis=1)
        cols = [self.prefs.index(tuple(w)) for w in np.atleast_2d(W)]
        return self.table[s][:, cols]


def _one_hot(idx: np.ndarray, n: int) -> np.ndarray:
    return np.eye(n)[idx]


def reduction_case(rng: np.random.Generator, n: int, n_states: int = 6, n_actions: int = 15,
                   gamma: float = 0.995):
    """Random tabular transitions; returns (scalar target, envelope first component)."""
    qe = rng.normal(size=(n_states, n_actions))
    qt = rng.normal(size=(n_states, n_actions))
    s = rng.integers(n_states, size=n)
    s2 = rng.integers(n_states, size=n)
    r = rng.normal(size=n)
    term = rng.random(n) < 0.2
    a = rng.integers(n_actions, size=n)
    scalar_batch = Batch(_one_hot(s, n_states), a, r[:, None], _one_hot(s2, n_states), term)
    y_scalar = td_target(scalar_batch, lambda x: qe[np.argmax(x, axis=1)],
                         lambda x: qt[np.argmax(x, axis=1)], gamma, "ddqn")
    W = np.array([[1.0, 0.0]])
    zeros = np.zeros((n_states, 1, n_actions, 1))
    ve = np.concatenate([qe[:, None, :, None], zeros], axis=3)
    vt = np.concatenate([qt[:, None, :, None], zeros], axis=3)
    vec_batch = Batch(scalar_batch.s, a, np.column_stack([r, np.zeros(n)]), scalar_batch.s_next, term)
    y_env = envelope_target(vec_batch, W, TabularVectorQ(vt, W), gamma, TabularVectorQ(ve, W))
    return y_scalar, y_env[:, 0, 0]


def check_envelope(transitions: int = 1000, instances: int = 10_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    y_scalar, y_env = reduction_case(rng, transitions)
    if not np.array_equal(y_scalar, y_env):
        return False, "single-preference envelope target differs from the double DQN target"
    violations = dominance_violations(rng, instances)
    if violations:
        return False, f"{violations} envelope projections fell below the fixed-preference target"
    return True, (f"reduction bit-exact on {transitions} transitions; dominance held on "
                  f"{instances} random instances")


def dominance_violations(rng: np.random.Generator, instances: int, n_states: int = 4,
                         n_actions: int = 3) -> int:
    """Count (transition, ω) pairs where ``ω^T envelope < ω^T fixed-ω`` target."""
    bad = 0
    for _ in range(instances):
        g = int(rng.integers(1, 6))
        u = rng.random(g)
        W = np.column_stack([u, 1.0 - u])
        table = rng.normal(size=(n_states, g, n_actions, 2))
        q = TabularVectorQ(table, W)
        s2 = int(rng.integers(n_states))
        batch = Batch(np.zeros((1, n_states)), np.zeros(1, dtype=int), rng.normal(size=(1, 2)),
                      _one_hot(np.array([s2]), n_states), np.array([rng.random() < 0.1]))
        gamma = float(rng.uniform(0.0, 1.0))
        y = envelope_target(batch, W, q, gamma)[0]
        for k, w in enumerate(W):
            fixed = envelope_target(batch, w[None, :], q, gamma)[0, 0]
            if float(w @ y[k]) < float(w @ fixed):
                bad += 1
    return bad


SUITES: Dict[str, Callable[[], CheckResult]] = {
    "channel": lambda: _all(check_channel(), check_shannon()),
    "neural": check_neural,
    "pareto": check_pareto,
    "envelope": check_envelope,
}


def _all(*results: CheckResult) -> CheckResult:
    return all(ok for ok, _ in results), "; ".join(msg for _, msg in results)


def run_suites(names: List[str]) -> List[Tuple[str, bool, str]]:
    out = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        try:
            ok, msg = SUITES[name]()
        except Exception as exc:  # surface any crash as a failed suite
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        out.append((name, ok, msg))
    return out
