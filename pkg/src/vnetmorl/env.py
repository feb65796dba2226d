"""Multi-objective highway + RF/THz network-selection environment.

Each target AV picks one of 15 joint actions per step: a driving action
(left, idle, right, faster, slower) and a base-station selection rule. The
environment returns one ``(r_tran, r_tele)`` reward vector per target AV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import channel
from .channel import RBS, TBS, RadioConfig
from .traffic import (SURROUNDING, TARGET, Highway, TrafficConfig, VehicleState)

N_TELE = 3
N_TRAN = 5
N_ACTIONS = N_TELE * N_TRAN
N_FEATURES = 6

TRAN_LEFT, TRAN_IDLE, TRAN_RIGHT, TRAN_FASTER, TRAN_SLOWER = range(N_TRAN)
TELE_WEIGHTED, TELE_VACANT, TELE_MAX_RATE = range(N_TELE)


class ConfigurationError(ValueError):
    pass


class EnvError(ValueError):
    pass


def encode_action(tele: int, tran: int) -> int:
    if not (0 <= tele < N_TELE and 0 <= tran < N_TRAN):
        raise EnvError(f"invalid action pair ({tele}, {tran})")
    return tele * N_TRAN + tran


def decode_action(flat: int) -> Tuple[int, int]:
    """Flat index -> ``(tele, tran)``."""
    if not 0 <= flat < N_ACTIONS:
        raise EnvError(f"action index {flat} outside [0, {N_ACTIONS})")
    return divmod(int(flat), N_TRAN)


@dataclass(frozen=True)
class InstanceConfig:
    name: str = "custom"
    v_min: float = 20.0
    v_max: float = 30.0
    n_R: int = 5
    n_T: int = 20
    M_1: int = 5
    M_2: int = 20
    T_hl: int = 30
    spawn_length: float = 300.0
    spawn_min_gap: float = 5.0
    bs_offset: float = 2.0
    surrounding_rows: int = 0

    def __post_init__(self):
        if self.M_1 < 1 or self.M_2 < 0:
            raise ConfigurationError("need at least one target AV and M_2 >= 0")
        if self.n_R < 0 or self.n_T < 0 or self.n_R + self.n_T < 1:
            raise ConfigurationError("need at least one base station")
        if not self.v_min < self.v_max:
            raise ConfigurationError("v_min must be below v_max")
        if self.T_hl < 1:
            raise ConfigurationError("T_hl must be >= 1")


INSTANCE_PRESETS: Dict[str, InstanceConfig] = {
    "I-(20,30,20,20)": InstanceConfig("I-(20,30,20,20)", 20.0, 30.0, n_T=20, M_2=20),
    "I-(25,35,20,20)": InstanceConfig("I-(25,35,20,20)", 25.0, 35.0, n_T=20, M_2=20),
    "I-(20,30,10,20)": InstanceConfig("I-(20,30,10,20)", 20.0, 30.0, n_T=10, M_2=20),
    "I-(20,30,20,50)": InstanceConfig("I-(20,30,20,50)", 20.0, 30.0, n_T=20, M_2=50, spawn_length=600.0),
    "I-(30,40,20,20)": InstanceConfig("I-(30,40,20,20)", 30.0, 40.0, n_T=20, M_2=20),
    "desk": InstanceConfig("desk", 20.0, 30.0, n_R=2, n_T=5, M_1=2, M_2=5, spawn_length=80.0),
}


@dataclass(frozen=True)
class RewardConfig:
    c1: float = 0.4
    c2: float = 1.0
    c3: float = 0.1
    c4: float = 0.2
    c5: float = 4.5e-7
    R_th: float = 5e7
    sense_radius: float = 200.0

    def __post_init__(self):
        others = (self.c1, self.c3, self.c4)
        if not all(self.c2 > c for c in others):
            raise ConfigurationError("collision weight c2 must exceed c1, c3 and c4")


# -- rewards -------------------------------------------------------------------

def transport_reward(v: float, lane: int, collided: bool, on_road: bool,
                     traffic: TrafficConfig, cfg: RewardConfig) -> float:
    speed = (v - traffic.v_min) / (traffic.v_max - traffic.v_min)
    right_lane = lane / (traffic.N_L - 1) if traffic.N_L > 1 else 1.0
    r = (cfg.c1 * speed - cfg.c2 * float(collided) + cfg.c3 * right_lane
         + cfg.c4 * float(on_road))
    return min(max(r, 0.0), 1.0)


def telecom_reward(wr: float, ho_prob: float, cfg: RewardConfig) -> float:
    return cfg.c5 * wr * (1.0 - min(1.0, ho_prob))


# -- association ---------------------------------------------------------------

def _argmax_prefer(values: np.ndarray, prefer: Optional[int], allowed: Optional[np.ndarray] = None) -> int:
    vals = np.where(allowed, values, -np.inf) if allowed is not None else values
    best = vals.max()
    if prefer is not None and vals[prefer] == best:
        return int(prefer)
    return int(np.flatnonzero(vals == best)[0])


def _divisors(quotas: np.ndarray, loads: np.ndarray) -> np.ndarray:
    return np.where(loads > 0, np.minimum(quotas, loads), 1)


def choose_bs(policy: int, rates: np.ndarray, kinds: Sequence[str], quotas: np.ndarray,
              loads: np.ndarray, current: Optional[int]) -> int:
    """Base station picked by one tele action for one AV.

    ``loads`` is the current association count per BS, counting this AV on
    ``current``. Ties keep the current BS, otherwise go to the lowest index.
    """
    rates = np.asarray(rates, dtype=float)
    div = _divisors(quotas, loads)
    if policy == TELE_WEIGHTED:
        mu = np.array([channel.handover_penalty(current, i, kinds[i]) for i in range(len(rates))])
        return _argmax_prefer(rates / div * (1.0 - mu), current)
    if policy == TELE_VACANT:
        wr = rates / div
        after = loads + np.array([0 if i == current else 1 for i in range(len(rates))])
        vacant = after <= quotas
        if vacant.any():
            return _argmax_prefer(wr, current, vacant)
        return _argmax_prefer(wr, current)
    if policy == TELE_MAX_RATE:
        return _argmax_prefer(rates, current)
    raise EnvError(f"unknown tele policy {policy}")


@dataclass
class BaseStation:
    id: int
    kind: str
    x: float
    y: float
    height: float
    quota: int
    load: int = 0


@dataclass
class StepInfo:
    collided: List[bool]
    serving: List[int]
    handovers: List[int]
    ho_prob: List[float]
    wr: List[float]
    t: int


@dataclass
class MetricsRecord:
    episode: int
    R_tran: float
    R_tele: float
    delta_e: float
    xi_e: float
    omega_tran: Optional[float] = None


class VehicularEnv:
    """Highway + multi-band network MOMDP with per-target-AV reward vectors."""

    def __init__(self, instance: InstanceConfig = InstanceConfig(),
                 radio: RadioConfig = RadioConfig(), traffic: Optional[TrafficConfig] = None,
                 reward: RewardConfig = RewardConfig(), gamma: float = 0.995):
        self.instance = instance
        self.gamma = gamma
        self.radio = radio
        base = traffic or TrafficConfig()
        self.traffic = replace(base, v_min=instance.v_min, v_max=instance.v_max)
        self.reward_cfg = reward
        self.highway: Optional[Highway] = None
        self.stations: List[BaseStation] = []
        self.rng = np.random.default_rng(0)
        self.t = 0
        self.done = True

    # -- layout ------------------------------------------------------------------

    @property
    def obs_dim(self) -> int:
        return (self.instance.M_1 + self.instance.surrounding_rows) * N_FEATURES

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    def _place_vehicles(self, rng: np.random.Generator) -> List[VehicleState]:
        inst, tr = self.instance, self.traffic
        x_start = rng.uniform(0.0, tr.road_length)
        placed: List[VehicleState] = []
        total = inst.M_1 + inst.M_2
        for k in range(total):
            cls = TARGET if k < inst.M_1 else SURROUNDING
            for _ in range(1000):
                lane = int(rng.integers(0, tr.N_L))
                x = (x_start + rng.uniform(0.0, inst.spawn_length)) % tr.road_length
                clear = True
                for other in placed:
                    if other.lane != lane:
                        continue
                    dx = abs(other.x - x)
                    dx = min(dx, tr.road_length - dx)
                    if dx < tr.vehicle_length + inst.spawn_min_gap:
                        clear = False
                        break
                if clear:
                    break
            else:
                raise ConfigurationError(
                    f"could not place {total} vehicles collision-free in {inst.spawn_length} m")
            v = float(rng.uniform(inst.v_min, inst.v_max))
            placed.append(VehicleState(id=k, cls=cls, x=x, y=tr.lane_center(lane), v=v,
                                       lane=lane, target_lane=lane, v_r=v,
                                       length=tr.vehicle_length))
        return placed

    def _place_stations(self, rng: np.random.Generator) -> List[BaseStation]:
        inst, tr, rc = self.instance, self.traffic, self.radio
        stations = []
        for i in range(inst.n_R + inst.n_T):
            kind = RBS if i < inst.n_R else TBS
            x = float(rng.uniform(0.0, tr.road_length))
            side = rng.random() < 0.5
            y = -inst.bs_offset if side else tr.road_width + inst.bs_offset
            stations.append(BaseStation(
                id=i, kind=kind, x=x, y=y,
                height=rc.h_R if kind == RBS else rc.h_T,
                quota=rc.Q_R if kind == RBS else rc.Q_T))
        return stations

    # -- channel -----------------------------------------------------------------

    def _distances(self) -> Tuple[np.ndarray, np.ndarray]:
        """3-D link distances and 2-D ground distances, shape (M_1, n_BS)."""
        targets = self.highway.targets
        av_xy = np.array([[v.x, v.y] for v in targets])
        bs_xy = np.array([[b.x, b.y] for b in self.stations])
        dx = np.abs(av_xy[:, None, 0] - bs_xy[None, :, 0])
        dx = np.minimum(dx, self.traffic.road_length - dx)
        dy = av_xy[:, None, 1] - bs_xy[None, :, 1]
        heights = np.array([b.height for b in self.stations])
        return np.sqrt(dx * dx + dy * dy + heights[None, :] ** 2), np.hypot(dx, dy)

    def _rates(self, r: np.ndarray, expected: bool = False) -> np.ndarray:
        """Achievable rate for every (target AV, BS) pair."""
        n_R = self.instance.n_R
        rc = self.radio
        out = np.zeros_like(r)
        if n_R:
            r_rf = r[:, :n_R]
            fading = np.ones_like(r_rf) if expected else self.rng.exponential(1.0, size=r_rf.shape)
            sinr = channel.rf_sinr_matrix(r_rf, fading, rc)
            out[:, :n_R] = channel.achievable_rate_array(sinr, rc.W_R, rc.L_B_R, rc.eps_c)
        if self.instance.n_T:
            r_t = r[:, n_R:]
            if expected:
                gains = np.full_like(r_t, rc.mean_alignment_gain)
            else:
                gains = channel.sample_beam_alignment(self.rng, rc, size=r_t.shape)
            sinr = channel.thz_sinr_matrix(r_t, gains, rc)
            out[:, n_R:] = channel.achievable_rate_array(sinr, rc.W_T, rc.L_B_T, rc.eps_c)
        return out

    # -- API ---------------------------------------------------------------------

    def reset(self, seed=None) -> List[np.ndarray]:
        """Start an episode; ``seed`` may be an int, a SeedSequence or a Generator."""
        if isinstance(seed, np.random.Generator):
            self.rng = seed
        else:
            self.rng = np.random.default_rng(seed)
        self.highway = Highway(self._place_vehicles(self.rng), self.traffic)
        self.stations = self._place_stations(self.rng)
        m1 = self.instance.M_1
        self.t = 0
        self.done = False
        self.ho_count = [0] * m1
        self.serving: List[Optional[int]] = [None] * m1
        self.returns = np.zeros((m1, 2))
        self.discount = 1.0
        r, _ = self._distances()
        rates = self._rates(r)
        for j in range(m1):
            i = int(np.argmax(rates[j]))
            self.serving[j] = i
            self.stations[i].load += 1
        return self.observe_all()

    def associate(self, j: int, policy: int, rates_row: np.ndarray) -> int:
        """Run tele ``policy`` for target AV ``j`` and update loads and HO count."""
        kinds = [b.kind for b in self.stations]
        quotas = np.array([b.quota for b in self.stations])
        loads = np.array([b.load for b in self.stations])
        current = self.serving[j]
        chosen = choose_bs(policy, rates_row, kinds, quotas, loads, current)
        if chosen != current:
            if current is not None:
                self.stations[current].load -= 1
            self.stations[chosen].load += 1
            self.serving[j] = chosen
            self.ho_count[j] += 1
        return chosen

    def step(self, actions: Sequence[int]):
        """Apply one joint action per target AV.

        Returns ``(observations, rewards, done, info)`` with ``rewards`` of
        shape ``(M_1, 2)`` holding ``(r_tran, r_tele)`` rows.
        """
        if self.done:
            raise EnvError("episode is over; call reset()")
        m1 = self.instance.M_1
        if len(actions) != m1:
            raise EnvError(f"expected {m1} actions, got {len(actions)}")
        decoded = [decode_action(a) for a in actions]
        tr = self.traffic
        targets = self.highway.targets
        for s, (_, tran) in zip(targets, decoded):
            if tran == TRAN_LEFT:
                s.target_lane = max(s.target_lane - 1, 0)
            elif tran == TRAN_RIGHT:
                s.target_lane = min(s.target_lane + 1, tr.N_L - 1)
            elif tran == TRAN_FASTER:
                s.v_r = min(s.v_r + tr.dv_action, tr.v_max)
            elif tran == TRAN_SLOWER:
                s.v_r = max(s.v_r - tr.dv_action, tr.v_min)
        self.highway.step()
        self.t += 1
        targets = self.highway.targets

        r, _ = self._distances()
        rates = self._rates(r)
        previous = list(self.serving)
        for j, (tele, _) in enumerate(decoded):
            self.associate(j, tele, rates[j])

        rewards = np.zeros((m1, 2))
        wrs, probs = [], []
        for j, s in enumerate(targets):
            i = self.serving[j]
            bs = self.stations[i]
            mu = channel.handover_penalty(previous[j], i, bs.kind)
            wr = channel.weighted_rate(float(rates[j, i]), bs.quota, bs.load, mu)
            ho_prob = self.ho_count[j] / self.t
            on_road = 0.0 <= s.y <= tr.road_width
            rewards[j, 0] = transport_reward(s.v, s.lane, s.crashed, on_road, tr, self.reward_cfg)
            rewards[j, 1] = telecom_reward(wr, ho_prob, self.reward_cfg)
            wrs.append(wr)
            probs.append(min(1.0, ho_prob))
        self.returns += self.discount * rewards
        self.discount *= self.gamma
        collided = [s.crashed for s in targets]
        self.done = any(collided) or self.t >= self.instance.T_hl
        info = StepInfo(collided, list(self.serving), list(self.ho_count), probs, wrs, self.t)
        return self.observe_all(), rewards, self.done, info

    # -- observation --------------------------------------------------------------

    def _counts(self) -> np.ndarray:
        """Per target AV: number of RBSs and TBSs within range meeting R_th."""
        r, ground = self._distances()
        rates = self._rates(r, expected=True)
        good = (rates >= self.reward_cfg.R_th) & (ground <= self.reward_cfg.sense_radius)
        n_R = self.instance.n_R
        return np.column_stack([good[:, :n_R].sum(axis=1), good[:, n_R:].sum(axis=1)])

    def state_matrix(self) -> np.ndarray:
        """Unrotated ``M_1 x 6`` normalised target-AV features."""
        tr, inst = self.traffic, self.instance
        counts = self._counts()
        rows = []
        for s, (c_r, c_t) in zip(self.highway.targets, counts):
            rows.append([
                2.0 * s.x / tr.road_length - 1.0,
                2.0 * s.y / tr.road_width - 1.0,
                2.0 * (s.v - tr.v_min) / (tr.v_max - tr.v_min) - 1.0,
                s.psi / math.pi,
                c_r / inst.n_R if inst.n_R else 0.0,
                c_t / inst.n_T if inst.n_T else 0.0,
            ])
        return np.clip(np.array(rows, dtype=float), -1.0, 1.0)

    def _surrounding_rows(self, ego: VehicleState) -> np.ndarray:
        tr = self.traffic
        k = self.instance.surrounding_rows
        others = []
        for s in self.highway.vehicles:
            if s.cls != SURROUNDING:
                continue
            dx = (s.x - ego.x + tr.road_length / 2.0) % tr.road_length - tr.road_length / 2.0
            others.append((abs(dx) + abs(s.y - ego.y), s.id, dx, s))
        others.sort(key=lambda item: (item[0], item[1]))
        rows = np.zeros((k, N_FEATURES))
        for row, (_, _, dx, s) in zip(rows, others[:k]):
            row[:] = [dx / 100.0, (s.y - ego.y) / tr.road_width,
                      2.0 * (s.v - tr.v_min) / (tr.v_max - tr.v_min) - 1.0,
                      s.psi / math.pi, 1.0, 0.0]
        return np.clip(rows, -1.0, 1.0)

    def observe_all(self) -> List[np.ndarray]:
        base = self.state_matrix()
        targets = self.highway.targets
        out = []
        for j in range(self.instance.M_1):
            mat = np.roll(base, -j, axis=0)
            if self.instance.surrounding_rows:
                mat = np.vstack([mat, self._surrounding_rows(targets[j])])
            out.append(mat.ravel())
        return out

    def observe(self, j: int) -> np.ndarray:
        return self.observe_all()[j]

    def episode_metrics(self, episode: int, omega_tran: Optional[float] = None) -> MetricsRecord:
        """Per-episode totals; call once the episode is done."""
        t_e = max(self.t, 1)
        delta_e = 1.0 - self.t / self.instance.T_hl
        xi = float(np.mean([min(1.0, h / t_e) for h in self.ho_count]))
        R = self.returns.mean(axis=0)
        return MetricsRecord(episode, float(R[0]), float(R[1]), float(delta_e), xi, omega_tran)
