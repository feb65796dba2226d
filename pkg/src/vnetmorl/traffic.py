"""Highway micro-simulation: kinematic bicycle, IDM, MOBIL, collisions.

Lane 0 is the left-most lane; lane indices grow to the right and lateral
position ``y`` grows with them. The road is a straight ring of length
``road_length`` so vehicles leaving the far end re-enter at ``x = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Set, Tuple

TARGET = "target"
SURROUNDING = "surrounding"

STAY, LEFT, RIGHT = "stay", "left", "right"

MAX_STEERING = math.pi / 3
B_HARD = 5.0  # maximum deceleration, m/s^2
A_TARGET_MIN, A_TARGET_MAX = -5.0, 3.0


class TrafficDomainError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficConfig:
    N_L: int = 5
    lane_width: float = 4.0
    road_length: float = 1500.0
    dt: float = 1.0 / 15.0
    K_psi: float = 5.0
    K_y: float = 5.0 / 3.0
    K0_v: float = 5.0
    a_c: float = 3.0
    b_c: float = 5.0
    v0: float = 30.0
    delta_a: float = 4.0
    d0: float = 10.0
    T_gap: float = 1.5
    p_polite: float = 0.3
    b_safe: float = 4.0
    da_th: float = 0.2
    v_min: float = 20.0
    v_max: float = 30.0
    dv_action: float = 5.0
    v_hardmax: float = 50.0
    vehicle_length: float = 5.0

    def __post_init__(self):
        if self.dt <= 0 or self.a_c <= 0 or self.b_c <= 0:
            raise TrafficDomainError("dt, a_c and b_c must be positive")
        if self.N_L < 1:
            raise TrafficDomainError("need at least one lane")
        if not self.v_min < self.v_max:
            raise TrafficDomainError("v_min must be below v_max")

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    @property
    def road_width(self) -> float:
        return self.N_L * self.lane_width


@dataclass
class VehicleState:
    id: int
    cls: str
    x: float
    y: float
    v: float
    psi: float = 0.0
    beta: float = 0.0
    lane: int = 0
    target_lane: int = 0
    v_r: float = 0.0
    length: float = 5.0
    crashed: bool = False


def step_kinematics(s: VehicleState, a: float, delta_fa: float, dt: float,
                    v_hardmax: float = 50.0) -> VehicleState:
    """One explicit-Euler step of the kinematic bicycle model."""
    for value in (s.x, s.y, s.v, s.psi, a, delta_fa, dt):
        if not math.isfinite(value):
            raise TrafficDomainError(f"non-finite input {value}")
    if dt <= 0:
        raise TrafficDomainError("dt must be positive")
    delta_fa = min(max(delta_fa, -MAX_STEERING), MAX_STEERING)
    beta = math.atan(math.tan(delta_fa) / 2.0)
    heading = s.psi + beta
    x = s.x + s.v * math.cos(heading) * dt
    y = s.y + s.v * math.sin(heading) * dt
    psi = s.psi + s.v / (s.length / 2.0) * math.sin(beta) * dt
    v = min(max(s.v + a * dt, 0.0), v_hardmax)
    return replace(s, x=x, y=y, v=v, psi=psi, beta=beta)


def target_heading_rate(s: VehicleState, y_lane: float, cfg: TrafficConfig,
                        psi_lane: float = 0.0) -> float:
    if s.v <= 0:
        return 0.0
    lateral = cfg.K_y * (y_lane - s.y) / s.v
    lateral = min(max(lateral, -1.0), 1.0)
    return cfg.K_psi * (psi_lane + math.asin(lateral) - s.psi)


def steering_for_heading_rate(psi_rate: float, v: float, length: float) -> float:
    """Front-wheel angle whose slip produces ``psi_rate`` at speed ``v``."""
    if v <= 0:
        return 0.0
    sin_beta = min(max(psi_rate * (length / 2.0) / v, -1.0), 1.0)
    beta = math.asin(sin_beta)
    delta = math.atan(2.0 * math.tan(beta))
    return min(max(delta, -MAX_STEERING), MAX_STEERING)


def idm_acceleration(v: float, dv: float, d: float, cfg: TrafficConfig) -> float:
    """IDM acceleration; ``dv = v - v_leader`` and ``d`` is the bumper gap (inf if free)."""
    if d <= 0:
        return -B_HARD
    free = (abs(v) / cfg.v0) ** cfg.delta_a
    if math.isinf(d):
        interaction = 0.0
    else:
        desired = cfg.d0 + max(0.0, cfg.T_gap * v + v * dv / (2.0 * math.sqrt(cfg.a_c * cfg.b_c)))
        interaction = (desired / d) ** 2
    a = cfg.a_c * (1.0 - free - interaction)
    return min(max(a, -B_HARD), cfg.a_c)


def target_longitudinal_accel(s: VehicleState, cfg: TrafficConfig) -> float:
    a = cfg.K0_v * (s.v_r - s.v)
    return min(max(a, A_TARGET_MIN), A_TARGET_MAX)


def gap_between(follower: VehicleState, leader: VehicleState, road_length: float) -> float:
    """Bumper-to-bumper gap from follower to leader along the ring."""
    ahead = (leader.x - follower.x) % road_length
    return ahead - (leader.length + follower.length) / 2.0


def _idm_for(follower: Optional[VehicleState], leader: Optional[VehicleState],
             cfg: TrafficConfig) -> float:
    if follower is None:
        return 0.0
    if leader is None:
        return idm_acceleration(follower.v, 0.0, math.inf, cfg)
    d = gap_between(follower, leader, cfg.road_length)
    return idm_acceleration(follower.v, follower.v - leader.v, d, cfg)


def neighbours_in_lane(ego: VehicleState, vehicles: Iterable[VehicleState], lane: int,
                       road_length: float) -> Tuple[Optional[VehicleState], Optional[VehicleState]]:
    """Closest leader and follower of ``ego`` in ``lane`` (ring distance)."""
    leader = follower = None
    best_ahead = best_behind = math.inf
    for other in vehicles:
        if other.id == ego.id or other.lane != lane:
            continue
        ahead = (other.x - ego.x) % road_length
        behind = road_length - ahead
        if ahead <= behind:
            if ahead < best_ahead:
                best_ahead, leader = ahead, other
        elif behind < best_behind:
            best_behind, follower = behind, other
    return leader, follower


Neighbours = Dict[int, Tuple[Optional[VehicleState], Optional[VehicleState]]]


def mobil_incentive(ego: VehicleState, neighbours: Neighbours, lane: int,
                    cfg: TrafficConfig) -> Tuple[bool, float]:
    """Safety verdict and incentive for moving ``ego`` into ``lane``."""
    old_leader, old_follower = neighbours[ego.lane]
    new_leader, new_follower = neighbours[lane]
    a_j = _idm_for(ego, old_leader, cfg)
    a_j_new = _idm_for(ego, new_leader, cfg)
    a_n = _idm_for(new_follower, new_leader, cfg)
    a_n_new = _idm_for(new_follower, ego, cfg)
    a_o = _idm_for(old_follower, ego, cfg)
    a_o_new = _idm_for(old_follower, old_leader, cfg)
    safe = new_follower is None or a_n_new >= -cfg.b_safe
    incentive = a_j_new - a_j + cfg.p_polite * (a_o_new - a_o + a_n_new - a_n)
    return safe, incentive


def mobil_decision(ego: VehicleState, neighbours: Neighbours, cfg: TrafficConfig) -> str:
    """Lane-change verdict for ``ego``.

    ``neighbours`` maps lane index to its ``(leader, follower)`` pair relative
    to ``ego``; it must contain ``ego.lane`` and any adjacent lane to consider.
    """
    best, best_gain = STAY, -math.inf
    # right first so that equal incentives resolve towards the right lane
    for direction, lane in ((RIGHT, ego.lane + 1), (LEFT, ego.lane - 1)):
        if lane < 0 or lane >= cfg.N_L or lane not in neighbours:
            continue
        safe, gain = mobil_incentive(ego, neighbours, lane, cfg)
        if safe and gain >= cfg.da_th and gain > best_gain:
            best, best_gain = direction, gain
    return best


def _overlap(a: VehicleState, b: VehicleState, cfg: TrafficConfig) -> bool:
    dx = abs(a.x - b.x)
    dx = min(dx, cfg.road_length - dx)
    if dx >= (a.length + b.length) / 2.0:
        return False
    return a.lane == b.lane or abs(a.y - b.y) < 0.9 * cfg.lane_width


def detect_collisions(vehicles: List[VehicleState], cfg: TrafficConfig) -> Set[int]:
    """Ids of vehicles involved in any overlap; their ``crashed`` flags are set."""
    hit: Set[int] = set()
    for i, a in enumerate(vehicles):
        for b in vehicles[i + 1:]:
            if _overlap(a, b, cfg):
                hit.add(a.id)
                hit.add(b.id)
    for v in vehicles:
        if v.id in hit:
            v.crashed = True
    return hit


class Highway:
    """Mutable world state advancing all vehicles by ``cfg.dt`` per step."""

    def __init__(self, vehicles: List[VehicleState], cfg: TrafficConfig):
        self.vehicles = vehicles
        self.cfg = cfg

    @property
    def targets(self) -> List[VehicleState]:
        return [v for v in self.vehicles if v.cls == TARGET]

    def _surrounding_control(self, s: VehicleState) -> float:
        leader, _ = neighbours_in_lane(s, self.vehicles, s.lane, self.cfg.road_length)
        a = _idm_for(s, leader, self.cfg)
        return a

    def _lane_changes(self) -> None:
        cfg = self.cfg
        for s in self.vehicles:
            if s.cls != SURROUNDING or s.crashed:
                continue
            lanes = {s.lane}
            if s.lane > 0:
                lanes.add(s.lane - 1)
            if s.lane < cfg.N_L - 1:
                lanes.add(s.lane + 1)
            neighbours = {lane: neighbours_in_lane(s, self.vehicles, lane, cfg.road_length)
                          for lane in lanes}
            decision = mobil_decision(s, neighbours, cfg)
            if decision != STAY:
                s.lane += 1 if decision == RIGHT else -1
                s.target_lane = s.lane
                s.y = cfg.lane_center(s.lane)

    def step(self) -> Set[int]:
        """Advance the world by one ``dt``; returns ids of crashed vehicles."""
        cfg = self.cfg
        self._lane_changes()
        controls = []
        for s in self.vehicles:
            if s.crashed:
                controls.append((-B_HARD, 0.0))
            elif s.cls == TARGET:
                a = target_longitudinal_accel(s, cfg)
                rate = target_heading_rate(s, cfg.lane_center(s.target_lane), cfg)
                controls.append((a, steering_for_heading_rate(rate, s.v, s.length)))
            else:
                controls.append((self._surrounding_control(s), 0.0))
        new = []
        for s, (a, delta) in zip(self.vehicles, controls):
            n = step_kinematics(s, a, delta, cfg.dt, cfg.v_hardmax)
            n.x %= cfg.road_length
            if n.cls == TARGET:
                lane = int(n.y // cfg.lane_width)
                n.lane = min(max(lane, 0), cfg.N_L - 1)
            new.append(n)
        self.vehicles[:] = new
        return detect_collisions(self.vehicles, cfg)
