import math
from dataclasses import replace

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vnetmorl.traffic import (LEFT, RIGHT, STAY, SURROUNDING, TARGET, Highway, TrafficConfig,
                              TrafficDomainError, VehicleState, detect_collisions, idm_acceleration,
                              mobil_decision, mobil_incentive, neighbours_in_lane, step_kinematics,
                              steering_for_heading_rate, target_heading_rate, target_longitudinal_accel)

CFG = TrafficConfig()


def car(i, x, lane, v=20.0, cls=SURROUNDING, **kw):
    return VehicleState(i, cls, x, CFG.lane_center(lane), v, lane=lane, target_lane=lane, v_r=v, **kw)


def test_straight_line_step():
    s = step_kinematics(car(0, 100.0, 2), 0.0, 0.0, 1 / 15)
    assert s.x == pytest.approx(100.0 + 4 / 3, abs=1e-12)
    assert s.y == CFG.lane_center(2)
    assert s.beta == 0.0


def test_step_matches_formula_oracle():
    s0 = VehicleState(0, TARGET, 10.0, 6.0, 20.0, psi=0.1)
    s1 = step_kinematics(s0, 1.0, 0.2, 1 / 15)
    with mp.workdps(40):
        beta = mp.atan(mp.tan(mp.mpf("0.2")) / 2)
        dt = mp.mpf(1) / 15
        x = 10 + 20 * mp.cos(mp.mpf("0.1") + beta) * dt
        y = 6 + 20 * mp.sin(mp.mpf("0.1") + beta) * dt
        psi = mp.mpf("0.1") + 20 / mp.mpf("2.5") * mp.sin(beta) * dt
    assert s1.beta == pytest.approx(float(beta), rel=1e-14)
    assert s1.x == pytest.approx(float(x), rel=1e-14)
    assert s1.y == pytest.approx(float(y), rel=1e-14)
    assert s1.psi == pytest.approx(float(psi), rel=1e-14)
    assert s1.v == pytest.approx(20 + 1 / 15)


def test_speed_clamps_and_domain_errors():
    assert step_kinematics(car(0, 0.0, 0, v=0.1), -5.0, 0.0, 1.0).v == 0.0
    assert step_kinematics(car(0, 0.0, 0, v=49.9), 5.0, 0.0, 1.0).v == 50.0
    with pytest.raises(TrafficDomainError):
        step_kinematics(car(0, 0.0, 0), float("nan"), 0.0, 1 / 15)
    with pytest.raises(TrafficDomainError):
        step_kinematics(car(0, 0.0, 0), 0.0, 0.0, 0.0)


@settings(max_examples=30)
@given(st.floats(0.0, 40.0), st.floats(-0.5, 0.5), st.integers(1, 200))
def test_speed_constant_without_acceleration(v, psi, steps):
    s = VehicleState(0, TARGET, 0.0, 8.0, v, psi=psi)
    for _ in range(steps):
        s = step_kinematics(s, 0.0, 0.0, 1 / 15)
    assert s.v == v


def test_heading_rate():
    aligned = car(0, 0.0, 1, cls=TARGET)
    assert target_heading_rate(aligned, CFG.lane_center(1), CFG) == 0.0
    s = VehicleState(0, TARGET, 0.0, 4.0, 20.0)
    expected = 5.0 * math.asin((5 / 3) * 2.0 / 20.0)
    assert target_heading_rate(s, 6.0, CFG) == pytest.approx(expected, rel=1e-14)
    assert target_heading_rate(replace(s, v=0.0), 6.0, CFG) == 0.0


def test_steering_reproduces_heading_rate():
    s = VehicleState(0, TARGET, 0.0, 4.0, 20.0)
    rate = 0.3
    delta = steering_for_heading_rate(rate, s.v, s.length)
    s1 = step_kinematics(s, 0.0, delta, 1.0)
    assert (s1.psi - s.psi) == pytest.approx(rate, rel=1e-12)


def test_idm_reference_cases():
    assert idm_acceleration(30.0, 0.0, math.inf, CFG) == pytest.approx(0.0, abs=1e-15)
    assert idm_acceleration(0.0, 0.0, math.inf, CFG) == CFG.a_c
    d_hat = 10 + max(0.0, 1.5 * 20 + 20 * 5 / (2 * math.sqrt(3 * 5)))
    expected = 3 * (1 - (20 / 30) ** 4 - (d_hat / 30) ** 2)
    assert idm_acceleration(20.0, 5.0, 30.0, CFG) == pytest.approx(max(expected, -5.0))
    # mild case where the clamp does not bind
    d_hat = 10 + 1.5 * 20
    expected = 3 * (1 - (20 / 30) ** 4 - (d_hat / 80) ** 2)
    assert idm_acceleration(20.0, 0.0, 80.0, CFG) == pytest.approx(expected, rel=1e-14)
    assert idm_acceleration(20.0, 0.0, 0.0, CFG) == -5.0


def test_idm_equilibrium_gap():
    v_lead = 20.0
    d_star = (CFG.d0 + CFG.T_gap * v_lead) / math.sqrt(1 - (v_lead / CFG.v0) ** CFG.delta_a)
    leader = car(1, 120.0, 0, v=v_lead)
    follower = car(0, 0.0, 0, v=v_lead)
    for _ in range(15 * 120):
        d = leader.x - follower.x - leader.length
        a = idm_acceleration(follower.v, follower.v - leader.v, d, CFG)
        follower = step_kinematics(follower, a, 0.0, CFG.dt)
        leader = replace(leader, x=leader.x + v_lead * CFG.dt)
    gap = leader.x - follower.x - leader.length
    assert abs(gap - d_star) / d_star < 0.02


def test_target_longitudinal_accel():
    s = car(0, 0.0, 0, cls=TARGET)
    assert target_longitudinal_accel(s, CFG) == 0.0
    assert target_longitudinal_accel(replace(s, v_r=30.0), CFG) == 3.0
    assert target_longitudinal_accel(replace(s, v_r=10.0), CFG) == -5.0


def _settling_time(v0, v_r, tol=0.02):
    s = replace(car(0, 0.0, 0, v=v0, cls=TARGET), v_r=v_r)
    for k in range(1, 15 * 10):
        s = step_kinematics(s, target_longitudinal_accel(s, CFG), 0.0, CFG.dt)
        if abs(s.v - v_r) <= tol * abs(v_r - v0):
            return k * CFG.dt
    return math.inf


def test_speed_setpoint_settles_within_a_second():
    # small steps never hit the acceleration clamp
    assert _settling_time(20.0, 20.5) <= 1.0
    assert _settling_time(20.0, 19.5) <= 1.0
    # full action steps spend extra time at the clamp first
    assert _settling_time(20.0, 25.0) <= 5.0 / 3.0 + 1.0
    assert _settling_time(25.0, 20.0) <= 1.0 + 1.0


def test_mobil_no_gain_means_stay():
    ego = car(0, 100.0, 2, v=30.0)
    neighbours = {1: (None, None), 2: (None, None), 3: (None, None)}
    assert mobil_decision(ego, neighbours, CFG) == STAY


def test_mobil_safety_veto():
    ego = car(0, 100.0, 2, v=20.0)
    blocker = car(1, 115.0, 2, v=10.0)  # slow leader makes leaving attractive
    tailgater = car(2, 95.0, 1, v=30.0)  # fast follower right behind in lane 1
    neighbours = {2: (blocker, None), 1: (None, tailgater)}
    safe, gain = mobil_incentive(ego, neighbours, 1, CFG)
    assert gain > CFG.da_th and not safe
    assert mobil_decision(ego, neighbours, CFG) == STAY


def test_mobil_three_vehicle_scene_matches_hand_evaluation():
    ego = car(0, 100.0, 2, v=20.0)
    slow = car(1, 125.0, 2, v=12.0)
    far_follower = car(2, 40.0, 3, v=20.0)
    neighbours = {2: (slow, None), 3: (None, far_follower), 1: (None, None)}

    def gap(f, l):
        return l.x - f.x - (l.length + f.length) / 2

    a_j = idm_acceleration(20.0, 8.0, gap(ego, slow), CFG)
    a_j_free = idm_acceleration(20.0, 0.0, math.inf, CFG)
    a_n = idm_acceleration(20.0, 0.0, math.inf, CFG)
    a_n_new = idm_acceleration(20.0, 0.0, gap(far_follower, ego), CFG)
    incentive_right = a_j_free - a_j + CFG.p_polite * (a_n_new - a_n)
    incentive_left = a_j_free - a_j
    assert a_n_new >= -CFG.b_safe
    assert mobil_incentive(ego, neighbours, 3, CFG)[1] == pytest.approx(incentive_right)
    assert mobil_incentive(ego, neighbours, 1, CFG)[1] == pytest.approx(incentive_left)
    expected = RIGHT if incentive_right >= incentive_left else LEFT
    if max(incentive_right, incentive_left) < CFG.da_th:
        expected = STAY
    assert mobil_decision(ego, neighbours, CFG) == expected


def test_mobil_tie_goes_right():
    ego = car(0, 100.0, 2, v=20.0)
    slow = car(1, 125.0, 2, v=12.0)
    neighbours = {2: (slow, None), 1: (None, None), 3: (None, None)}
    assert mobil_decision(ego, neighbours, CFG) == RIGHT


def _brute_collisions(vs, cfg):
    hit = set()
    for a in vs:
        for b in vs:
            if a.id >= b.id:
                continue
            dx = abs(a.x - b.x)
            dx = min(dx, cfg.road_length - dx)
            lateral = a.lane == b.lane or abs(a.y - b.y) < 0.9 * cfg.lane_width
            if dx < (a.length + b.length) / 2 and lateral:
                hit |= {a.id, b.id}
    return hit


def test_collision_examples():
    assert detect_collisions([car(0, 0.0, 1), car(1, 100.0, 1)], CFG) == set()
    pair = [car(0, 0.0, 1), car(1, 4.0, 1)]
    assert detect_collisions(pair, CFG) == {0, 1}
    assert all(v.crashed for v in pair)
    # wrap-around on the ring
    assert detect_collisions([car(0, 1.0, 0), car(1, CFG.road_length - 2.0, 0)], CFG) == {0, 1}


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1))
def test_collisions_match_brute_force_and_are_symmetric(seed):
    rng = np.random.default_rng(seed)
    vs = []
    for i in range(12):
        lane = int(rng.integers(CFG.N_L))
        v = car(i, float(rng.uniform(0, 80)), lane)
        v.y += float(rng.uniform(-2, 2))
        vs.append(v)
    expected = _brute_collisions(vs, CFG)
    assert detect_collisions(list(reversed(vs)), CFG) == expected


def test_neighbours_on_ring():
    ego = car(0, 5.0, 1)
    ahead = car(1, 50.0, 1)
    behind = car(2, CFG.road_length - 20.0, 1)
    other_lane = car(3, 10.0, 2)
    leader, follower = neighbours_in_lane(ego, [ego, ahead, behind, other_lane], 1, CFG.road_length)
    assert leader is ahead and follower is behind


def _random_highway(seed, n=10):
    rng = np.random.default_rng(seed)
    xs = np.sort(rng.choice(np.arange(0, 300, 12.0), size=n, replace=False))
    vs = [car(i, float(x), int(rng.integers(CFG.N_L)), v=float(rng.uniform(20, 30)),
              cls=TARGET if i < 2 else SURROUNDING) for i, x in enumerate(xs)]
    return Highway(vs, CFG)


def test_highway_is_deterministic():
    a, b = _random_highway(4), _random_highway(4)
    for _ in range(60):
        a.step()
        b.step()
    assert [(v.x, v.y, v.v, v.psi, v.lane) for v in a.vehicles] == [(v.x, v.y, v.v, v.psi, v.lane) for v in b.vehicles]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_accepted_lane_changes_are_safe(seed):
    hw = _random_highway(seed, n=14)
    for _ in range(20):
        # lane changes are decided one vehicle at a time, so replay them in order
        working = [replace(v) for v in hw.vehicles]
        hw.step()
        after = {v.id: v.lane for v in hw.vehicles}
        for v in working:
            if v.cls != SURROUNDING or v.crashed or after[v.id] == v.lane:
                continue
            new_lane = after[v.id]
            _, follower = neighbours_in_lane(v, working, new_lane, CFG.road_length)
            if follower is not None:
                gap = (v.x - follower.x) % CFG.road_length - (v.length + follower.length) / 2
                a = idm_acceleration(follower.v, follower.v - v.v, gap, CFG)
                assert a >= -CFG.b_safe
            v.lane = new_lane
            v.y = CFG.lane_center(new_lane)


def test_config_validation():
    with pytest.raises(TrafficDomainError):
        TrafficConfig(dt=0.0)
    with pytest.raises(TrafficDomainError):
        TrafficConfig(v_min=30.0, v_max=20.0)
