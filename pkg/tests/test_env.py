import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vnetmorl.channel import RBS, TBS
from vnetmorl.env import (N_ACTIONS, TELE_MAX_RATE, TELE_VACANT, TELE_WEIGHTED, TRAN_FASTER,
                          TRAN_IDLE, TRAN_LEFT, ConfigurationError, EnvError, InstanceConfig,
                          INSTANCE_PRESETS, RewardConfig, VehicularEnv, choose_bs, decode_action,
                          encode_action, telecom_reward, transport_reward)
from vnetmorl.traffic import TrafficConfig

DESK = INSTANCE_PRESETS["desk"]
TRAFFIC = TrafficConfig()
REWARD = RewardConfig()


def test_action_encoding_round_trip():
    seen = set()
    for tele in range(3):
        for tran in range(5):
            flat = encode_action(tele, tran)
            assert decode_action(flat) == (tele, tran)
            seen.add(flat)
    assert seen == set(range(N_ACTIONS))
    with pytest.raises(EnvError):
        decode_action(15)
    with pytest.raises(EnvError):
        encode_action(3, 0)


def test_transport_reward_cases():
    # fastest, rightmost, on road: 0.4 + 0.1 + 0.2
    assert transport_reward(30.0, 4, False, True, TRAFFIC, REWARD) == pytest.approx(0.7)
    assert transport_reward(20.0, 0, False, True, TRAFFIC, REWARD) == pytest.approx(0.2)
    assert transport_reward(30.0, 4, True, True, TRAFFIC, REWARD) == 0.0
    assert transport_reward(25.0, 2, False, False, TRAFFIC, REWARD) == pytest.approx(0.25)


def test_telecom_reward_cases():
    assert telecom_reward(1e8, 0.0, REWARD) == pytest.approx(45.0)
    assert telecom_reward(1e8, 0.5, REWARD) == pytest.approx(22.5)
    assert telecom_reward(1e8, 2.0, REWARD) == 0.0


def test_reward_config_validation():
    with pytest.raises(ConfigurationError):
        RewardConfig(c2=0.3)


def _brute_weighted(rates, kinds, quotas, loads, current):
    best, best_val = None, -math.inf
    order = ([current] if current is not None else []) + list(range(len(rates)))
    for i in order:
        mu = 0.0 if i == current else (0.1 if kinds[i] == RBS else 0.5)
        div = min(quotas[i], loads[i]) if loads[i] > 0 else 1
        val = rates[i] / div * (1 - mu)
        if val > best_val:
            best, best_val = i, val
    return best


@settings(max_examples=200)
@given(st.integers(0, 2 ** 32 - 1))
def test_weighted_selection_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    rates = rng.choice([0.0, 1e6, 5e7, 1e8, 3e8], size=n)
    kinds = [RBS if k else TBS for k in rng.integers(0, 2, size=n)]
    quotas = rng.integers(1, 6, size=n)
    loads = rng.integers(0, 8, size=n)
    current = int(rng.integers(n)) if rng.random() < 0.8 else None
    if current is not None:
        loads[current] = max(loads[current], 1)
    assert choose_bs(TELE_WEIGHTED, rates, kinds, quotas, loads, current) == \
        _brute_weighted(rates, kinds, quotas, loads, current)


def test_selection_rules():
    kinds = [RBS, TBS, TBS]
    quotas = np.array([5, 1, 10])
    rates = np.array([1e8, 4e8, 2e8])
    loads = np.array([1, 1, 0])  # this AV sits on BS 0, BS 1 is full
    assert choose_bs(TELE_MAX_RATE, rates, kinds, quotas, loads, 0) == 1
    assert choose_bs(TELE_VACANT, rates, kinds, quotas, loads, 0) == 2
    # every alternative full: fall back to the best load-weighted rate
    full = np.array([2, 1, 10])
    assert choose_bs(TELE_VACANT, rates, kinds, np.array([1, 1, 10]), full, 0) == 1
    # equal values keep the current station
    assert choose_bs(TELE_MAX_RATE, np.array([1e8, 1e8]), [RBS, RBS], np.array([5, 5]),
                     np.array([0, 1]), 1) == 1


def test_reset_is_seeded_and_observations_bounded():
    a, b = VehicularEnv(DESK), VehicularEnv(DESK)
    oa, ob = a.reset(11), b.reset(11)
    assert all(np.array_equal(x, y) for x, y in zip(oa, ob))
    assert len(oa) == DESK.M_1 and oa[0].shape == (a.obs_dim,)
    assert np.all(np.abs(np.concatenate(oa)) <= 1.0)
    assert not np.array_equal(oa[0], VehicularEnv(DESK).reset(12)[0])


def test_observations_rotate_ego_first():
    env = VehicularEnv(DESK)
    obs = env.reset(3)
    base = env.state_matrix()
    for j, o in enumerate(obs):
        assert np.array_equal(o.reshape(-1, 6)[0], base[j])
        assert np.array_equal(o, np.roll(base, -j, axis=0).ravel())


def test_surrounding_rows_extend_observation():
    inst = InstanceConfig("x", n_R=2, n_T=5, M_1=2, M_2=5, spawn_length=80.0, surrounding_rows=3)
    env = VehicularEnv(inst)
    obs = env.reset(0)
    assert obs[0].shape == ((2 + 3) * 6,)
    assert np.all(obs[0].reshape(-1, 6)[2:, 4] == 1.0)


def test_step_contract_errors():
    env = VehicularEnv(DESK)
    with pytest.raises(EnvError):
        env.step([0, 0])
    env.reset(0)
    with pytest.raises(EnvError):
        env.step([0])
    with pytest.raises(EnvError):
        env.step([0, 99])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_rollout_invariants(seed):
    env = VehicularEnv(DESK)
    env.reset(seed)
    rng = np.random.default_rng(seed)
    expected = np.zeros((DESK.M_1, 2))
    disc, done = 1.0, False
    while not done:
        _, rewards, done, info = env.step(list(rng.integers(0, N_ACTIONS, size=DESK.M_1)))
        assert np.all((rewards[:, 0] >= 0) & (rewards[:, 0] <= 1))
        assert np.all(rewards[:, 1] >= 0)
        assert sum(b.load for b in env.stations) == DESK.M_1
        assert all(env.stations[i].load >= 1 for i in info.serving)
        expected += disc * rewards
        disc *= env.gamma
    assert env.t <= DESK.T_hl
    np.testing.assert_allclose(env.returns, expected, rtol=1e-12)
    rec = env.episode_metrics(0)
    assert rec.R_tran == pytest.approx(expected[:, 0].mean())
    assert 0.0 <= rec.delta_e < 1.0 and 0.0 <= rec.xi_e <= 1.0


class ScriptedRates:
    """Replaces the random channel with a fixed schedule of rate matrices."""

    def __init__(self, schedule):
        self.schedule = schedule
        self.calls = 0

    def __call__(self, r, expected=False):
        if expected:
            return np.full(r.shape, 1e8)
        out = self.schedule[min(self.calls, len(self.schedule) - 1)]
        self.calls += 1
        return np.array(out, dtype=float)


def _scripted_env(schedule, T_hl=10):
    inst = InstanceConfig("script", n_R=2, n_T=0, M_1=2, M_2=0, T_hl=T_hl, spawn_length=200.0,
                          spawn_min_gap=60.0)
    env = VehicularEnv(inst)
    env._rates = ScriptedRates(schedule)
    env.reset(5)
    # keep both AVs well apart in separate lanes
    a, b = env.highway.targets
    a.x, a.lane, a.target_lane, a.y = 100.0, 0, 0, env.traffic.lane_center(0)
    b.x, b.lane, b.target_lane, b.y = 400.0, 4, 4, env.traffic.lane_center(4)
    a.v = b.v = a.v_r = b.v_r = 25.0
    return env


def test_metrics_on_scripted_full_episode():
    # reset picks BS 0 for both; rows give (AV0, AV1) rates per step
    schedule = [
        [[2e8, 1e8], [2e8, 1e8]],   # reset
        [[1e8, 3e8], [2e8, 1e8]],   # step 1: AV0 moves to BS 1
        [[1e8, 3e8], [2e8, 1e8]],   # step 2: stays
        [[4e8, 1e8], [1e8, 4e8]],   # step 3: both switch
        [[4e8, 1e8], [1e8, 4e8]],
    ]
    env = _scripted_env(schedule, T_hl=10)
    assert env.serving == [0, 0]
    idle_max_rate = encode_action(TELE_MAX_RATE, TRAN_IDLE)
    done, steps = False, 0
    while not done:
        _, _, done, info = env.step([idle_max_rate] * 2)
        steps += 1
    assert steps == 10 and info.handovers == [2, 1]
    rec = env.episode_metrics(0)
    assert rec.delta_e == 0.0
    assert rec.xi_e == pytest.approx((2 / 10 + 1 / 10) / 2)


def test_metrics_on_forced_early_termination():
    schedule = [
        [[2e8, 1e8], [2e8, 1e8]],
        [[1e8, 3e8], [1e8, 3e8]],   # step 1: both switch
        [[4e8, 1e8], [1e8, 3e8]],   # step 2: AV0 switches back
    ]
    env = _scripted_env(schedule, T_hl=20)
    action = encode_action(TELE_MAX_RATE, TRAN_IDLE)
    for _ in range(3):
        _, _, done, _ = env.step([action] * 2)
        assert not done
    # drive AV1 into AV0's spot
    a, b = env.highway.targets
    b.x, b.y, b.lane, b.target_lane = a.x, a.y, a.lane, a.lane
    _, rewards, done, info = env.step([action] * 2)
    assert done and all(info.collided) and env.t == 4
    assert rewards[0, 0] == 0.0
    rec = env.episode_metrics(0)
    assert rec.delta_e == pytest.approx(1 - 4 / 20)
    assert info.handovers == [2, 1]
    assert rec.xi_e == pytest.approx((2 / 4 + 1 / 4) / 2)
    with pytest.raises(EnvError):
        env.step([action] * 2)


def test_driving_actions_update_targets():
    env = _scripted_env([[[2e8, 1e8], [2e8, 1e8]]])
    a, b = env.highway.targets
    env.step([encode_action(TELE_MAX_RATE, TRAN_FASTER), encode_action(TELE_MAX_RATE, TRAN_LEFT)])
    assert a.v_r == 30.0 and b.target_lane == 3
    env.step([encode_action(TELE_MAX_RATE, TRAN_FASTER)] * 2)
    assert a.v_r == 30.0  # already at the top of the band


def test_instance_validation():
    with pytest.raises(ConfigurationError):
        InstanceConfig(M_1=0)
    with pytest.raises(ConfigurationError):
        InstanceConfig(n_R=0, n_T=0)
    with pytest.raises(ConfigurationError):
        VehicularEnv(InstanceConfig(M_1=3, M_2=200, spawn_length=50.0)).reset(0)
