import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from vnetmorl.neural import OptimizerConfig, Parameters, QNetwork, NetworkSpec
from vnetmorl.oracles import value_iteration
from vnetmorl.replay import Batch, Transition
from vnetmorl.scalar import ScalarAgent, ScalarAgentConfig, scalarize, select_action, td_target
from vnetmorl.synthetic import REWARDS, one_hot


def table_q(table):
    """Tabular Q over one-hot states."""
    return lambda s: table[np.argmax(np.atleast_2d(s), axis=1)]


def test_scalarize():
    assert scalarize([0.7, 33.75]) == pytest.approx(34.45)
    assert scalarize([0.0, 0.0]) == 0.0
    r = np.random.default_rng(0).normal(size=(10, 2))
    np.testing.assert_array_equal(scalarize(r), r[:, 0] + r[:, 1])


def test_select_action_greedy_and_ties():
    row = np.zeros(15)
    row[7] = 1.0
    rng = np.random.default_rng(0)
    assert select_action(lambda s: row, None, 0.0, rng) == 7
    row = np.zeros(15)
    row[[2, 9]] = 5.0
    assert select_action(lambda s: row, None, 0.0, rng) == 2


def test_select_action_uniform_under_full_exploration():
    rng = np.random.default_rng(1)
    row = np.arange(15.0)
    draws = [select_action(lambda s: row, None, 1.0, rng) for _ in range(100_000)]
    assert stats.chisquare(np.bincount(draws, minlength=15)).pvalue > 0.01


def _batch(s, a, r, s2, term, n_states):
    eye = np.eye(n_states)
    return Batch(eye[s], np.asarray(a), np.column_stack([r, np.zeros(len(r))]), eye[s2], np.asarray(term))


def test_terminal_and_zero_discount_targets():
    qe = table_q(np.ones((2, 3)) * 5)
    b = _batch([0], [0], [2.0], [1], [True], 2)
    assert td_target(b, qe, qe, 0.9, "dqn")[0] == 2.0
    b = _batch([0, 1], [0, 1], [2.0, -1.0], [1, 0], [False, False], 2)
    np.testing.assert_array_equal(td_target(b, qe, qe, 0.0, "ddqn"), [2.0, -1.0])


def test_two_state_targets_by_hand():
    q_eval = np.array([[0.0, 1.0, 0.5], [2.0, 0.0, 3.0]])
    q_tgt = np.array([[4.0, 0.0, 1.0], [1.0, 5.0, 2.0]])
    b = _batch([0, 0], [1, 2], [1.0, 0.5], [0, 1], [False, False], 2)
    gamma = 0.5
    dqn = td_target(b, table_q(q_eval), table_q(q_tgt), gamma, "dqn")
    ddqn = td_target(b, table_q(q_eval), table_q(q_tgt), gamma, "ddqn")
    # s'=0: eval picks a=1 (target 0), target max 4; s'=1: eval picks a=2 (target 2), target max 5
    np.testing.assert_array_equal(dqn, [1.0 + 0.5 * 4.0, 0.5 + 0.5 * 5.0])
    np.testing.assert_array_equal(ddqn, [1.0 + 0.5 * 0.0, 0.5 + 0.5 * 2.0])
    # agreeing argmaxes give identical targets
    same = td_target(b, table_q(q_tgt), table_q(q_tgt), gamma, "ddqn")
    np.testing.assert_array_equal(same, dqn)


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1))
def test_ddqn_never_exceeds_dqn(seed):
    rng = np.random.default_rng(seed)
    qe, qt = rng.normal(size=(5, 15)), rng.normal(size=(5, 15))
    n = 20
    b = _batch(rng.integers(5, size=n), rng.integers(15, size=n), rng.normal(size=n),
               rng.integers(5, size=n), rng.random(n) < 0.2, 5)
    dqn = td_target(b, table_q(qe), table_q(qt), 0.99, "dqn")
    ddqn = td_target(b, table_q(qe), table_q(qt), 0.99, "ddqn")
    assert np.all(ddqn <= dqn)
    differs = np.argmax(qe[np.argmax(b.s_next, 1)], 1) != np.argmax(qt[np.argmax(b.s_next, 1)], 1)
    np.testing.assert_array_equal(ddqn < dqn, differs & ~b.terminal)


def test_config_validation():
    with pytest.raises(ValueError):
        ScalarAgentConfig(variant="sarsa")
    with pytest.raises(ValueError):
        ScalarAgentConfig(gamma=1.0)
    with pytest.raises(ValueError):
        ScalarAgentConfig(batch_size=0)


def _filled_agent(seed, cfg, copies=20):
    agent = ScalarAgent(2, 3, cfg, np.random.default_rng(seed))
    for (s, a), r in REWARDS.items():
        nxt = 1 if (s, a) == (0, 0) else s
        for _ in range(copies):
            agent.pool.push(Transition(one_hot(s), a, np.array(r), one_hot(nxt), (s, a) != (0, 0)))
    return agent


def _fixed_point(gamma):
    P = np.array([[1, 0, 0], [1, 1, 1]])
    R = np.array([[sum(REWARDS[(s, a)]) for a in range(3)] for s in range(2)])
    terminal = np.array([[False, True, True], [True, True, True]])
    return value_iteration(P, R, terminal, gamma)


@pytest.mark.parametrize("variant", ["dqn", "ddqn"])
@pytest.mark.parametrize("seed", range(3))
def test_converges_to_value_iteration_fixed_point(variant, seed):
    cfg = ScalarAgentConfig(variant=variant, gamma=0.9, batch_size=64, target_period=5, hidden=(32,),
                            optimizer=OptimizerConfig(learning_rate=0.1, optimizer="sgd"),
                            learning_starts=1, replay_capacity=200)
    agent = _filled_agent(seed, cfg)
    rng = np.random.default_rng(100 + seed)
    losses = [agent.train_step(rng) for _ in range(50)]
    assert all(loss >= 0 for loss in losses)
    np.testing.assert_allclose(agent.q(np.eye(2)), _fixed_point(0.9), atol=1e-2)


def test_zero_gradient_when_already_at_target():
    cfg = ScalarAgentConfig(gamma=0.9, batch_size=8, hidden=(4,), learning_starts=1,
                            optimizer=OptimizerConfig(learning_rate=0.1, optimizer="sgd"))
    agent = ScalarAgent(2, 3, cfg, np.random.default_rng(0))
    # zero weights: Q is the output bias, set to the terminal target of action 1
    spec = agent.q.spec
    agent.q.params = Parameters([np.zeros((2, 4)), np.zeros((4, 3))], [np.zeros(4), np.array([0.0, 0.6, 0.0])])
    agent.q_target = QNetwork(spec, agent.q.params.copy())
    for _ in range(8):
        agent.pool.push(Transition(one_hot(0), 1, np.array([0.6, 0.0]), one_hot(0), True))
    before = agent.q.params.copy()
    assert agent.train_step(np.random.default_rng(1)) == pytest.approx(0.0, abs=1e-24)
    for x, y in zip(before.arrays(), agent.q.params.arrays()):
        np.testing.assert_allclose(x, y, atol=1e-9)


def test_target_network_changes_only_at_period():
    cfg = ScalarAgentConfig(gamma=0.9, batch_size=16, target_period=7, hidden=(8,), learning_starts=1,
                            optimizer=OptimizerConfig(learning_rate=0.01))
    agent = _filled_agent(0, cfg)
    rng = np.random.default_rng(0)
    snapshot = agent.q_target.params.copy()
    for step in range(1, 22):
        agent.train_step(rng)
        same = all(np.array_equal(a, b) for a, b in zip(snapshot.arrays(), agent.q_target.params.arrays()))
        if step % 7 == 0:
            assert not same
            assert all(np.array_equal(a, b) for a, b in zip(agent.q.params.arrays(),
                                                            agent.q_target.params.arrays()))
            snapshot = agent.q_target.params.copy()
        else:
            assert same


def test_no_update_before_warm_up():
    cfg = ScalarAgentConfig(batch_size=64, hidden=(8,))
    agent = ScalarAgent(2, 3, cfg, np.random.default_rng(0))
    agent.pool.push(Transition(one_hot(0), 1, np.zeros(2), one_hot(0), True))
    assert agent.train_step(np.random.default_rng(0)) is None


def test_training_is_deterministic():
    def run():
        cfg = ScalarAgentConfig(gamma=0.9, batch_size=16, target_period=5, hidden=(8,), learning_starts=1)
        agent = _filled_agent(3, cfg)
        rng = np.random.default_rng(4)
        return [agent.train_step(rng) for _ in range(20)], agent.q.params.arrays()
    (la, pa), (lb, pb) = run(), run()
    assert la == lb and all(np.array_equal(a, b) for a, b in zip(pa, pb))


def test_greedy_policy_is_pure_for_frozen_network():
    net = QNetwork.create(NetworkSpec(4, (8,), 15), np.random.default_rng(0))
    s = np.random.default_rng(1).normal(size=4)
    picks = {select_action(net, s, 0.0, np.random.default_rng(k)) for k in range(20)}
    assert len(picks) == 1
