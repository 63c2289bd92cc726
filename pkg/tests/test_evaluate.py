"""Evaluation-harness checks: distribution constructors, k-shot protocol
determinism and equivalences, the random baseline, and the view export."""

from __future__ import annotations

import numpy as np
import pytest

from rldistill import distill, env as envmod, evaluate, nets, rng as rng_mod
from rldistill.errors import ContractViolation


def small_env():
    return envmod.CartPoleConfig(n_dims=1, max_steps=40, rollout_truncation=20)


def small_dataset(seed=3, env=None):
    env = env or small_env()
    return distill.initialize_dataset(env, k=2, seed=seed)


def test_make_distribution_variants():
    cfg = envmod.CartPoleConfig(n_dims=2)
    lam = evaluate.make_distribution("lambda", cfg, base_seed=1)
    assert lam.init.kind == nets.ORTHOGONAL
    assert lam.init.final_sigma == 0.01
    assert lam.base_arch.input_dim == 8 and lam.base_arch.output_dim == 4

    ortho1 = evaluate.make_distribution("ortho-sigma1", cfg, base_seed=1)
    assert ortho1.init.hidden_sigma == 1.0 and ortho1.init.final_sigma == 1.0

    xe = evaluate.make_distribution("xe", cfg, base_seed=1)
    assert xe.init.kind == nets.XAVIER_NORMAL
    assert xe.init.final_sigma == 0.01  # sigma pattern mirrors lambda

    rl = evaluate.make_distribution("random-l", cfg, base_seed=1)
    assert rl.arch_mode == nets.RANDOM_DEPTH
    assert rl.depth_choices == (1, 2, 3, 4, 5, 6)

    rh = evaluate.make_distribution("random-h", cfg, base_seed=1)
    assert rh.arch_mode == nets.RANDOM_HIDDEN_WIDTH
    assert rh.width_choices == (32, 64, 128, 256)

    with pytest.raises(ContractViolation):
        evaluate.make_distribution("mystery", cfg, base_seed=1)


def test_kshot_eval_report_shape_and_determinism():
    ds = small_dataset()
    protocol = evaluate.EvalProtocol(n_agents=3, n_episodes=4, seed=9)
    a = evaluate.kshot_eval(ds, protocol)
    b = evaluate.kshot_eval(ds, protocol)
    assert a.rewards.shape == (3, 4)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    assert 1.0 <= a.grand_mean <= ds.env.max_steps
    # evaluation is a pure read
    np.testing.assert_array_equal(ds.states, small_dataset().states)


def test_kshot_eval_matches_manual_single_agent_single_episode():
    ds = small_dataset(seed=5)
    protocol = evaluate.EvalProtocol(n_agents=1, n_episodes=1, distribution="lambda", seed=21)
    report = evaluate.kshot_eval(ds, protocol)

    dist = evaluate.make_distribution(
        "lambda", ds.env, rng_mod.stage_seed(21, "eval-agents")
    )
    params = nets.sample_learner(dist, draw=0)
    trained, _ = distill.inner_train(params, ds)
    agent_seed = rng_mod.stage_seed(21, "eval-agent-episodes", 0)
    ep_seed = rng_mod.stage_seed(agent_seed, "episode", 0)
    manual = evaluate.rollout_reward(ds.env, trained, ds.env.max_steps, ep_seed)
    assert report.rewards[0, 0] == manual


def test_kshot_eval_worker_count_invariant():
    ds = small_dataset(seed=6)
    protocol = evaluate.EvalProtocol(n_agents=4, n_episodes=2, seed=13)
    serial = evaluate.kshot_eval(ds, protocol, workers=1)
    parallel = evaluate.kshot_eval(ds, protocol, workers=2)
    np.testing.assert_array_equal(serial.rewards, parallel.rewards)


def test_train_on_synthetic_matches_inner_train_bitwise():
    ds = small_dataset(seed=7)
    params = nets.sample_learner(
        evaluate.make_distribution("lambda", ds.env, base_seed=4), draw=2
    )
    a = evaluate.train_on_synthetic(params, ds)
    b, _ = distill.inner_train(params, ds)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
    for ba, bb in zip(a.biases, b.biases):
        np.testing.assert_array_equal(ba, bb)


def test_untrained_dataset_scores_near_random():
    env = envmod.CartPoleConfig(n_dims=1)
    ds = distill.initialize_dataset(env, k=2, seed=8)
    protocol = evaluate.EvalProtocol(n_agents=20, n_episodes=20, seed=31)
    report = evaluate.kshot_eval(ds, protocol)
    assert 10.0 <= report.grand_mean <= 40.0


def test_random_baseline_band_and_single_episode():
    env = envmod.CartPoleConfig(n_dims=1)
    report = evaluate.random_baseline(env, episodes=2000, seed=17)
    assert 15.0 <= report.grand_mean <= 30.0
    one = evaluate.random_baseline(env, episodes=1, seed=17)
    assert one.rewards.shape == (1, 1)


def test_random_baseline_deterministic():
    env = envmod.CartPoleConfig(n_dims=2)
    a = evaluate.random_baseline(env, episodes=50, seed=23)
    b = evaluate.random_baseline(env, episodes=50, seed=23)
    np.testing.assert_array_equal(a.rewards, b.rewards)


def test_pooled_std_definition():
    report = evaluate.EvalReport(
        rewards=np.array([[1.0, 3.0], [5.0, 7.0]]), distribution_id="x"
    )
    assert report.grand_mean == 4.0
    assert report.pooled_std == pytest.approx(np.std([1, 3, 5, 7]))
    assert report.agent_mean_std == pytest.approx(np.std([2.0, 6.0]))


def test_export_dataset_view():
    env = envmod.CartPoleConfig(n_dims=1)
    ds = distill.initialize_dataset(env, k=3, seed=9)
    header, rows = evaluate.export_dataset_view(ds)
    assert len(rows) == 3
    assert header[0] == "instance"
    assert len(header) == 1 + 4 + 2 + 2
    for i, row in enumerate(rows):
        assert row[0] == i
        soft = row[-2:]
        assert sum(soft) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_array_equal(row[1:5], ds.states[i])


def test_eval_protocol_validation():
    with pytest.raises(ContractViolation):
        evaluate.EvalProtocol(n_agents=0)
    with pytest.raises(ContractViolation):
        evaluate.EvalProtocol(n_episodes=0)


def test_serialized_dataset_reproduces_eval_bitwise():
    ds = small_dataset(seed=11)
    reloaded = distill.dataset_from_text(distill.dataset_to_text(ds))
    protocol = evaluate.EvalProtocol(n_agents=3, n_episodes=3, seed=41)
    a = evaluate.kshot_eval(ds, protocol)
    b = evaluate.kshot_eval(reloaded, protocol)
    np.testing.assert_array_equal(a.rewards, b.rewards)
