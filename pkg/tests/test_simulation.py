import math

import numpy as np
import pytest
from oracles import uniform_policy_regret

from genthompson import (
    Environment,
    ExpertSet,
    LossSpec,
    RunConfig,
    arm_distribution,
    init_weights,
    update_weights,
)
from genthompson import simulation as sim
from genthompson.losses import loss_eval
from genthompson.simulation import (
    Estimate,
    RunTrace,
    SimulationError,
    average_shifted_loss_total,
    bayes_regret_experiment,
    cumulative_regret,
    mean_regret,
    relabel_truth,
    run_episode,
    run_episodes,
    simulate_seeds,
)

SQ = LossSpec("square")


def _reference_episode(env, experts, cfg):
    """Step-by-step replay through the functional API using the engine's draw layout."""
    rng = np.random.default_rng(cfg.seed)
    U = rng.random((cfg.horizon, 3))
    state = init_weights(cfg.prior_for(experts.n_experts), cfg.eta, cfg.gamma)
    arms, regrets = [], []
    for t in range(cfg.horizon):
        x = int(env.contexts(np.array([t]), U[t : t + 1, 0])[0])
        probs = arm_distribution(state, experts, x)
        a = int(np.searchsorted(np.cumsum(probs), U[t, 1], side="right"))
        r = int(U[t, 2] < env.mu[x, a])
        losses = [loss_eval(cfg.loss, p, r) for p in experts.predictions[:, x, a]]
        state = update_weights(state, np.array(losses))
        arms.append(a)
        regrets.append(env.mu[x].max() - env.mu[x, a])
    return np.array(arms), np.array(regrets)


def test_engine_matches_functional_replay_across_chunks(small_instance):
    env, experts = small_instance
    cfg = RunConfig(sim.CHUNK + 700, SQ, eta=0.17, gamma=0.1, seed=11)
    trace = run_episode(env, experts, cfg)
    arms, regrets = _reference_episode(env, experts, cfg)
    np.testing.assert_array_equal(trace.arms, arms)
    np.testing.assert_allclose(trace.regret_inc, regrets, atol=1e-15)


def test_single_truth_expert_has_zero_regret(small_instance):
    env, experts = small_instance
    only = experts.subset([0])
    trace = run_episode(env, only, RunConfig(2000, SQ, eta=0.17, gamma=0.0, seed=0))
    assert cumulative_regret(trace)[-1] == 0.0
    assert average_shifted_loss_total(trace) == 0.0
    est = mean_regret(env, only, RunConfig(500, SQ, gamma=0.0), 10)
    assert est.mean == 0 and est.ci_low == est.ci_high == 0


def test_pure_exploration_matches_uniform_regret(small_instance):
    env, experts = small_instance
    T, n = 200, 400
    summary = simulate_seeds(env, experts, RunConfig(T, SQ, eta=0.17, gamma=1.0), n)
    expected = T * uniform_policy_regret(env.mu.tolist())
    est = summary.regret_estimate
    assert abs(est.mean - expected) <= 3 * est.std_err


def test_determinism_and_batch_independence(small_instance):
    env, experts = small_instance
    cfg = RunConfig(500, SQ, eta=0.17, gamma=0.1, seed=3)
    a, b = run_episode(env, experts, cfg), run_episode(env, experts, cfg)
    np.testing.assert_array_equal(a.arms, b.arms)
    np.testing.assert_array_equal(a.avg_shifted_loss, b.avg_shifted_loss)
    batch = run_episodes(env, experts, cfg, [7, 3, 9])
    np.testing.assert_array_equal(batch[1].arms, a.arms)
    np.testing.assert_array_equal(batch[1].regret_inc, a.regret_inc)
    summary = simulate_seeds(env, experts, cfg, 3)
    assert summary.seeds == (3, 4, 5)
    assert summary.regret[0] == pytest.approx(cumulative_regret(a)[-1], abs=1e-12)


def test_cumulative_regret_example():
    trace = RunTrace(0, *(np.zeros(3, int) for _ in range(3)), np.array([0.1, 0.0, 0.2]), np.zeros(3))
    np.testing.assert_allclose(cumulative_regret(trace), [0.1, 0.1, 0.3], atol=1e-15)


def test_regret_per_step_bounded_by_max_gap(small_instance):
    env, experts = small_instance
    trace = run_episode(env, experts, RunConfig(1000, SQ, gamma=0.3))
    gaps = env.mu.max(axis=1, keepdims=True) - env.mu
    cum = cumulative_regret(trace)
    assert np.all(np.diff(cum) >= -1e-15)
    assert cum[-1] / len(trace) <= gaps.max()


def test_trace_rows(small_instance):
    env, experts = small_instance
    trace = run_episode(env, experts, RunConfig(5, SQ))
    rows = list(trace.rows())
    assert [r[0] for r in rows] == [1, 2, 3, 4, 5]
    assert float(rows[-1][5]) == pytest.approx(cumulative_regret(trace)[-1])


def test_frozen_weights_shifted_loss_closed_form(small_instance):
    env, experts = small_instance
    prior = np.array([0.4, 0.3, 0.1, 0.1, 0.1])
    cfg = RunConfig(300, SQ, eta=0.0, gamma=0.2, prior=prior, seed=2, snapshot_weights=True, snapshot_stride=50)
    trace = run_episode(env, experts, cfg)
    assert np.allclose(trace.snapshots, prior, atol=1e-15)
    assert trace.snapshot_steps.tolist() == [0, 50, 100, 150, 200, 250]
    total = 0.0
    for x, a, r in zip(trace.contexts, trace.arms, trace.rewards):
        f = experts.predictions[:, x, a]
        total += float(np.dot(prior, (f - r) ** 2 - (f[0] - r) ** 2))
    assert average_shifted_loss_total(trace) == pytest.approx(total, abs=1e-12)


def test_first_step_regret_is_exact(two_arm_instance):
    env, experts = two_arm_instance
    cfg = RunConfig(1, SQ, eta=0.5, gamma=0.2)
    # greedy arms: truth 1, expert 1 picks 0, expert 2 picks 1 -> P(arm 0) = 0.8/3 + 0.1
    p0 = 0.8 / 3 + 0.1
    summary = simulate_seeds(env, experts, cfg, 20_000)
    est = summary.regret_estimate
    assert abs(est.mean - 0.4 * p0) <= 3 * est.std_err


def test_interval_shrinks_with_more_seeds(small_instance):
    env, experts = small_instance
    cfg = RunConfig(100, SQ, gamma=0.2)
    small = mean_regret(env, experts, cfg, 500)
    large = mean_regret(env, experts, cfg, 1000)
    width = lambda e: e.ci_high - e.ci_low  # noqa: E731
    assert width(small) / width(large) == pytest.approx(math.sqrt(2), rel=0.15)


def test_estimate_from_samples():
    est = Estimate.from_samples([1.0, 2.0, 3.0, 4.0])
    assert est.mean == 2.5 and est.std_err == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert est.ci_low < 2.5 < est.ci_high and est.n == 4
    with pytest.raises(ValueError):
        Estimate.from_samples([1.0])
    with pytest.raises(ValueError):
        mean_regret(None, None, RunConfig(10), 1)


def test_prior_mass_on_truth_reduces_shifted_loss(small_instance):
    env, experts = small_instance
    n = 200
    low = RunConfig(300, SQ, eta=0.17, gamma=0.1, prior=[0.01] + [0.2475] * 4)
    high = RunConfig(300, SQ, eta=0.17, gamma=0.1, prior=[0.9] + [0.025] * 4)
    lo = simulate_seeds(env, experts, low, n).shifted_estimate
    hi = simulate_seeds(env, experts, high, n).shifted_estimate
    assert hi.mean + 3 * hi.std_err < lo.mean - 3 * lo.std_err


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(0)
    with pytest.raises(ValueError):
        RunConfig(10, eta=-1.0)
    with pytest.raises(ValueError):
        RunConfig(10, gamma=1.2)
    with pytest.raises(ValueError):
        RunConfig(10, prior=[0.5, 0.6])
    with pytest.raises(ValueError):
        RunConfig(10, prior=[0.0, 1.0]).prior_for(2)
    with pytest.raises(ValueError):
        RunConfig(10, prior=[0.5, 0.5]).prior_for(3)


def test_simulation_error_reports_step(small_instance, monkeypatch):
    env, experts = small_instance
    real = sim._loss
    calls = {"n": 0}

    def flaky(spec, pred, reward):
        calls["n"] += 1
        out = real(spec, pred, reward)
        return out if calls["n"] < 4 else out + np.inf

    monkeypatch.setattr(sim, "_loss", flaky)
    with pytest.raises(SimulationError) as info:
        run_episode(env, experts, RunConfig(10, SQ))
    assert info.value.step == 3


def test_unrealizable_instance_rejected(small_instance):
    env, experts = small_instance
    with pytest.raises(ValueError):
        run_episode(env, experts.subset([1, 0]), RunConfig(5))


def test_relabel_truth(small_instance):
    env, experts = small_instance
    prior = np.array([0.5, 0.0, 0.3, 0.2, 0.0])
    env2, sub, p2 = relabel_truth(env, experts, prior, 2)
    assert sub.n_experts == 3
    np.testing.assert_array_equal(env2.mu, experts.predictions[2])
    np.testing.assert_array_equal(sub.predictions[1], experts.predictions[0])
    np.testing.assert_allclose(p2, [0.3, 0.5, 0.2])
    with pytest.raises(ValueError):
        relabel_truth(env, experts, prior, 1)


def test_bayes_point_mass_equals_single_truth(small_instance):
    env, experts = small_instance
    cfg = RunConfig(200, SQ, eta=0.17, gamma=0.1, prior=[1.0, 0, 0, 0, 0], seed=4)
    res = bayes_regret_experiment(env, experts, cfg, [1.0, 0, 0, 0, 0], n_draws=5, n_seeds=30, kappa2=4.0)
    single = simulate_seeds(env, experts.subset([0]), RunConfig(200, SQ, eta=0.17, gamma=0.1, seed=4), 30)
    assert res.estimate.mean == pytest.approx(single.regret.mean(), abs=1e-12)
    assert res.entropy == 0 and res.kl_prior == 0
    assert res.corollary2_bound == pytest.approx(0.1 * 200)
    assert res.draws.tolist() == [0] * 5


def test_bayes_mixed_truths(small_instance):
    env, experts = small_instance
    cfg = RunConfig(100, SQ, eta=0.17, gamma=0.1, seed=1)
    true_prior = [0.5, 0.5, 0.0, 0.0, 0.0]
    res = bayes_regret_experiment(env, experts, cfg, true_prior, n_draws=40, n_seeds=10, kappa2=4.0)
    assert set(res.per_truth_mean) == {0, 1}
    weights = np.bincount(res.draws, minlength=2)[:2] / 40
    assert res.estimate.mean == pytest.approx(weights @ [res.per_truth_mean[0], res.per_truth_mean[1]])
    again = bayes_regret_experiment(env, experts, cfg, true_prior, n_draws=40, n_seeds=10, kappa2=4.0)
    assert again.to_dict() == res.to_dict()
    assert res.kl_prior == pytest.approx(math.log(2.5))
    with pytest.raises(ValueError):
        bayes_regret_experiment(env, experts, cfg, [0.5, 0.5], n_draws=5, n_seeds=5)


def test_context_sources_drive_simulation():
    mu = np.array([[0.2, 0.8], [0.7, 0.1], [0.5, 0.6]])
    experts = ExpertSet(np.stack([mu, np.clip(mu[:, ::-1], 0.01, 0.99)]))
    cyc = Environment(mu=mu, context_source="fixed-cycle")
    assert run_episode(cyc, experts, RunConfig(7)).contexts.tolist() == [0, 1, 2, 0, 1, 2, 0]
    seq = Environment(mu=mu, context_source="explicit-sequence", sequence=(2, 0))
    assert run_episode(seq, experts, RunConfig(5)).contexts.tolist() == [2, 0, 2, 0, 2]


def test_regret_weakly_decreases_with_truth_prior_mass(small_instance):
    env, experts = small_instance
    estimates = []
    for p1 in (0.05, 0.2, 0.8):
        prior = np.r_[p1, np.full(4, (1 - p1) / 4)]
        cfg = RunConfig(400, SQ, eta=0.17, gamma=0.1, prior=prior, seed=0)
        estimates.append(mean_regret(env, experts, cfg, 100))
    for worse, better in zip(estimates, estimates[1:]):
        assert better.ci_low <= worse.ci_high
    assert estimates[-1].mean < estimates[0].mean
