import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import linear_reference_weights

from genthompson import (
    ExpertSet,
    LossSpec,
    arm_distribution,
    init_weights,
    recommended_eta,
    recommended_gamma,
    select_arm,
    update_weights,
)
from genthompson.losses import _loss


def test_init_weights():
    np.testing.assert_allclose(init_weights(np.full(4, 0.25), 0.5, 0.1).normalized(), [0.25] * 4, atol=1e-15)
    state = init_weights([0.9, 0.1], 0.5, 0.1)
    np.testing.assert_allclose(state.normalized(), [0.9, 0.1], atol=1e-15)
    assert state.log_total() == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_array_equal(state.log_weights, np.log([0.9, 0.1]))


@pytest.mark.parametrize(
    "prior, eta, gamma",
    [([0.5, 0.5, 0.1], 1.0, 0.1), ([1.0, 0.0], 1.0, 0.1), ([0.5, 0.5], 0.0, 0.1), ([0.5, 0.5], 1.0, 1.5)],
)
def test_init_weights_rejects(prior, eta, gamma):
    with pytest.raises(ValueError):
        init_weights(prior, eta, gamma)


def _experts_with_choices(choices, n_arms):
    """One context; expert i prefers arm choices[i]."""
    tables = np.full((len(choices), 1, n_arms), 0.3)
    for i, a in enumerate(choices):
        tables[i, 0, a] = 0.6
    return ExpertSet(tables)


def test_arm_distribution_example():
    es = _experts_with_choices([0, 1], 2)
    state = init_weights([0.6, 0.4], 1.0, 0.1)
    np.testing.assert_allclose(arm_distribution(state, es, 0), [0.59, 0.41], atol=1e-15)


def test_arm_distribution_pure_exploration_and_unanimous():
    es = _experts_with_choices([0, 2, 1], 4)
    np.testing.assert_allclose(arm_distribution(init_weights([0.2, 0.3, 0.5], 1.0, 1.0), es, 0), [0.25] * 4)
    es = _experts_with_choices([2, 2, 2], 4)
    np.testing.assert_array_equal(arm_distribution(init_weights([0.2, 0.3, 0.5], 1.0, 0.0), es, 0), [0, 0, 1, 0])


def test_arm_distribution_dimension_mismatch():
    es = _experts_with_choices([0, 1], 2)
    with pytest.raises(ValueError):
        arm_distribution(init_weights([0.2, 0.3, 0.5], 1.0, 0.1), es, 0)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8),
    st.floats(0.0, 1.0),
    st.integers(1, 6),
    st.integers(0, 10_000),
)
def test_arm_distribution_floor_and_normalization(raw_prior, gamma, n_arms, seed):
    prior = np.array(raw_prior) / np.sum(raw_prior)
    rng = np.random.default_rng(seed)
    es = _experts_with_choices(rng.integers(0, n_arms, len(prior)), n_arms)
    state = init_weights(prior, 1.0, gamma)
    probs = arm_distribution(state, es, 0)
    assert abs(probs.sum() - 1) <= 1e-12
    assert probs.min() >= gamma / n_arms - 1e-12


def test_select_arm():
    assert select_arm([1.0, 0.0, 0.0], np.random.default_rng(0)) == 0
    assert select_arm([0.0, 0.0, 1.0], np.random.default_rng(0)) == 2
    rng = np.random.default_rng(1)
    draws = np.array([select_arm([0.59, 0.41], rng) for _ in range(100_000)])
    assert np.mean(draws == 0) == pytest.approx(0.59, abs=0.005)
    a = [select_arm([0.2, 0.3, 0.5], np.random.default_rng(9)) for _ in range(3)]
    rng1, rng2 = np.random.default_rng(4), np.random.default_rng(4)
    assert [select_arm([0.2, 0.3, 0.5], rng1) for _ in range(50)] == [
        select_arm([0.2, 0.3, 0.5], rng2) for _ in range(50)
    ]
    assert len(set(a)) == 1


def test_select_arm_skips_zero_probability_arms():
    rng = np.random.default_rng(0)
    assert all(select_arm([0.5, 0.0, 0.5], rng) != 1 for _ in range(2000))


def test_update_weights_example():
    state = update_weights(init_weights([0.5, 0.5], 0.5, 0.1), [0.0, 1.0])
    unnorm = np.exp(state.log_weights) / 0.5
    np.testing.assert_allclose(unnorm, [1.0, math.exp(-0.5)], atol=1e-15)
    np.testing.assert_allclose(state.normalized(), [0.62246, 0.37754], atol=5e-6)
    ref = linear_reference_weights([0.5, 0.5], [[0.0, 1.0]], 0.5)
    np.testing.assert_allclose(state.normalized(), ref, atol=1e-15)


def test_update_weights_equal_losses_and_errors():
    state = init_weights([0.7, 0.2, 0.1], 0.3, 0.1)
    np.testing.assert_allclose(update_weights(state, [0.4] * 3).normalized(), [0.7, 0.2, 0.1], atol=1e-15)
    with pytest.raises(FloatingPointError):
        update_weights(state, [0.0, np.inf, 0.0])
    with pytest.raises(ValueError):
        update_weights(state, [0.0, 0.0])


def test_log_domain_matches_linear_reference():
    rng = np.random.default_rng(2)
    prior = rng.dirichlet(np.ones(6))
    losses = rng.uniform(0, 1, (10_000, 6))
    state = init_weights(prior, 0.05, 0.1)
    for row in losses:
        state = update_weights(state, row)
    ref = linear_reference_weights(prior, losses.tolist(), 0.05)
    assert np.max(np.abs(state.normalized() - ref)) <= 1e-9


def test_truth_weight_constant_under_shifted_updates(small_instance):
    env, experts = small_instance
    spec = LossSpec("square")
    prior = np.full(experts.n_experts, 0.2)
    state = init_weights(prior, 0.17, 0.1)
    rng = np.random.default_rng(0)
    for _ in range(500):
        x, a = rng.integers(env.n_contexts), rng.integers(env.n_arms)
        r = int(rng.random() < env.mu[x, a])
        loss = _loss(spec, experts.predictions[:, x, a], r)
        state = update_weights(state, loss - loss[0])
        assert state.log_weights[0] == math.log(0.2)


def test_recommended_eta():
    sq = LossSpec("square")
    assert recommended_eta(sq, 4) == pytest.approx(1 / (8 * (math.e - 2)), rel=1e-15)
    assert recommended_eta(sq) == pytest.approx(0.17402, abs=1e-5)
    assert recommended_eta(sq, 1) == pytest.approx(0.69610, abs=1e-5)
    values = [recommended_eta(sq, k) for k in (1, 10, 1e3, 1e6)]
    assert all(a > b for a, b in zip(values, values[1:])) and values[-1] < 1e-6
    assert recommended_eta(LossSpec("raw-log")) == 1.0
    with pytest.raises(ValueError):
        recommended_eta(LossSpec("normalized-log", 2.0))


def test_recommended_gamma():
    assert recommended_gamma(5, 1000) == pytest.approx(0.17100, abs=5e-6)
    assert recommended_gamma(7, 7, 0.3) == pytest.approx(0.3)
    assert recommended_gamma(7, 7, 3.0) == 1.0
    assert recommended_gamma(1, 10**6) == pytest.approx(0.01, rel=1e-12)
