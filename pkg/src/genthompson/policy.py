"""Generalized Thompson Sampling: weight state, arm mixture and exponentiated updates.

The functional core (``init_weights``, ``arm_distribution``, ``select_arm``,
``update_weights``) is wrapped by :class:`GeneralizedThompsonSampling`, a
scikit-learn style online estimator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_index, check_positive, check_probability_vector, check_rate
from .losses import LossSpec, _check_domain, _check_reward, _loss
from .model import ExpertSet

E_MINUS_2 = math.e - 2.0
SQUARE_KAPPA2 = 4.0


@dataclass(frozen=True)
class WeightState:
    """Unnormalized expert weights stored as logs."""

    log_weights: np.ndarray
    prior: np.ndarray
    eta: float
    gamma: float

    @property
    def n_experts(self) -> int:
        return self.log_weights.shape[0]

    def normalized(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    def log_total(self) -> float:
        """``ln W_t``, the log of the total unnormalized weight."""
        return float(logsumexp(self.log_weights))


def init_weights(prior, eta: float, gamma: float) -> WeightState:
    prior = check_probability_vector(prior)
    eta = check_positive(eta, "eta")
    gamma = check_rate(gamma, "gamma")
    log_w = np.log(prior)
    log_w.setflags(write=False)
    return WeightState(log_weights=log_w, prior=prior, eta=eta, gamma=gamma)


def _mixture(weights: np.ndarray, greedy: np.ndarray, n_arms: int, gamma: float) -> np.ndarray:
    follow = np.bincount(greedy, weights=weights, minlength=n_arms)
    return (1.0 - gamma) * follow + gamma / n_arms


def arm_distribution(state: WeightState, experts: ExpertSet, x: int) -> np.ndarray:
    """Arm probabilities: follow a weight-sampled expert w.p. ``1 - gamma``, else uniform."""
    if state.n_experts != experts.n_experts:
        raise ValueError(f"weight state has {state.n_experts} experts, expert set has {experts.n_experts}")
    x = check_index(x, experts.n_contexts, "context")
    return _mixture(state.normalized(), experts.greedy[:, x], experts.n_arms, state.gamma)


def select_arm(probs, rng: np.random.Generator) -> int:
    """Inverse-CDF sample over arm ids in increasing order (one uniform draw)."""
    probs = np.asarray(probs, dtype=float)
    return _inverse_cdf(np.cumsum(probs), rng.random())


def _inverse_cdf(cdf: np.ndarray, u) -> int:
    return int(min(np.searchsorted(cdf, u, side="right"), cdf.shape[-1] - 1))


def update_weights(state: WeightState, losses) -> WeightState:
    """Multiply each weight by ``exp(-eta * loss)``; normalization is deferred."""
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (state.n_experts,):
        raise ValueError(f"expected {state.n_experts} losses, got shape {losses.shape}")
    if not np.all(np.isfinite(losses)):
        raise FloatingPointError("non-finite loss in weight update")
    log_w = state.log_weights - state.eta * losses
    log_w.setflags(write=False)
    return replace(state, log_weights=log_w)


def recommended_eta(spec: LossSpec, kappa2: float | None = None) -> float:
    """Learning rate ``1 / (2 (e - 2) kappa2)``.

    When ``kappa2`` is omitted, square loss uses 4 and raw log loss returns 1
    (the Thompson Sampling setting). Normalized log loss needs an explicit
    estimate, see :func:`genthompson.conditions.estimate_kappa2`.
    """
    if kappa2 is None:
        if spec.kind == "square":
            kappa2 = SQUARE_KAPPA2
        elif spec.kind == "raw-log":
            return 1.0
        else:
            raise ValueError("normalized-log loss needs an explicit kappa2 estimate")
    kappa2 = check_positive(kappa2, "kappa2")
    return 1.0 / (2.0 * E_MINUS_2 * kappa2)


def recommended_gamma(n_arms: int, horizon: int, c: float = 1.0) -> float:
    if n_arms < 1 or horizon < 1:
        raise ValueError("n_arms and horizon must be >= 1")
    c = check_positive(c, "c")
    return min(1.0, c * (n_arms / horizon) ** (1.0 / 3.0))


def warn_if_not_thompson(spec: LossSpec, eta: float, gamma: float) -> None:
    if spec.kind == "raw-log" and (eta != 1.0 or gamma != 0.0):
        warnings.warn(
            f"raw-log loss is meant for eta=1, gamma=0 (got eta={eta}, gamma={gamma}); "
            "its shifted loss is unbounded and no regret guarantee applies",
            RuntimeWarning,
            stacklevel=3,
        )


def _check_contexts(X, n_contexts: int) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 1:
        raise ValueError(f"contexts must be a 1-d array of ids, got shape {X.shape}")
    if X.size and not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.mod(X, 1) == 0):
            raise ValueError("context ids must be integers")
    X = X.astype(np.int64)
    if X.size and (X.min() < 0 or X.max() >= n_contexts):
        raise ValueError(f"context ids must lie in [0, {n_contexts})")
    return X


class GeneralizedThompsonSampling(BaseEstimator):
    """Online contextual-bandit policy over a finite expert set.

    Parameters
    ----------
    experts : ExpertSet or array-like of shape (n_experts, n_contexts, n_arms)
        Reward predictions of every expert.
    loss : {"square", "normalized-log", "raw-log"}
    beta : float, optional
        Range parameter of the normalized log loss.
    eta : float or "auto"
        Learning rate. ``"auto"`` uses :func:`recommended_eta`; for the
        normalized log loss this needs ``kappa2``.
    gamma : float
        Uniform exploration rate in [0, 1].
    prior : array-like of shape (n_experts,), optional
        Initial weights; uniform when omitted.
    kappa2 : float, optional
        Self-boundedness constant used by ``eta="auto"``.
    random_state : int or numpy Generator, optional
        Source of randomness for :meth:`predict`.

    Attributes
    ----------
    weights_ : ndarray of shape (n_experts,)
        Current normalized weights.
    log_weights_ : ndarray of shape (n_experts,)
        Current unnormalized log weights.
    n_steps_ : int
        Number of observations absorbed so far.
    """

    def __init__(
        self,
        experts=None,
        loss="square",
        beta=None,
        eta="auto",
        gamma=0.1,
        prior=None,
        kappa2=None,
        random_state=None,
    ):
        self.experts = experts
        self.loss = loss
        self.beta = beta
        self.eta = eta
        self.gamma = gamma
        self.prior = prior
        self.kappa2 = kappa2
        self.random_state = random_state

    def _initialize(self):
        if self.experts is None:
            raise ValueError("experts must be provided")
        self.expert_set_ = self.experts if isinstance(self.experts, ExpertSet) else ExpertSet(np.asarray(self.experts))
        self.loss_spec_ = LossSpec(self.loss, self.beta)
        self.eta_ = recommended_eta(self.loss_spec_, self.kappa2) if self.eta == "auto" else float(self.eta)
        n = self.expert_set_.n_experts
        prior = np.full(n, 1.0 / n) if self.prior is None else self.prior
        warn_if_not_thompson(self.loss_spec_, self.eta_, float(self.gamma))
        self.state_ = init_weights(prior, self.eta_, self.gamma)
        self.rng_ = np.random.default_rng(self.random_state)
        self.n_steps_ = 0

    @property
    def weights_(self) -> np.ndarray:
        check_is_fitted(self, "state_")
        return self.state_.normalized()

    @property
    def log_weights_(self) -> np.ndarray:
        check_is_fitted(self, "state_")
        return self.state_.log_weights

    def fit(self, X, actions, rewards):
        """Reset to the prior and absorb a logged sequence of (context, arm, reward)."""
        self._initialize()
        return self.partial_fit(X, actions, rewards)

    def partial_fit(self, X, actions, rewards):
        if not hasattr(self, "state_"):
            self._initialize()
        es = self.expert_set_
        X = _check_contexts(X, es.n_contexts)
        actions = np.asarray(actions, dtype=np.int64).ravel()
        rewards = _check_reward(np.asarray(rewards).ravel()).astype(np.int64)
        if not (len(X) == len(actions) == len(rewards)):
            raise ValueError("X, actions and rewards must have the same length")
        if actions.size and (actions.min() < 0 or actions.max() >= es.n_arms):
            raise ValueError(f"actions must lie in [0, {es.n_arms})")
        preds = es.predictions[:, X, actions]
        _check_domain(self.loss_spec_, preds)
        state = self.state_
        for t in range(len(X)):
            state = update_weights(state, _loss(self.loss_spec_, preds[:, t], rewards[t]))
        self.state_ = state
        self.n_steps_ += len(X)
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Arm distribution for each context under the current weights."""
        check_is_fitted(self, "state_")
        es = self.expert_set_
        X = _check_contexts(X, es.n_contexts)
        w = self.state_.normalized()
        return np.array([_mixture(w, es.greedy[:, x], es.n_arms, self.state_.gamma) for x in X]).reshape(
            len(X), es.n_arms
        )

    def predict(self, X) -> np.ndarray:
        """Sample one arm per context (one uniform draw each, in order)."""
        probs = self.predict_proba(X)
        cdf = np.cumsum(probs, axis=1)
        return np.array([_inverse_cdf(row, self.rng_.random()) for row in cdf], dtype=np.int64)
