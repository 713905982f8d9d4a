"""Closed-form regret bounds and the prior-dependent quantities they use."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import xlogy

from ._validation import check_positive, check_probability_vector
from .losses import LossSpec

E_MINUS_2 = math.e - 2.0


def entropy(p) -> float:
    p = check_probability_vector(p, "p", strictly_positive=False)
    return float(-xlogy(p, p).sum())


def kl_divergence(p_true, p) -> float:
    """KL(p_true || p) in nats; infinite when ``p`` misses mass of ``p_true``."""
    p_true = check_probability_vector(p_true, "p_true", strictly_positive=False)
    p = check_probability_vector(p, "p", strictly_positive=False)
    if p_true.shape != p.shape:
        raise ValueError("distributions must have the same length")
    if np.any((p == 0) & (p_true > 0)):
        return math.inf
    mask = p_true > 0
    return float(np.sum(p_true[mask] * np.log(p_true[mask] / p[mask])))


def kappa1(spec: LossSpec, n_arms: int, gamma: float) -> float:
    """Informativeness constant: sqrt(2K/gamma) (square) or K sqrt(2 beta/gamma) (normalized log)."""
    if gamma <= 0:
        raise ValueError("kappa1 involves 1/gamma and is undefined for gamma <= 0")
    if spec.kind == "square":
        return math.sqrt(2.0 * n_arms / gamma)
    if spec.kind == "normalized-log":
        return n_arms * math.sqrt(2.0 * spec.beta / gamma)
    raise ValueError("no informativeness constant is available for raw-log loss")


def lemma1_bound(kappa2: float, p1: float) -> float:
    """Bound on the expected total average shifted loss: 4 (e-2) kappa2 ln(1/p1)."""
    kappa2 = check_positive(kappa2, "kappa2")
    if not 0 < p1 <= 1:
        raise ValueError(f"p1={p1} must lie in (0, 1]")
    return 4.0 * E_MINUS_2 * kappa2 * math.log(1.0 / p1)


def _regret_bound(kappa1: float, kappa2: float, gamma: float, horizon: int, complexity: float) -> float:
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma={gamma} must lie in (0, 1]")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    lead = math.sqrt(4.0 * kappa2 * E_MINUS_2) * kappa1 * (1.0 - gamma)
    # lead may be 0 at gamma = 1; avoid 0 * inf.
    if lead == 0.0:
        return gamma * horizon
    return lead * math.sqrt(horizon * complexity) + gamma * horizon


def corollary1_bound(kappa1: float, kappa2: float, gamma: float, horizon: int, p1: float) -> float:
    """Expected T-step regret bound for a prior putting mass ``p1`` on the truth."""
    if not 0 < p1 <= 1:
        raise ValueError(f"p1={p1} must lie in (0, 1]")
    return _regret_bound(kappa1, kappa2, gamma, horizon, math.log(1.0 / p1))


def corollary2_bound(kappa1: float, kappa2: float, gamma: float, horizon: int, p_true, p) -> float:
    """Bayes regret bound when the truth is drawn from ``p_true`` and the algorithm uses ``p``."""
    return _regret_bound(kappa1, kappa2, gamma, horizon, entropy(p_true) + kl_divergence(p_true, p))


@dataclass(frozen=True)
class BoundReport:
    lemma1_bound: float
    corollary1_bound: float
    corollary2_bound: float
    entropy: float
    kl_prior: float
    kappa1: float
    kappa2: float

    def to_dict(self) -> dict:
        return asdict(self)


def bound_report(
    spec: LossSpec,
    n_arms: int,
    horizon: int,
    gamma: float,
    prior,
    kappa2: float,
    true_prior=None,
) -> BoundReport | None:
    """All bounds for one configuration; ``None`` when they do not apply.

    The truth is expert 0, so ``p1 = prior[0]``. ``true_prior`` defaults to a
    point mass on expert 0, making the Bayes bound coincide with the
    single-truth bound.
    """
    if spec.kind == "raw-log" or gamma <= 0:
        return None
    prior = check_probability_vector(prior)
    if true_prior is None:
        true_prior = np.zeros_like(prior)
        true_prior[0] = 1.0
    k1 = kappa1(spec, n_arms, gamma)
    return BoundReport(
        lemma1_bound=lemma1_bound(kappa2, prior[0]),
        corollary1_bound=corollary1_bound(k1, kappa2, gamma, horizon, prior[0]),
        corollary2_bound=corollary2_bound(k1, kappa2, gamma, horizon, true_prior, prior),
        entropy=entropy(true_prior),
        kl_prior=kl_divergence(true_prior, prior),
        kappa1=k1,
        kappa2=float(kappa2),
    )
