"""Prediction losses, shifted losses and their moments under Bernoulli rewards.

The shifted loss of expert ``i`` on an observation is its loss minus the loss
of the truth expert on the same observation. Expectations are taken over
``r ~ Bernoulli(f_1)`` where ``f_1`` is the truth prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

LOSS_KINDS = ("square", "normalized-log", "raw-log")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "square"
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.kind == "normalized-log":
            if self.beta is None or not np.isfinite(self.beta) or self.beta <= 0:
                raise ValueError("normalized-log loss needs a positive finite beta")
            object.__setattr__(self, "beta", float(self.beta))
        elif self.beta is not None:
            raise ValueError(f"beta only applies to normalized-log, not {self.kind!r}")

    @property
    def is_log(self) -> bool:
        return self.kind != "square"

    @property
    def scale(self) -> float:
        """Multiplier applied to the raw log loss (1/beta, or 1)."""
        return 1.0 / self.beta if self.kind == "normalized-log" else 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta": self.beta}


def _check_domain(spec: LossSpec, *preds) -> None:
    for p in preds:
        p = np.asarray(p, dtype=float)
        if spec.is_log:
            ok = (p > 0.0) & (p < 1.0)
        else:
            ok = (p >= 0.0) & (p <= 1.0)
        if not np.all(ok):
            raise ValueError(f"prediction outside the domain of the {spec.kind} loss: {p[~ok].ravel()[:3]}")


def _check_reward(r) -> np.ndarray:
    r = np.asarray(r)
    if not np.all((r == 0) | (r == 1)):
        raise ValueError("rewards must be binary (0 or 1)")
    return r


def _loss(spec: LossSpec, pred, reward):
    # Unchecked kernel used by the simulation loop.
    if spec.kind == "square":
        return (pred - reward) ** 2
    return -np.log(np.where(reward == 1, pred, 1.0 - pred)) * spec.scale


def loss_eval(spec: LossSpec, prediction, reward):
    """Loss of ``prediction`` when ``reward`` is observed (broadcasts)."""
    _check_domain(spec, prediction)
    reward = _check_reward(reward)
    out = _loss(spec, np.asarray(prediction, dtype=float), reward)
    return float(out) if np.ndim(out) == 0 else out


def shifted_loss(spec: LossSpec, f_i, f_1, reward):
    """Loss of expert ``i`` minus loss of the truth expert on the same reward."""
    _check_domain(spec, f_i, f_1)
    reward = _check_reward(reward)
    f_i = np.asarray(f_i, dtype=float)
    f_1 = np.asarray(f_1, dtype=float)
    if spec.kind == "square":
        # (f_i - r)^2 - (f_1 - r)^2 factored to avoid cancellation.
        out = (f_i - f_1) * (f_i + f_1 - 2.0 * reward)
    else:
        out = np.where(reward == 1, np.log(f_1 / f_i), np.log((1.0 - f_1) / (1.0 - f_i))) * spec.scale
    return float(out) if np.ndim(out) == 0 else out


def kl_bernoulli(p, q):
    """KL(Bernoulli(p) || Bernoulli(q)) with the convention 0 ln 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p must lie in [0, 1]")
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("q must lie strictly inside (0, 1)")
    out = xlogy(p, p / q) + xlogy(1.0 - p, (1.0 - p) / (1.0 - q))
    return float(out) if out.ndim == 0 else out


def expected_shifted_loss(spec: LossSpec, f_i, f_1):
    """Mean shifted loss: ``(f_i - f_1)^2`` for square, ``KL(f_1 || f_i) * scale`` for log."""
    _check_domain(spec, f_i, f_1)
    f_i = np.asarray(f_i, dtype=float)
    f_1 = np.asarray(f_1, dtype=float)
    if spec.kind == "square":
        out = (f_i - f_1) ** 2
    else:
        out = np.asarray(kl_bernoulli(f_1, f_i)) * spec.scale
    return float(out) if np.ndim(out) == 0 else out


def second_moment_shifted_loss(spec: LossSpec, f_i, f_1):
    """Mean squared shifted loss under ``r ~ Bernoulli(f_1)``."""
    _check_domain(spec, f_i, f_1)
    f_i = np.asarray(f_i, dtype=float)
    f_1 = np.asarray(f_1, dtype=float)
    if spec.kind == "square":
        s = f_i + f_1
        out = (f_i - f_1) ** 2 * (f_1 * (s - 2.0) ** 2 + (1.0 - f_1) * s**2)
    else:
        up = np.log(f_1 / f_i)
        down = np.log((1.0 - f_1) / (1.0 - f_i))
        out = (f_1 * up**2 + (1.0 - f_1) * down**2) * spec.scale**2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class BetaReport:
    passed: bool
    beta: float
    max_abs_log_ratio: float
    min_admissible_beta: float
    worst_cell: tuple | None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "beta": self.beta,
            "max_abs_log_ratio": self.max_abs_log_ratio,
            "min_admissible_beta": self.min_admissible_beta,
            "worst_cell": list(self.worst_cell) if self.worst_cell is not None else None,
        }


def log_ratios(predictions: np.ndarray) -> np.ndarray:
    """Per-outcome log-ratios of every expert against expert 0.

    Returns shape ``(2,) + predictions.shape``: index 0 holds ``ln(f_1/f_i)``
    (reward 1), index 1 holds ``ln((1-f_1)/(1-f_i))`` (reward 0).
    """
    f = np.asarray(predictions, dtype=float)
    f1 = f[0]
    return np.stack([np.log(f1 / f), np.log1p(-f1) - np.log1p(-f)])


def validate_beta_compatibility(experts, beta: float) -> BetaReport:
    """Check that every per-outcome shifted log term lies within ``[-beta/2, beta/2]``.

    ``experts`` is an ExpertSet or an array of shape (n_experts, n_contexts, n_arms)
    whose first expert is the truth. The minimal admissible beta is twice the
    largest absolute log-ratio.
    """
    table = getattr(experts, "predictions", experts)
    ratios = np.abs(log_ratios(table))
    worst = float(ratios.max())
    cell = None
    if worst > 0:
        outcome, i, x, a = (int(v) for v in np.unravel_index(np.argmax(ratios), ratios.shape))
        cell = (i, x, a, 1 - outcome)
    return BetaReport(
        passed=bool(worst <= beta / 2.0),
        beta=float(beta),
        max_abs_log_ratio=worst,
        min_admissible_beta=2.0 * worst,
        worst_cell=cell,
    )
