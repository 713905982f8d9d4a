"""Contexts, arms, experts and the stochastic reward environment.

Contexts and arms are plain integer ids. An expert is a table of reward
predictions ``f[x, a]``; it acts greedily with respect to that table. The
environment holds the true mean reward table ``mu[x, a]`` and produces a
context stream and Bernoulli rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._validation import check_index, check_table

DEFAULT_MARGIN = 1e-4

CONTEXT_SOURCES = ("iid-uniform", "fixed-cycle", "explicit-sequence")


def greedy_arms(predictions: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the smallest arm id.
    return np.argmax(predictions, axis=-1)


@dataclass(frozen=True)
class Expert:
    """Reward predictions of one expert, shape ``(n_contexts, n_arms)``."""

    predictions: np.ndarray
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        table = check_table(self.predictions, "predictions", ndim=2, margin=self.margin)
        table.setflags(write=False)
        object.__setattr__(self, "predictions", table)

    @property
    def n_contexts(self) -> int:
        return self.predictions.shape[0]

    @property
    def n_arms(self) -> int:
        return self.predictions.shape[1]


def expert_policy(expert: Expert, x: int) -> int:
    """Greedy arm of ``expert`` in context ``x`` (smallest id among ties)."""
    x = check_index(x, expert.n_contexts, "context")
    return int(np.argmax(expert.predictions[x]))


class ExpertSet:
    """Ordered experts; index 0 is the realizable (truth) expert.

    Parameters
    ----------
    experts : sequence of Expert or array of shape (n_experts, n_contexts, n_arms)
    margin : float
        Predictions must lie in ``[margin, 1 - margin]``.
    """

    truth_index = 0

    def __init__(self, experts, margin: float = DEFAULT_MARGIN):
        if isinstance(experts, np.ndarray):
            table = experts
        else:
            experts = list(experts)
            if not experts:
                raise ValueError("an expert set needs at least one expert")
            table = np.stack(
                [e.predictions if isinstance(e, Expert) else np.asarray(e, dtype=float) for e in experts]
            )
        self.predictions = check_table(table, "experts", ndim=3, margin=margin)
        self.predictions.setflags(write=False)
        self.margin = margin
        self.greedy = greedy_arms(self.predictions)

    def __len__(self) -> int:
        return self.predictions.shape[0]

    def __getitem__(self, i: int) -> Expert:
        return Expert(self.predictions[i], margin=self.margin)

    @property
    def n_experts(self) -> int:
        return self.predictions.shape[0]

    @property
    def n_contexts(self) -> int:
        return self.predictions.shape[1]

    @property
    def n_arms(self) -> int:
        return self.predictions.shape[2]

    @property
    def truth(self) -> np.ndarray:
        return self.predictions[self.truth_index]

    def check_realizable(self, env: "Environment") -> None:
        if self.predictions.shape[1:] != env.mu.shape:
            raise ValueError(
                f"expert tables have shape {self.predictions.shape[1:]}, environment has {env.mu.shape}"
            )
        if not np.array_equal(self.truth, env.mu):
            cell = tuple(int(i) for i in np.argwhere(self.truth != env.mu)[0])
            raise ValueError(f"expert 0 must equal mu exactly; differs at (context, arm)={cell}")

    def subset(self, indices: Sequence[int]) -> "ExpertSet":
        return ExpertSet(self.predictions[list(indices)], margin=self.margin)

    @classmethod
    def from_environment(cls, env: "Environment", others=(), margin: float = DEFAULT_MARGIN) -> "ExpertSet":
        """Expert set whose first member is ``env.mu`` followed by ``others``."""
        tables = [env.mu] + [np.asarray(o, dtype=float) for o in others]
        return cls(np.stack(tables), margin=margin)


@dataclass(frozen=True)
class Environment:
    """Stochastic contextual bandit with Bernoulli rewards.

    Every step consumes three uniforms from the run generator in a fixed order:
    context draw, arm draw, reward draw. The context draw is consumed even for
    deterministic context sources so that streams stay aligned.
    """

    mu: np.ndarray
    context_source: str = "iid-uniform"
    sequence: tuple = field(default=())
    rng_seed: int = 0

    def __post_init__(self):
        mu = check_table(self.mu, "mu", ndim=2)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if self.context_source not in CONTEXT_SOURCES:
            raise ValueError(f"context_source must be one of {CONTEXT_SOURCES}, got {self.context_source!r}")
        seq = tuple(int(s) for s in self.sequence)
        if self.context_source == "explicit-sequence":
            if not seq:
                raise ValueError("explicit-sequence needs a non-empty sequence")
            for t, s in enumerate(seq):
                check_index(s, self.n_contexts, f"sequence[{t}]")
        object.__setattr__(self, "sequence", seq)

    @property
    def n_contexts(self) -> int:
        return self.mu.shape[0]

    @property
    def n_arms(self) -> int:
        return self.mu.shape[1]

    def rng(self, seed: int | None = None) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed if seed is None else seed)

    def contexts(self, t: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Context ids for (0-based) steps ``t`` given their context uniforms ``u``."""
        if self.context_source == "iid-uniform":
            return np.minimum((u * self.n_contexts).astype(np.int64), self.n_contexts - 1)
        if self.context_source == "fixed-cycle":
            return np.asarray(t, dtype=np.int64) % self.n_contexts
        seq = np.asarray(self.sequence, dtype=np.int64)
        return seq[np.asarray(t, dtype=np.int64) % len(seq)]

    def draw_context(self, t: int, rng: np.random.Generator) -> int:
        return int(self.contexts(np.asarray(t), np.asarray(rng.random())))

    def best_arms(self) -> np.ndarray:
        return greedy_arms(self.mu)

    def gaps(self) -> np.ndarray:
        """``mu(x, best) - mu(x, a)`` for every cell."""
        return self.mu.max(axis=1, keepdims=True) - self.mu


def sample_reward(env: Environment, x: int, a: int, rng: np.random.Generator) -> int:
    """Bernoulli(mu[x, a]) reward using exactly one uniform draw."""
    x = check_index(x, env.n_contexts, "context")
    a = check_index(a, env.n_arms, "arm")
    return int(rng.random() < env.mu[x, a])


def binarize_reward(r: float, rng: np.random.Generator) -> int:
    """Convert a reward in [0, 1] to a binary pseudo-reward with the same mean.

    One uniform is always drawn, so 0 and 1 map to themselves deterministically
    without changing the generator's consumption pattern.
    """
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"reward {r} outside [0, 1]")
    return int(rng.random() < r)


def perturbed_experts(
    env: Environment,
    n_experts: int,
    delta: float,
    rng: np.random.Generator,
    margin: float = DEFAULT_MARGIN,
) -> ExpertSet:
    """Truth expert plus ``n_experts - 1`` uniform perturbations of magnitude ``delta``."""
    if n_experts < 1:
        raise ValueError("n_experts must be >= 1")
    noise = rng.uniform(-delta, delta, size=(n_experts - 1,) + env.mu.shape)
    others = np.clip(env.mu + noise, margin, 1.0 - margin)
    return ExpertSet.from_environment(env, others, margin=margin)
