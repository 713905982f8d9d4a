"""Episode simulation, regret accounting and Monte Carlo estimates.

Episodes for several seeds are advanced in lock-step with numpy. Each seed owns
its own generator and draws three uniforms per step (context, arm, reward), so
a seed's trace does not depend on which other seeds share the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import Sequence

import numpy as np

from ._validation import check_probability_vector, check_rate
from .bounds import corollary2_bound, entropy, kappa1, kl_divergence
from .losses import LossSpec, _loss
from .model import Environment, ExpertSet
from .policy import warn_if_not_thompson

CHUNK = 4096
Z95 = NormalDist().inv_cdf(0.975)


class SimulationError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class RunConfig:
    horizon: int
    loss: LossSpec = field(default_factory=LossSpec)
    eta: float = 0.17
    gamma: float = 0.1
    prior: np.ndarray | None = None
    seed: int = 0
    snapshot_weights: bool = False
    snapshot_stride: int = 1

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ValueError("horizon must be >= 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"eta={self.eta} must be a finite non-negative number")
        check_rate(self.gamma, "gamma")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.prior is not None:
            object.__setattr__(self, "prior", check_probability_vector(self.prior, strictly_positive=False))

    def prior_for(self, n_experts: int) -> np.ndarray:
        if self.prior is None:
            return np.full(n_experts, 1.0 / n_experts)
        if self.prior.shape != (n_experts,):
            raise ValueError(f"prior has length {self.prior.shape[0]}, expected {n_experts}")
        if self.prior[0] <= 0:
            raise ValueError("the prior must give positive mass to the truth expert (index 0)")
        return self.prior


@dataclass
class RunTrace:
    seed: int
    contexts: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray
    regret_inc: np.ndarray
    avg_shifted_loss: np.ndarray
    snapshot_steps: np.ndarray | None = None
    snapshots: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.arms)

    def rows(self):
        """CSV rows: t, context, arm, reward, regret_inc, cum_regret, avg_shifted_loss."""
        cum = cumulative_regret(self)
        for t in range(len(self)):
            yield (
                t + 1,
                int(self.contexts[t]),
                int(self.arms[t]),
                int(self.rewards[t]),
                repr(float(self.regret_inc[t])),
                repr(float(cum[t])),
                repr(float(self.avg_shifted_loss[t])),
            )


TRACE_COLUMNS = ("t", "context", "arm", "reward", "regret_inc", "cum_regret", "avg_shifted_loss")


@dataclass(frozen=True)
class _Batch:
    contexts: np.ndarray | None
    arms: np.ndarray | None
    rewards: np.ndarray | None
    regret_inc: np.ndarray | None
    avg_shifted_loss: np.ndarray | None
    total_regret: np.ndarray
    total_shifted: np.ndarray
    snapshot_steps: np.ndarray | None
    snapshots: np.ndarray | None


def _simulate(env: Environment, experts: ExpertSet, cfg: RunConfig, seeds: Sequence[int], record: bool) -> _Batch:
    experts.check_realizable(env)
    warn_if_not_thompson(cfg.loss, cfg.eta, cfg.gamma)
    seeds = [int(s) for s in seeds]
    S, T = len(seeds), cfg.horizon
    N, K = experts.n_experts, experts.n_arms
    mu, preds, spec = env.mu, experts.predictions, cfg.loss
    gamma, eta = cfg.gamma, cfg.eta
    onehot = (experts.greedy[..., None] == np.arange(K)).astype(float).transpose(1, 0, 2)  # (X, N, K)
    best_value = mu[np.arange(env.n_contexts), experts.greedy[0]]

    with np.errstate(divide="ignore"):
        log_w = np.tile(np.log(cfg.prior_for(N)), (S, 1))
    rngs = [np.random.default_rng(s) for s in seeds]
    total_regret = np.zeros(S)
    total_shifted = np.zeros(S)
    if record:
        out = {k: np.empty((S, T), dtype=d) for k, d in
               (("contexts", np.int64), ("arms", np.int64), ("rewards", np.int8),
                ("regret_inc", float), ("avg_shifted_loss", float))}
    snap_steps = np.arange(0, T, cfg.snapshot_stride) if cfg.snapshot_weights else None
    snaps = np.empty((S, len(snap_steps), N)) if cfg.snapshot_weights else None

    for start in range(0, T, CHUNK):
        stop = min(start + CHUNK, T)
        U = np.stack([g.random((stop - start, 3)) for g in rngs])  # (S, C, 3)
        steps = np.arange(start, stop)
        X = env.contexts(np.broadcast_to(steps, (S, stop - start)), U[:, :, 0])
        for c, t in enumerate(steps):
            x = X[:, c]
            w = np.exp(log_w - log_w.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            if snaps is not None and t % cfg.snapshot_stride == 0:
                snaps[:, t // cfg.snapshot_stride] = w
            probs = (1.0 - gamma) * (w[:, :, None] * onehot[x]).sum(axis=1) + gamma / K
            cdf = np.cumsum(probs, axis=1)
            a = np.minimum((cdf <= U[:, c, 1:2]).sum(axis=1), K - 1)
            r = (U[:, c, 2] < mu[x, a]).astype(np.int8)
            loss = _loss(spec, preds[:, x, a].T, r[:, None])
            if not np.all(np.isfinite(loss)):
                bad = np.argwhere(~np.isfinite(loss))[0]
                raise SimulationError(int(t), f"non-finite loss for expert {bad[1]} (seed {seeds[bad[0]]})")
            avg_shifted = np.sum(w * (loss - loss[:, :1]), axis=1)
            regret = best_value[x] - mu[x, a]
            log_w -= eta * loss
            total_regret += regret
            total_shifted += avg_shifted
            if record:
                out["contexts"][:, t] = x
                out["arms"][:, t] = a
                out["rewards"][:, t] = r
                out["regret_inc"][:, t] = regret
                out["avg_shifted_loss"][:, t] = avg_shifted
    return _Batch(
        **(out if record else dict.fromkeys(("contexts", "arms", "rewards", "regret_inc", "avg_shifted_loss"))),
        total_regret=total_regret,
        total_shifted=total_shifted,
        snapshot_steps=snap_steps,
        snapshots=snaps,
    )


def run_episodes(env: Environment, experts: ExpertSet, cfg: RunConfig, seeds: Sequence[int]) -> list[RunTrace]:
    b = _simulate(env, experts, cfg, seeds, record=True)
    return [
        RunTrace(
            seed=int(s),
            contexts=b.contexts[i],
            arms=b.arms[i],
            rewards=b.rewards[i],
            regret_inc=b.regret_inc[i],
            avg_shifted_loss=b.avg_shifted_loss[i],
            snapshot_steps=b.snapshot_steps,
            snapshots=None if b.snapshots is None else b.snapshots[i],
        )
        for i, s in enumerate(seeds)
    ]


def run_episode(env: Environment, experts: ExpertSet, cfg: RunConfig) -> RunTrace:
    """Run one episode of ``cfg.horizon`` steps with generator seed ``cfg.seed``."""
    return run_episodes(env, experts, cfg, [cfg.seed])[0]


def cumulative_regret(trace: RunTrace) -> np.ndarray:
    return np.cumsum(trace.regret_inc)


def average_shifted_loss_total(trace: RunTrace) -> float:
    return float(np.sum(trace.avg_shifted_loss))


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with a normal-approximation 95% interval."""

    mean: float
    std_err: float
    ci_low: float
    ci_high: float
    n: int

    @classmethod
    def from_samples(cls, values) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = len(values)
        if n < 2:
            raise ValueError("need at least two samples for an interval")
        mean = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(n))
        return cls(mean=mean, std_err=se, ci_low=mean - Z95 * se, ci_high=mean + Z95 * se, n=n)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_err": self.std_err, "ci_low": self.ci_low, "ci_high": self.ci_high, "n": self.n}


@dataclass(frozen=True)
class SeedSummary:
    seeds: tuple
    regret: np.ndarray
    avg_shifted_total: np.ndarray

    @property
    def regret_estimate(self) -> Estimate:
        return Estimate.from_samples(self.regret)

    @property
    def shifted_estimate(self) -> Estimate:
        return Estimate.from_samples(self.avg_shifted_total)


def simulate_seeds(env: Environment, experts: ExpertSet, cfg: RunConfig, n_seeds: int) -> SeedSummary:
    """Totals at the horizon for seeds ``cfg.seed, ..., cfg.seed + n_seeds - 1``."""
    seeds = tuple(range(cfg.seed, cfg.seed + n_seeds))
    b = _simulate(env, experts, cfg, seeds, record=False)
    return SeedSummary(seeds=seeds, regret=b.total_regret, avg_shifted_total=b.total_shifted)


def _seed_job(args) -> SeedSummary:
    return simulate_seeds(*args)


def mean_regret(env: Environment, experts: ExpertSet, cfg: RunConfig, n_seeds: int) -> Estimate:
    if n_seeds < 2:
        raise ValueError("n_seeds must be >= 2")
    return simulate_seeds(env, experts, cfg, n_seeds).regret_estimate


@dataclass(frozen=True)
class BayesResult:
    estimate: Estimate
    draws: np.ndarray
    per_truth_mean: dict
    entropy: float
    kl_prior: float
    corollary2_bound: float | None
    common_random_numbers: bool = True

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "draws": [int(d) for d in self.draws],
            "per_truth_mean": {str(k): v for k, v in sorted(self.per_truth_mean.items())},
            "entropy": self.entropy,
            "kl_prior": self.kl_prior,
            "corollary2_bound": self.corollary2_bound,
            "common_random_numbers": self.common_random_numbers,
        }


def relabel_truth(env: Environment, experts: ExpertSet, prior: np.ndarray, j: int):
    """Environment, expert set and prior with expert ``j`` as the truth.

    Expert ``j`` moves to index 0 and its table becomes ``mu``. Experts with
    zero prior weight are dropped: their weight stays zero forever, so the
    policy is unchanged.
    """
    if prior[j] <= 0:
        raise ValueError(f"the algorithm's prior gives zero mass to the sampled truth expert {j}")
    order = [j] + [i for i in range(experts.n_experts) if i != j and prior[i] > 0]
    sub = experts.subset(order)
    env_j = Environment(
        mu=sub.truth.copy(), context_source=env.context_source, sequence=env.sequence, rng_seed=env.rng_seed
    )
    return env_j, sub, prior[order]


def bayes_regret_experiment(
    env: Environment,
    experts: ExpertSet,
    cfg: RunConfig,
    true_prior,
    n_draws: int,
    n_seeds: int,
    kappa2: float | None = None,
    map_fn=map,
) -> BayesResult:
    """Average regret when the truth expert is drawn from ``true_prior``.

    Every draw reuses the seeds ``cfg.seed ... cfg.seed + n_seeds - 1`` (common
    random numbers), so draws that pick the same truth give identical results
    and are simulated once. ``cfg.prior`` may contain zeros here. ``map_fn``
    lets callers fan the distinct truths out to a worker pool; results are
    merged in truth-index order.
    """
    N = experts.n_experts
    true_prior = check_probability_vector(true_prior, "true_prior", strictly_positive=False)
    prior = (np.full(N, 1.0 / N) if cfg.prior is None
             else check_probability_vector(cfg.prior, "prior", strictly_positive=False))
    if true_prior.shape != (N,) or prior.shape != (N,):
        raise ValueError(f"priors must have length {N}")
    if n_draws < 1 or n_seeds < 1:
        raise ValueError("n_draws and n_seeds must be >= 1")
    rng = np.random.default_rng([cfg.seed, 0xBA7E5])
    draws = rng.choice(N, size=n_draws, p=true_prior)

    jobs = []
    for j in np.unique(draws):
        env_j, sub, sub_prior = relabel_truth(env, experts, prior, int(j))
        jobs.append((env_j, sub, replace(cfg, prior=sub_prior), n_seeds))
    results = list(map_fn(_seed_job, jobs))
    per_truth = {int(j): s.regret for j, s in zip(np.unique(draws), results)}
    pooled = np.concatenate([per_truth[int(j)] for j in draws])
    if n_draws >= 2 and len(np.unique(draws)) > 1:
        draw_means = np.array([per_truth[int(j)].mean() for j in draws])
        mean = float(pooled.mean())
        se = float(draw_means.std(ddof=1) / math.sqrt(n_draws))
        est = Estimate(mean=mean, std_err=se, ci_low=mean - Z95 * se, ci_high=mean + Z95 * se, n=len(pooled))
    else:
        est = Estimate.from_samples(pooled)

    bound = None
    if cfg.loss.kind != "raw-log" and cfg.gamma > 0 and kappa2 is not None:
        bound = corollary2_bound(kappa1(cfg.loss, env.n_arms, cfg.gamma), kappa2, cfg.gamma, cfg.horizon, true_prior, prior)
    return BayesResult(
        estimate=est,
        draws=draws,
        per_truth_mean={j: float(v.mean()) for j, v in per_truth.items()},
        entropy=entropy(true_prior),
        kl_prior=kl_divergence(true_prior, prior),
        corollary2_bound=bound,
    )
