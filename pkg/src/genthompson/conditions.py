"""Numerical checks of the loss conditions behind the regret bounds.

C1 consistency: the expected shifted loss is non-negative.
C2 informativeness: an expert's immediate regret is at most
   ``kappa1 * sqrt(expected shifted loss under the arm distribution)``.
C3 boundedness: shifted losses lie in [-1, 1].
C4 self-boundedness: second moment <= ``kappa2`` * first moment.

Also holds the variance-to-mean analysis ``F(g)`` of the shifted log loss.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .bounds import kappa1 as analytic_kappa1
from .losses import (
    LossSpec,
    expected_shifted_loss,
    log_ratios,
    second_moment_shifted_loss,
    shifted_loss,
)
from .model import Environment, ExpertSet
from .policy import SQUARE_KAPPA2, WeightState, arm_distribution

C1_TOL = 1e-12
C3_TOL = 1e-12
C4_TOL = 1e-9
ZERO_MOMENT = 1e-15
DEFAULT_GRID = 199


def _moment_tables(experts: ExpertSet, spec: LossSpec):
    f = experts.predictions
    f1 = np.broadcast_to(experts.truth, f.shape)
    return expected_shifted_loss(spec, f, f1), second_moment_shifted_loss(spec, f, f1)


def check_consistency(experts: ExpertSet, env: Environment, spec: LossSpec) -> float:
    """Minimum expected shifted loss over every (expert, context, arm)."""
    experts.check_realizable(env)
    m1, _ = _moment_tables(experts, spec)
    return float(m1.min())


def immediate_regret(experts: ExpertSet, env: Environment) -> np.ndarray:
    """``mu(x, greedy_1(x)) - mu(x, greedy_i(x))`` with shape (n_experts, n_contexts)."""
    ctx = np.arange(env.n_contexts)
    return env.mu[ctx, experts.greedy[0]][None, :] - env.mu[ctx[None, :], experts.greedy]


@dataclass(frozen=True)
class InformativenessReport:
    floor_ratio: float
    realized_ratio: float | None
    kappa1: float | None
    passed: bool | None

    def to_dict(self) -> dict:
        return asdict(self)


def _max_ratio(delta: np.ndarray, expected: np.ndarray) -> float:
    ok = expected > 0
    if np.any(~ok & (delta > 0)):
        return float("inf")
    if not np.any(ok):
        return 0.0
    return float(np.max(delta[ok] / np.sqrt(expected[ok])))


def verify_informativeness(
    experts: ExpertSet,
    env: Environment,
    spec: LossSpec,
    gamma: float,
    state: WeightState | None = None,
) -> InformativenessReport:
    """Largest ``Delta_i(x) / sqrt(E_{r,a|x}[shifted loss])`` over experts and contexts.

    The floor-only expectation charges each arm exactly ``gamma / K``, the least
    mass any arm gets from the mixture; it lower-bounds the on-policy
    expectation, so its ratio is the worst case. With ``state`` the arm
    distribution actually induced by those weights is evaluated as well.
    Cells with zero expectation are skipped.
    """
    if gamma <= 0:
        raise ValueError("informativeness needs gamma > 0")
    experts.check_realizable(env)
    m1, _ = _moment_tables(experts, spec)  # (N, X, K)
    delta = immediate_regret(experts, env)
    K = env.n_arms
    floor = _max_ratio(delta, gamma / K * m1.sum(axis=2))
    realized = None
    if state is not None:
        q = np.stack([arm_distribution(state, experts, x) for x in range(env.n_contexts)])  # (X, K)
        realized = _max_ratio(delta, np.einsum("nxk,xk->nx", m1, q))
    k1 = None if spec.kind == "raw-log" else analytic_kappa1(spec, K, gamma)
    passed = None
    if k1 is not None:
        worst = max(floor, realized if realized is not None else 0.0)
        passed = bool(worst <= k1 * (1 + 1e-12))
    return InformativenessReport(floor_ratio=floor, realized_ratio=realized, kappa1=k1, passed=passed)


def max_abs_shifted_loss(experts: ExpertSet, spec: LossSpec) -> float:
    f = experts.predictions
    f1 = np.broadcast_to(experts.truth, f.shape)
    return float(max(np.abs(shifted_loss(spec, f, f1, r)).max() for r in (0, 1)))


def default_grid(resolution: int = DEFAULT_GRID) -> np.ndarray:
    """``resolution`` evenly spaced interior points of (0, 1); 199 gives step 0.005."""
    if resolution < 1:
        raise ValueError("grid resolution must be >= 1")
    return np.arange(1, resolution + 1) / (resolution + 1)


def kappa2_ratios(spec: LossSpec, grid=None, grid_resolution: int = DEFAULT_GRID):
    """Ratios ``M2 / M1`` over admissible ``(f_1, f_i)`` grid cells.

    Returns ``(f_1, f_i, ratio)`` flattened over cells with ``M1 > 1e-15``
    that, for the normalized log loss, respect the ``beta / 2`` log-ratio range.
    """
    if spec.kind == "raw-log":
        raise ValueError("raw-log loss is not self-bounded; no kappa2 exists")
    g = default_grid(grid_resolution) if grid is None else np.asarray(grid, dtype=float)
    f1, fi = np.meshgrid(g, g, indexing="ij")
    m1 = expected_shifted_loss(spec, fi, f1)
    m2 = second_moment_shifted_loss(spec, fi, f1)
    ok = np.asarray(m1) > ZERO_MOMENT
    if spec.kind == "normalized-log":
        ratios = np.abs(log_ratios(np.stack([f1, fi])))[:, 1]
        ok &= np.all(ratios <= spec.beta / 2.0, axis=0)
    if not np.any(ok):
        raise ValueError("no admissible grid cells with positive expected shifted loss")
    return f1[ok], fi[ok], m2[ok] / m1[ok]


def estimate_kappa2(spec: LossSpec, grid_resolution: int = DEFAULT_GRID, grid=None) -> float:
    """Supremum of second-moment / first-moment over the prediction grid."""
    return float(kappa2_ratios(spec, grid=grid, grid_resolution=grid_resolution)[2].max())


def instance_kappa2(experts: ExpertSet, spec: LossSpec) -> float:
    m1, m2 = _moment_tables(experts, spec)
    ok = m1 > ZERO_MOMENT
    return float((m2[ok] / m1[ok]).max()) if np.any(ok) else 0.0


@dataclass(frozen=True)
class ConditionReport:
    c1_min_expected: float
    c2_kappa1_required: float
    c2_kappa1_realized: float | None
    c2_kappa1_analytic: float | None
    c3_max_abs: float
    c4_kappa2_estimate: float
    c4_kappa2_reference: float | None
    pass_c1: bool
    pass_c2: bool | None
    pass_c3: bool | None
    pass_c4: bool | None
    grid_resolution: int

    @property
    def passed(self) -> bool:
        flags = (self.pass_c1, self.pass_c2, self.pass_c3, self.pass_c4)
        return all(f is not False for f in flags)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_conditions(
    experts: ExpertSet,
    env: Environment,
    spec: LossSpec,
    gamma: float,
    state: WeightState | None = None,
    grid_resolution: int = DEFAULT_GRID,
) -> ConditionReport:
    """Evaluate C1-C4 on a finite instance.

    The C4 reference constant is 4 for square loss and the grid estimate for the
    normalized log loss; raw log loss skips C3/C4 (it is unbounded).
    """
    c1 = check_consistency(experts, env, spec)
    c3 = max_abs_shifted_loss(experts, spec)
    c4 = instance_kappa2(experts, spec)
    if gamma > 0:
        info = verify_informativeness(experts, env, spec, gamma, state)
    else:
        info = InformativenessReport(float("nan"), None, None, None)
    if spec.kind == "square":
        ref = SQUARE_KAPPA2
    elif spec.kind == "normalized-log":
        ref = estimate_kappa2(spec, grid_resolution)
    else:
        ref = None
    bounded = spec.kind != "raw-log"
    return ConditionReport(
        c1_min_expected=c1,
        c2_kappa1_required=info.floor_ratio,
        c2_kappa1_realized=info.realized_ratio,
        c2_kappa1_analytic=info.kappa1,
        c3_max_abs=c3,
        c4_kappa2_estimate=c4,
        c4_kappa2_reference=ref,
        pass_c1=bool(c1 >= -C1_TOL),
        pass_c2=info.passed,
        pass_c3=bool(c3 <= 1.0 + C3_TOL) if bounded else None,
        pass_c4=bool(c4 <= ref + C4_TOL) if ref is not None else None,
        grid_resolution=grid_resolution,
    )


# --- variance-to-mean ratio of the shifted log loss ---------------------------


def _log_moments(f, g, beta):
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    up = -np.log1p((g - f) / f)  # ln(f/g)
    down = -np.log1p((f - g) / (1.0 - f))  # ln((1-f)/(1-g))
    m1 = (f * up + (1.0 - f) * down) / beta
    m2 = (f * up**2 + (1.0 - f) * down**2) / beta**2
    return m1, m2


def admissible_range(f: float, beta: float) -> tuple[float, float]:
    """Interval of ``g`` whose two log-ratios against ``f`` stay within ``beta / 2``."""
    if not 0 < f < 1:
        raise ValueError("f must lie in (0, 1)")
    h = np.exp(beta / 2.0)
    lo = max(f / h, 1.0 - (1.0 - f) * h)
    hi = min(f * h, 1.0 - (1.0 - f) / h)
    return float(lo), float(hi)


@dataclass(frozen=True)
class AppendixPoint:
    f: float
    g: float
    beta: float
    M1: float
    M2: float
    F: float
    limit: bool = False


def appendix_F(f: float, g: float, beta: float) -> AppendixPoint:
    """First/second moments of the shifted log loss and ``F = (M2 - M1^2) / M1``.

    At ``g == f`` both moments vanish and ``F`` takes its limit ``2 / beta``.
    """
    if not (0 < f < 1 and 0 < g < 1):
        raise ValueError("f and g must lie in (0, 1)")
    if beta <= 0:
        raise ValueError("beta must be positive")
    if g == f:
        return AppendixPoint(f, g, beta, 0.0, 0.0, 2.0 / beta, limit=True)
    m1, m2 = _log_moments(f, g, beta)
    return AppendixPoint(f, g, beta, float(m1), float(m2), float((m2 - m1 * m1) / m1))


@dataclass(frozen=True)
class FSweep:
    f: float
    beta: float
    g: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    F: np.ndarray
    limit_flag: np.ndarray
    sup_F: float
    argmax_g: float
    sup_at_boundary: bool
    valley_g: float
    violation_fraction: float

    def rows(self):
        for row in zip(self.g, self.M1, self.M2, self.F, self.limit_flag):
            yield tuple(repr(float(v)) for v in row[:4]) + (int(row[4]),)

    def summary(self) -> dict:
        lo, hi = float(self.g[0]), float(self.g[-1])
        return {
            "f": self.f,
            "beta": self.beta,
            "g_range": [lo, hi],
            "resolution": len(self.g),
            "sup_F": self.sup_F,
            "argmax_g": self.argmax_g,
            "sup_at_boundary": self.sup_at_boundary,
            "valley_g": self.valley_g,
            "violation_fraction": self.violation_fraction,
        }


FSWEEP_COLUMNS = ("g", "M1", "M2", "F", "limit_flag")


def sweep_F(f: float, beta: float, resolution: int = 1000) -> FSweep:
    """Evaluate ``F`` on an even grid over the admissible ``g`` range (endpoints included).

    ``violation_fraction`` is the share of adjacent grid pairs that break the
    decrease-then-increase shape around the grid minimum. Ties for the max and
    min go to the lowest grid index.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    lo, hi = admissible_range(f, beta)
    g = np.linspace(lo, hi, resolution)
    limit = g == f
    with np.errstate(divide="ignore", invalid="ignore"):
        m1, m2 = _log_moments(f, g, beta)
        F = np.where(limit, 2.0 / beta, (m2 - m1 * m1) / m1)
    m1 = np.where(limit, 0.0, m1)
    m2 = np.where(limit, 0.0, m2)
    i_max = int(np.argmax(F))
    i_min = int(np.argmin(F))
    d = np.diff(F)
    tol = 1e-12 * np.abs(F).max()
    bad = np.count_nonzero(d[:i_min] > tol) + np.count_nonzero(d[i_min:] < -tol)
    return FSweep(
        f=float(f),
        beta=float(beta),
        g=g,
        M1=m1,
        M2=m2,
        F=F,
        limit_flag=limit,
        sup_F=float(F[i_max]),
        argmax_g=float(g[i_max]),
        sup_at_boundary=i_max in (0, resolution - 1),
        valley_g=float(g[i_min]),
        violation_fraction=bad / len(d),
    )
