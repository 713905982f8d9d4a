"""Experiment configuration: JSON schema, validation and resolution of "auto" fields."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .conditions import DEFAULT_GRID, estimate_kappa2
from .losses import LOSS_KINDS, LossSpec, validate_beta_compatibility
from .model import CONTEXT_SOURCES, DEFAULT_MARGIN, Environment, ExpertSet, perturbed_experts
from .policy import SQUARE_KAPPA2, recommended_eta, recommended_gamma
from .simulation import RunConfig


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


_prob = {"type": "number", "minimum": 0, "maximum": 1}
_table2 = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_prior = {
    "oneOf": [
        {"const": "uniform"},
        {"type": "array", "minItems": 1, "items": _prob},
        {
            "type": "object",
            "properties": {"truth_mass": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
            "required": ["truth_mass"],
            "additionalProperties": False,
        },
    ]
}
_auto_number = {"oneOf": [{"const": "auto"}, {"type": "number", "minimum": 0}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu": _table2,
                "generate": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n_contexts": {"type": "integer", "minimum": 1},
                        "n_arms": {"type": "integer", "minimum": 1},
                        "low": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "high": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "seed": {"type": "integer"},
                    },
                },
                "context_source": {"enum": list(CONTEXT_SOURCES)},
                "sequence": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "experts": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["perturbation", "explicit"]},
                "n_experts": {"type": "integer", "minimum": 1},
                "delta": {"type": "number", "minimum": 0},
                "seed": {"type": "integer"},
                "margin": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
                "tables": {"type": "array", "minItems": 1, "items": _table2},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "integer", "minimum": 1},
                "loss": {"enum": list(LOSS_KINDS)},
                "beta": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "eta": _auto_number,
                "gamma": {"oneOf": [{"const": "auto"}, _prob]},
                "gamma_scale": {"type": "number", "exclusiveMinimum": 0},
                "prior": _prior,
                "seed": {"type": "integer"},
                "n_seeds": {"type": "integer", "minimum": 1},
                "snapshot_stride": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "eta": {"type": "array", "minItems": 1, "items": _auto_number},
                "gamma": {"type": "array", "minItems": 1, "items": {"oneOf": [{"const": "auto"}, _prob]}},
                "prior": {"type": "array", "minItems": 1, "items": _prior},
            },
        },
        "bayes": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "true_prior": _prior,
                "n_draws": {"type": "integer", "minimum": 1},
            },
        },
        "check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid_resolution": {"type": "integer", "minimum": 2},
                "f_values": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                "betas": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
                "sweep_resolution": {"type": "integer", "minimum": 2},
            },
        },
    },
}

DEFAULTS = {
    "environment": {
        "generate": {"n_contexts": 4, "n_arms": 3, "low": 0.05, "high": 0.95, "seed": 0},
        "context_source": "iid-uniform",
        "sequence": [],
    },
    "experts": {"mode": "perturbation", "n_experts": 5, "delta": 0.2, "seed": 1, "margin": DEFAULT_MARGIN},
    "run": {
        "T": 1000,
        "loss": "square",
        "beta": None,
        "eta": "auto",
        "gamma": "auto",
        "gamma_scale": 1.0,
        "prior": "uniform",
        "seed": 0,
        "n_seeds": 10,
        "snapshot_stride": 1,
    },
    "sweep": {},
    "bayes": {"true_prior": "uniform", "n_draws": 20},
    "check": {
        "grid_resolution": DEFAULT_GRID,
        "f_values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "betas": None,
        "sweep_resolution": 1000,
    },
}


def _merged(doc: dict) -> dict:
    out = {}
    for section, defaults in DEFAULTS.items():
        given = doc.get(section, {})
        merged = dict(defaults)
        merged.update(given)
        if section == "environment" and "mu" in given:
            merged.pop("generate")
        if section == "environment" and "generate" in given:
            merged["generate"] = {**defaults["generate"], **given["generate"]}
        out[section] = merged
    return out


def digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _resolve_prior(value, n_experts: int, where: str, problems: list) -> np.ndarray | None:
    if value == "uniform":
        return np.full(n_experts, 1.0 / n_experts)
    if isinstance(value, dict):
        p1 = float(value["truth_mass"])
        if n_experts == 1:
            if p1 != 1.0:
                problems.append(f"{where}.truth_mass: must be 1 with a single expert")
                return None
            return np.ones(1)
        p = np.full(n_experts, (1.0 - p1) / (n_experts - 1))
        p[0] = p1
        return p
    p = np.asarray(value, dtype=float)
    if p.shape != (n_experts,):
        problems.append(f"{where}: has {p.size} entries, expected {n_experts}")
        return None
    if abs(p.sum() - 1.0) > 1e-12:
        problems.append(f"{where}: must sum to 1, sums to {p.sum()!r}")
        return None
    return p


@dataclass
class ExperimentConfig:
    env: Environment
    experts: ExpertSet
    loss: LossSpec
    horizon: int
    eta: float
    gamma: float
    prior: np.ndarray
    kappa2: float | None
    seed: int
    n_seeds: int
    snapshot_stride: int
    raw: dict
    resolution_notes: dict = field(default_factory=dict)

    @property
    def n_arms(self) -> int:
        return self.env.n_arms

    def run_config(self, **overrides) -> RunConfig:
        kw = dict(
            horizon=self.horizon,
            loss=self.loss,
            eta=self.eta,
            gamma=self.gamma,
            prior=self.prior,
            seed=self.seed,
            snapshot_stride=self.snapshot_stride,
        )
        kw.update(overrides)
        return RunConfig(**kw)

    def resolve_eta(self, value) -> float:
        return self._auto_eta() if value == "auto" else float(value)

    def resolve_gamma(self, value, horizon: int) -> float:
        if value != "auto":
            return float(value)
        if self.loss.kind == "raw-log":
            return 0.0
        return recommended_gamma(self.n_arms, horizon, self.raw["run"]["gamma_scale"])

    def resolve_prior(self, value) -> np.ndarray:
        problems = []
        p = _resolve_prior(value, self.experts.n_experts, "prior", problems)
        if problems:
            raise ConfigError(problems)
        return p

    def _auto_eta(self) -> float:
        if self.loss.kind == "raw-log":
            return 1.0
        return recommended_eta(self.loss, self.kappa2)

    def resolved(self) -> dict:
        """JSON-ready echo of the fully resolved configuration."""
        raw = self.raw
        env = dict(raw["environment"])
        env["mu_sha256"] = digest(self.env.mu)
        experts = dict(raw["experts"])
        experts["n_experts"] = self.experts.n_experts
        experts["tables_sha256"] = digest(self.experts.predictions)
        return {
            "environment": env,
            "experts": experts,
            "run": {
                **raw["run"],
                "eta": self.eta,
                "gamma": self.gamma,
                "prior": [float(v) for v in self.prior],
                "kappa2": self.kappa2,
                "K": self.n_arms,
                "N": self.experts.n_experts,
                "n_contexts": self.env.n_contexts,
            },
            "sweep": raw["sweep"],
            "bayes": raw["bayes"],
            "check": raw["check"],
            "resolution": self.resolution_notes,
        }


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document and resolve every default and "auto" field.

    All schema violations are reported together, each with its JSON path.
    """
    if not isinstance(doc, dict):
        raise ConfigError(["$: config must be a JSON object"])
    validator = jsonschema.Draft7Validator(SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        problems.append(f"{path}: {err.message}")
    if problems:
        raise ConfigError(problems)
    raw = _merged(doc)
    notes = {}

    env_doc = raw["environment"]
    margin = raw["experts"]["margin"]
    try:
        if "mu" in env_doc:
            mu = np.asarray(env_doc["mu"], dtype=float)
        else:
            gen = env_doc["generate"]
            if gen["low"] >= gen["high"]:
                raise ValueError("environment.generate: low must be < high")
            mu = np.random.default_rng(gen["seed"]).uniform(gen["low"], gen["high"], (gen["n_contexts"], gen["n_arms"]))
        env = Environment(
            mu=mu,
            context_source=env_doc["context_source"],
            sequence=tuple(env_doc["sequence"]),
            rng_seed=raw["run"]["seed"],
        )
    except ValueError as exc:
        raise ConfigError([f"environment: {exc}"]) from None

    ex_doc = raw["experts"]
    try:
        if ex_doc["mode"] == "explicit":
            if "tables" not in ex_doc:
                raise ValueError("explicit mode needs 'tables'")
            experts = ExpertSet(np.asarray(ex_doc["tables"], dtype=float), margin=margin)
        else:
            experts = perturbed_experts(
                env, ex_doc["n_experts"], ex_doc["delta"], np.random.default_rng(ex_doc["seed"]), margin=margin
            )
        experts.check_realizable(env)
    except ValueError as exc:
        raise ConfigError([f"experts: {exc}"]) from None

    run = raw["run"]
    try:
        loss = LossSpec(run["loss"], run["beta"])
    except ValueError as exc:
        raise ConfigError([f"run.loss: {exc}"]) from None
    if loss.kind == "normalized-log":
        report = validate_beta_compatibility(experts, loss.beta)
        notes["beta_compatibility"] = report.to_dict()

    kappa2 = None
    if loss.kind == "square":
        kappa2 = SQUARE_KAPPA2
        notes["kappa2"] = "square loss constant 4"
    elif loss.kind == "normalized-log":
        res = raw["check"]["grid_resolution"]
        kappa2 = estimate_kappa2(loss, res)
        notes["kappa2"] = f"grid estimate, resolution {res}, beta {loss.beta}"

    prior = _resolve_prior(run["prior"], experts.n_experts, "run.prior", problems)
    if problems:
        raise ConfigError(problems)

    cfg = ExperimentConfig(
        env=env,
        experts=experts,
        loss=loss,
        horizon=run["T"],
        eta=math.nan,
        gamma=math.nan,
        prior=prior,
        kappa2=kappa2,
        seed=run["seed"],
        n_seeds=run["n_seeds"],
        snapshot_stride=run["snapshot_stride"],
        raw=raw,
        resolution_notes=notes,
    )
    cfg.eta = cfg.resolve_eta(run["eta"])
    if run["eta"] == "auto":
        notes["eta"] = "thompson sampling (raw-log)" if loss.kind == "raw-log" else f"1/(2(e-2)kappa2), kappa2={kappa2!r}"
    if cfg.eta <= 0 and loss.kind != "raw-log":
        problems.append("run.eta: must be > 0")
    cfg.gamma = cfg.resolve_gamma(run["gamma"], cfg.horizon)
    if run["gamma"] == "auto":
        notes["gamma"] = "0 (raw-log)" if loss.kind == "raw-log" else f"min(1, {run['gamma_scale']}*(K/T)^(1/3))"
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(Path(path)) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"$: not valid JSON ({exc})"]) from None
    return parse_config(doc)
