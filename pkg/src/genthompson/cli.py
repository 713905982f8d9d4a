"""Command line entry point: ``genthompson {run,sweep,bayes,check}``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .bounds import bound_report
from .conditions import FSWEEP_COLUMNS, check_conditions, estimate_kappa2, sweep_F
from .config import ConfigError, digest, parse_config
from .losses import LossSpec, validate_beta_compatibility
from .policy import init_weights
from .simulation import (
    TRACE_COLUMNS,
    Estimate,
    SimulationError,
    _seed_job,
    bayes_regret_experiment,
    run_episode,
    simulate_seeds,
)

SWEEP_COLUMNS = (
    "config_hash", "T", "K", "N", "loss", "eta", "gamma", "p1",
    "mean_regret", "ci_low", "ci_high", "lemma1_bound", "corollary1_bound",
)

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2


def _clean(obj):
    """Make ``obj`` strict-JSON friendly: numpy to python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n")


def write_csv(path: Path, columns, rows, config: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# config: " + json.dumps(_clean(config), sort_keys=True, separators=(",", ":")) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _executor(parallelism: int):
    return ProcessPoolExecutor(max_workers=parallelism) if parallelism > 1 else nullcontext()


def _mapper(pool):
    return map if pool is None else pool.map


def _estimate_dict(values) -> dict:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if len(values) < 2:
        return {"mean": mean, "std_err": None, "ci_low": None, "ci_high": None, "n": len(values)}
    return Estimate.from_samples(values).to_dict()


def cmd_run(ec, args, out: Path) -> int:
    resolved = ec.resolved()
    cfg = ec.run_config(snapshot_weights=args.snapshot_weights)
    summary = simulate_seeds(ec.env, ec.experts, cfg, ec.n_seeds)
    trace = run_episode(ec.env, ec.experts, cfg)
    bounds = None
    if ec.kappa2 is not None and cfg.gamma > 0:
        bounds = bound_report(ec.loss, ec.n_arms, cfg.horizon, cfg.gamma, ec.prior, ec.kappa2)
    shifted = _estimate_dict(summary.avg_shifted_total)
    bound_check = None
    if bounds is not None:
        se = shifted["std_err"] or 0.0
        bound_check = {
            "bound": bounds.lemma1_bound,
            "mean_total_avg_shifted_loss": shifted["mean"],
            "within_3se": shifted["mean"] <= bounds.lemma1_bound + 3 * se,
        }
    write_json(out / "summary.json", {
        "command": "run",
        "config": resolved,
        "seeds": list(summary.seeds),
        "regret": _estimate_dict(summary.regret),
        "per_seed_regret": summary.regret,
        "avg_shifted_loss_total": shifted,
        "per_seed_avg_shifted_loss_total": summary.avg_shifted_total,
        "bounds": None if bounds is None else bounds.to_dict(),
        "shifted_loss_bound_check": bound_check,
        "trace_seed": cfg.seed,
    })
    write_csv(out / "trace.csv", TRACE_COLUMNS, trace.rows(), resolved)
    if args.snapshot_weights:
        cols = ["t"] + [f"w{i}" for i in range(ec.experts.n_experts)]
        rows = ([int(t) + 1] + [repr(float(v)) for v in w] for t, w in zip(trace.snapshot_steps, trace.snapshots))
        write_csv(out / "weights.csv", cols, rows, resolved)
    print(f"mean regret over {ec.n_seeds} seeds: {summary.regret.mean():.6g}")
    return EXIT_OK


def cmd_sweep(ec, args, out: Path) -> int:
    raw = ec.raw
    grid = raw["sweep"]
    Ts = grid.get("T", [ec.horizon])
    etas = grid.get("eta", [raw["run"]["eta"]])
    gammas = grid.get("gamma", [raw["run"]["gamma"]])
    priors = grid.get("prior", [raw["run"]["prior"]])
    resolved = ec.resolved()
    cells, jobs = [], []
    for T, eta_v, gamma_v, prior_v in itertools.product(Ts, etas, gammas, priors):
        eta = ec.resolve_eta(eta_v)
        gamma = ec.resolve_gamma(gamma_v, T)
        prior = ec.resolve_prior(prior_v)
        cfg = ec.run_config(horizon=T, eta=eta, gamma=gamma, prior=prior)
        cell = {"T": T, "eta": eta, "gamma": gamma, "prior": prior.tolist(),
                "eta_spec": eta_v, "gamma_spec": gamma_v, "prior_spec": prior_v}
        cells.append((cell, cfg))
        jobs.append((ec.env, ec.experts, cfg, ec.n_seeds))
    with _executor(args.parallelism) as pool:
        results = list(_mapper(pool)(_seed_job, jobs))

    rows, records = [], []
    K, N = ec.n_arms, ec.experts.n_experts
    for (cell, cfg), res in zip(cells, results):
        est = _estimate_dict(res.regret)
        bounds = None
        if ec.kappa2 is not None and cfg.gamma > 0:
            bounds = bound_report(ec.loss, K, cfg.horizon, cfg.gamma, cfg.prior, ec.kappa2)
        h = digest({"base": resolved, "cell": cell})
        rows.append([
            h, cfg.horizon, K, N, ec.loss.kind, _fmt(cfg.eta), _fmt(cfg.gamma), _fmt(float(cfg.prior[0])),
            _fmt(est["mean"]), _fmt(est["ci_low"]), _fmt(est["ci_high"]),
            _fmt(bounds.lemma1_bound if bounds else None), _fmt(bounds.corollary1_bound if bounds else None),
        ])
        records.append({"config_hash": h, **cell, "regret": est,
                        "avg_shifted_loss_total": _estimate_dict(res.avg_shifted_total),
                        "bounds": None if bounds is None else bounds.to_dict()})

    slopes = []
    if len(set(Ts)) >= 2:
        for key in itertools.product(range(len(etas)), range(len(gammas)), range(len(priors))):
            pts = [(r["T"], r["regret"]["mean"]) for r in records
                   if (etas.index(r["eta_spec"]), gammas.index(r["gamma_spec"]), priors.index(r["prior_spec"])) == key]
            if all(m > 0 for _, m in pts):
                x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
                slopes.append({"eta": etas[key[0]], "gamma": gammas[key[1]], "prior": priors[key[2]],
                               "loglog_slope": float(np.polyfit(x, y, 1)[0])})
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows, resolved)
    write_json(out / "sweep.json", {"command": "sweep", "config": resolved, "cells": records, "slopes": slopes})
    print(f"wrote {len(rows)} sweep rows")
    return EXIT_OK


def cmd_bayes(ec, args, out: Path) -> int:
    resolved = ec.resolved()
    b = ec.raw["bayes"]
    true_prior = ec.resolve_prior(b["true_prior"])
    cfg = ec.run_config()
    with _executor(args.parallelism) as pool:
        result = bayes_regret_experiment(
            ec.env, ec.experts, cfg, true_prior, b["n_draws"], ec.n_seeds, ec.kappa2, map_fn=_mapper(pool)
        )
    write_json(out / "bayes.json", {
        "command": "bayes",
        "config": resolved,
        "true_prior": true_prior,
        **result.to_dict(),
    })
    print(f"bayes regret: {result.estimate.mean:.6g}")
    return EXIT_OK


def cmd_check(ec, args, out: Path) -> int:
    resolved = ec.resolved()
    chk = ec.raw["check"]
    state = None
    if ec.gamma > 0 and np.all(ec.prior > 0):
        state = init_weights(ec.prior, ec.eta, ec.gamma)
    report = check_conditions(ec.experts, ec.env, ec.loss, ec.gamma, state, chk["grid_resolution"])
    passed = report.passed
    doc = {"command": "check", "config": resolved, "conditions": report.to_dict()}
    if ec.loss.kind == "normalized-log":
        beta_report = validate_beta_compatibility(ec.experts, ec.loss.beta)
        doc["beta_compatibility"] = beta_report.to_dict()
        passed = passed and beta_report.passed
    if ec.loss.kind != "raw-log":
        doc["kappa2_grid_estimate"] = estimate_kappa2(ec.loss, chk["grid_resolution"])

    betas = chk["betas"] or ([ec.loss.beta] if ec.loss.kind == "normalized-log" else [1.0, 2.0, 4.0])
    sweep_dir = out / "fsweep"
    sweep_dir.mkdir(exist_ok=True)
    summaries = []
    for beta in betas:
        kappa2_beta = estimate_kappa2(LossSpec("normalized-log", beta), chk["grid_resolution"])
        for f in chk["f_values"]:
            sw = sweep_F(f, beta, chk["sweep_resolution"])
            name = f"fsweep_f{f!r}_beta{float(beta)!r}.csv"
            write_csv(sweep_dir / name, FSWEEP_COLUMNS, sw.rows(), resolved)
            summaries.append({**sw.summary(), "file": f"fsweep/{name}", "kappa2_grid_estimate": kappa2_beta})
    doc["fsweeps"] = summaries
    doc["passed"] = passed
    write_json(out / "conditions.json", doc)
    print("conditions " + ("passed" if passed else "FAILED"))
    return EXIT_OK if passed else EXIT_CHECK_FAILED


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "bayes": cmd_bayes, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genthompson",
        description="Generalized Thompson Sampling experiments and condition checks.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="JSON experiment config (defaults apply when omitted)")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--seeds", type=int, help="number of seeds (overrides run.n_seeds)")
    parser.add_argument("--parallelism", type=int, default=1, help="worker processes")
    parser.add_argument("--snapshot-weights", action="store_true", help="write normalized weight snapshots")
    parser.add_argument("--grid-resolution", type=int, help="kappa2 grid points per axis")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = json.loads(args.config.read_text()) if args.config else {}
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if isinstance(doc, dict):
        if args.seeds is not None:
            doc.setdefault("run", {})["n_seeds"] = args.seeds
        if args.grid_resolution is not None:
            doc.setdefault("check", {})["grid_resolution"] = args.grid_resolution
    if args.parallelism < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        ec = parse_config(doc)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](ec, args, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SimulationError as exc:
        print(f"error: simulation aborted at {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
