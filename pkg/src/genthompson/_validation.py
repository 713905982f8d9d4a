"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np

PROB_ATOL = 1e-12


def check_index(value, upper: int, name: str) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (numbers.Integral, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if not 0 <= value < upper:
        raise ValueError(f"{name}={value} out of range [0, {upper})")
    return value


def check_probability_vector(p, name: str = "prior", *, strictly_positive: bool = True) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite entries")
    if strictly_positive and np.any(p <= 0):
        bad = int(np.flatnonzero(p <= 0)[0])
        raise ValueError(f"{name}[{bad}]={p[bad]} must be > 0")
    if np.any(p < 0):
        bad = int(np.flatnonzero(p < 0)[0])
        raise ValueError(f"{name}[{bad}]={p[bad]} must be >= 0")
    total = float(p.sum())
    if abs(total - 1.0) > PROB_ATOL:
        raise ValueError(f"{name} must sum to 1, sums to {total!r}")
    return p


def check_table(table, name: str, *, ndim: int, margin: float = 0.0) -> np.ndarray:
    """Validate a table of probabilities lying in ``[margin, 1 - margin]``.

    With ``margin == 0`` the open interval (0, 1) is required instead.
    Errors name the first offending cell.
    """
    table = np.array(table, dtype=float)
    if table.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {table.shape}")
    if table.size == 0:
        raise ValueError(f"{name} is empty")
    if margin > 0:
        bad = ~((table >= margin) & (table <= 1.0 - margin))
        rule = f"[{margin}, {1.0 - margin}]"
    else:
        bad = ~((table > 0.0) & (table < 1.0))
        rule = "(0, 1)"
    if np.any(bad):
        cell = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{name}{list(cell)}={table[cell]!r} outside {rule}")
    return table


def check_rate(value, name: str, *, low: float = 0.0, high: float = 1.0) -> float:
    value = float(value)
    if not (np.isfinite(value) and low <= value <= high):
        raise ValueError(f"{name}={value} must lie in [{low}, {high}]")
    return value


def check_positive(value, name: str) -> float:
    value = float(value)
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name}={value} must be a positive finite number")
    return value
