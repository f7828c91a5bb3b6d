"""Rayleigh fading, path loss, SINR and per-slot rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class LinkBudget:
    s: float
    j: float
    sigma_v2: float

    def __post_init__(self):
        if self.s < 0 or self.j < 0 or self.sigma_v2 < 0:
            raise ValueError(f"link budget terms must be non-negative: {self}")


def sample_fading(rng: np.random.Generator, size=None):
    """Power gain ``|h|^2`` of a unit-variance Rayleigh channel, i.e. Exp(1)."""
    return rng.standard_exponential(size)


def signal_power(rho: float, r, alpha: float, w):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive (path loss is singular at r = 0)")
    out = rho * r ** (-alpha) * np.asarray(w, dtype=float)
    return float(out) if out.ndim == 0 else out


def aggregate_interference(active_interferers: Iterable[tuple[float, float]], rho: float, alpha: float) -> float:
    """Total received power of ``(distance, gain)`` pairs; the serving link is not included."""
    pairs = np.asarray(list(active_interferers), dtype=float).reshape(-1, 2)
    if len(pairs) == 0:
        return 0.0
    if np.any(pairs[:, 0] <= 0):
        raise ValueError("interferer at zero distance")
    return float(rho * np.sum(pairs[:, 0] ** (-alpha) * pairs[:, 1]))


def sinr(budget: LinkBudget) -> float:
    denom = budget.j + budget.sigma_v2
    if denom <= 0:
        raise ValueError("SINR undefined: interference plus noise is zero")
    return budget.s / denom


def rate(bandwidth: float, sinr_value):
    """Ergodic per-slot rate ``B log2(1 + SINR)`` in bit/s."""
    v = np.asarray(sinr_value, dtype=float)
    if np.any(v < 0):
        raise ValueError("SINR must be non-negative")
    out = bandwidth * np.log2(1.0 + v)
    return float(out) if out.ndim == 0 else out
