"""Poisson point processes around a probe transmitter.

The probe transmitter sits at the origin.  Nodes inside the routing zone
(radius ``r_a``) are the known neighbours; nodes in the annulus
``(r_a, r_trunc]`` form the background field, which no routing scheme may
look at but which is needed to realise the true interference of a slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class NetworkParams:
    """Physical and MAC constants of the network.

    ``p_tx`` is accepted on the closed interval so that the degenerate ends of
    an ALOHA sweep can be represented; everything that needs a threshold zone
    rejects them.  User-facing configuration enforces the open interval.
    """

    lam: float = 1.0
    p_tx: float = 0.2
    alpha: float = 4.0
    rho: float = 1.0
    sigma_v2: float = 0.0
    bandwidth: float = 1.0
    r_a: float = math.sqrt(30.0 / math.pi)

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0.0 <= self.p_tx <= 1.0:
            raise ValueError(f"p_tx must lie in [0, 1], got {self.p_tx}")
        if not self.alpha > 2:
            raise ValueError(f"alpha must exceed 2, got {self.alpha}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.sigma_v2 >= 0:
            raise ValueError(f"sigma_v2 must be non-negative, got {self.sigma_v2}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.r_a >= 0:
            raise ValueError(f"r_a must be non-negative, got {self.r_a}")

    @classmethod
    def from_mean_nodes(cls, n_bar_a: float, lam: float = 1.0, **kw) -> "NetworkParams":
        """Build params whose routing zone holds ``n_bar_a`` nodes on average."""
        return cls(lam=lam, r_a=math.sqrt(n_bar_a / (math.pi * lam)), **kw)

    def with_(self, **changes) -> "NetworkParams":
        return replace(self, **changes)

    @property
    def n_bar_a(self) -> float:
        return mean_nodes_in_zone(self)

    def fingerprint(self) -> str:
        """Identify the interference statistics (everything except ``r_a``)."""
        return (
            f"lam={self.lam!r};p_tx={self.p_tx!r};alpha={self.alpha!r};"
            f"rho={self.rho!r};sigma_v2={self.sigma_v2!r}"
        )


@dataclass(frozen=True)
class ProbeRealization:
    """One spatial realization seen from the probe at the origin.

    Positions are ``(n, 2)`` arrays; ``*_w`` hold the fading power gain of the
    link between each node and the probe.
    """

    neighbor_xy: np.ndarray
    neighbor_w: np.ndarray
    background_xy: np.ndarray
    background_w: np.ndarray
    r_a: float
    r_trunc: float
    _dist: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_dist", np.hypot(self.neighbor_xy[:, 0], self.neighbor_xy[:, 1]))

    @property
    def n_neighbors(self) -> int:
        return len(self.neighbor_w)

    @property
    def neighbor_dist(self) -> np.ndarray:
        return self._dist

    @property
    def neighbors(self) -> list[tuple[Point2, float]]:
        return [(Point2(float(x), float(y)), float(w)) for (x, y), w in zip(self.neighbor_xy, self.neighbor_w)]

    @property
    def background(self) -> list[tuple[Point2, float]]:
        return [(Point2(float(x), float(y)), float(w)) for (x, y), w in zip(self.background_xy, self.background_w)]

    def signal_powers(self, params: NetworkParams) -> np.ndarray:
        """Desired-signal power ``S_{i,0}`` of every neighbour."""
        return params.rho * self._dist ** (-params.alpha) * self.neighbor_w

    @classmethod
    def from_neighbors(cls, xy, w, r_a: float) -> "ProbeRealization":
        """Knowledge-only realization (no background), handy for tests."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        w = np.asarray(w, dtype=float).reshape(-1)
        empty = np.empty((0, 2))
        return cls(xy, w, empty, np.empty(0), float(r_a), float(r_a))


def sample_ppp_annulus(density: float, r_inner: float, r_outer: float, rng: np.random.Generator) -> np.ndarray:
    """Sample a homogeneous PPP on the annulus ``r_inner < |x| <= r_outer``.

    Radii use the inverse CDF ``sqrt(r_i^2 + u (r_o^2 - r_i^2))``, angles are
    uniform.  Returns an ``(n, 2)`` array (possibly empty).
    """
    if not 0 <= r_inner <= r_outer:
        raise ValueError(f"need 0 <= r_inner <= r_outer, got {r_inner}, {r_outer}")
    if density < 0:
        raise ValueError(f"density must be non-negative, got {density}")
    area = math.pi * (r_outer**2 - r_inner**2)
    n = int(rng.poisson(density * area)) if density * area > 0 else 0
    r = np.sqrt(r_inner**2 + rng.random(n) * (r_outer**2 - r_inner**2))
    theta = rng.random(n) * (2 * math.pi)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def mean_nodes_in_zone(params: NetworkParams) -> float:
    return params.lam * math.pi * params.r_a**2


def truncation_radius(params: NetworkParams, budget: float = 1e-3) -> float:
    """Outer radius of the simulated background field.

    Beyond this radius the interference is replaced by its exact mean (see
    :func:`adhoc_relay.bounds.exterior_mean_interference`), so the only error
    left is the dropped fluctuation.  The radius is chosen so the standard
    deviation of the dropped tail is at most ``budget`` times the mean
    interference from outside the threshold zone of a typical receiver.
    """
    lp = params.lam * params.p_tx
    if lp <= 0:
        return params.r_a
    a = params.alpha
    r_z = math.sqrt((a - 2) / (a * math.pi * lp))
    mean_ref = 2 * math.pi * lp * r_z ** (2 - a) / (a - 2)
    std_coef = math.sqrt(2 * math.pi * lp / (a - 1))
    radius = (std_coef / (budget * mean_ref)) ** (1.0 / (a - 1))
    return max(radius, params.r_a)


def sample_probe_realization(params: NetworkParams, r_trunc: float, rng: np.random.Generator) -> ProbeRealization:
    """Neighbours on the routing disk plus background nodes out to ``r_trunc``."""
    if r_trunc < params.r_a:
        raise ValueError(f"r_trunc ({r_trunc}) must be at least r_a ({params.r_a})")
    nb = sample_ppp_annulus(params.lam, 0.0, params.r_a, rng)
    nb_w = rng.standard_exponential(len(nb))
    bg = sample_ppp_annulus(params.lam, params.r_a, r_trunc, rng)
    bg_w = rng.standard_exponential(len(bg))
    return ProbeRealization(nb, nb_w, bg, bg_w, params.r_a, float(r_trunc))
