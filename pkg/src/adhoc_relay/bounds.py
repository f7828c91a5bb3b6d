"""Closed-form kernel of the lower bound on the conditional ergodic rate.

For a candidate relay at distance ``d`` from the probe the bound conditions on
its *threshold zone* (a disk of radius ``r_z`` around the candidate) being
free of transmitters.  It needs

* ``p_z``  probability of that event given the known neighbours,
* ``j1``   mean interference from known neighbours outside the threshold zone,
* ``j2``   mean interference from unknown nodes outside both zones.

``j2`` is computed in a frame centred on the candidate, where the edge of the
routing zone is ``r0(theta) = -d cos(theta) + sqrt(r_a^2 - d^2 sin^2(theta))``.
It splits into a cone of half-width ``theta_s`` bounded by the threshold
circle (``j21``) and the rest, bounded by the routing-zone edge (``j22``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .geometry import NetworkParams, ProbeRealization

ACOS_SLACK = 1e-9
QUAD_TOL = 1e-10
QUAD_PANELS = 10_000
# closed forms divide by (r_a^2 - d^2)^2; fall back to quadrature this close to the edge
CLOSED_FORM_EDGE = 1e-6


class GeometryError(ValueError):
    pass


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CandidateGeometry:
    d: float
    r_a: float
    r_z: float

    def __post_init__(self):
        if not (self.d > 0 and self.d <= self.r_a * (1 + 1e-12)):
            raise GeometryError(f"candidate distance must satisfy 0 < d <= r_a, got d={self.d}, r_a={self.r_a}")
        if not self.r_z > 0:
            raise GeometryError(f"r_z must be positive, got {self.r_z}")

    @property
    def interior(self) -> bool:
        """Threshold zone lies entirely inside the routing zone."""
        return self.r_z + self.d <= self.r_a

    @classmethod
    def of(cls, d: float, params: NetworkParams) -> "CandidateGeometry":
        return cls(float(d), params.r_a, threshold_radius(params))


@dataclass(frozen=True)
class BoundTerms:
    p_z: float
    j1: float
    j2: float
    theta_s: float


def threshold_radius(params: NetworkParams) -> float:
    a = params.alpha
    if a <= 2:
        raise ValueError("threshold radius needs alpha > 2")
    if params.p_tx <= 0:
        raise ValueError("threshold radius needs p_tx > 0")
    return math.sqrt((a - 2) / (a * math.pi * params.lam * params.p_tx))


def _theta_s(d, r_a, r_z):
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (r_a**2 - r_z**2 - d**2) / (2 * r_z * d)
    interior = r_z + d <= r_a
    # routing zone swallowed by the threshold zone: the cone is the full circle
    contained = r_z >= d + r_a
    bad = ~interior & ~contained & ((c < -1 - ACOS_SLACK) | (c > 1 + ACOS_SLACK))
    if np.any(bad):
        raise GeometryError(f"arccos argument out of range: {c[bad] if c.ndim else c}")
    th = np.arccos(np.clip(c, -1.0, 1.0))
    th = np.where(interior, 0.0, np.where(contained, math.pi, th))
    return th


def theta_s(geom: CandidateGeometry) -> float:
    """Half-angle (seen from the candidate) of the threshold-zone arc outside the routing zone."""
    return float(_theta_s(geom.d, geom.r_a, geom.r_z))


def _lens_area(d, big, small):
    """Intersection area of two disks with centre distance ``d``."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    full = d <= np.abs(big - small)
    out = np.where(full, math.pi * min(big, small) ** 2, out)
    part = (d > np.abs(big - small)) & (d < big + small)
    if np.any(part):
        dp = d[part] if d.ndim else d
        a1 = np.clip((dp**2 + small**2 - big**2) / (2 * dp * small), -1, 1)
        a2 = np.clip((dp**2 + big**2 - small**2) / (2 * dp * big), -1, 1)
        k = (-dp + small + big) * (dp + small - big) * (dp - small + big) * (dp + small + big)
        lens = small**2 * np.arccos(a1) + big**2 * np.arccos(a2) - 0.5 * np.sqrt(np.maximum(k, 0.0))
        if d.ndim:
            out[part] = lens
        else:
            out = lens
    return out


def _outside_area(d, r_a, r_z):
    return np.maximum(math.pi * r_z**2 - _lens_area(d, r_a, r_z), 0.0)


def b_t_area(geom: CandidateGeometry) -> float:
    """Area of the threshold zone that falls outside the routing zone."""
    if geom.interior:
        raise GeometryError("b_t_area is only defined when the threshold zone crosses the routing-zone edge")
    return float(_outside_area(geom.d, geom.r_a, geom.r_z))


def b_t_area_printed(geom: CandidateGeometry) -> float:
    """The published chord-integral expression for the same area, read with ``x = x0``.

    Kept for validation only; it does not reproduce the geometric area.
    """
    d, ra, rz = geom.d, geom.r_a, geom.r_z
    x0 = (ra**2 + d**2 - rz**2) / (2 * d)
    sz = math.sqrt(max(rz**2 - (d - x0) ** 2, 0.0))
    sa = math.sqrt(max(ra**2 - x0**2, 0.0))
    return (
        rz**2 * math.atan2(x0 - d, sz)
        + (x0 - d) * math.sqrt(max(-(d**2) + 2 * d * x0 - x0**2 + rz**2, 0.0))
        - ra**2 * math.atan2(x0, sa)
        - x0 * sa
    )


def _pairwise(xy: np.ndarray) -> np.ndarray:
    diff = xy[:, None, :] - xy[None, :, :]
    dd = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dd, np.inf)
    return dd


def _zone_counts(realization: ProbeRealization, params: NetworkParams, r_z: float):
    dd = _pairwise(realization.neighbor_xy)
    inside = dd <= r_z
    n_z = inside.sum(axis=1)
    with np.errstate(divide="ignore"):
        far = np.where(inside, 0.0, dd ** (-params.alpha))
    j1 = params.p_tx * params.rho * far.sum(axis=1)
    return n_z, j1


def p_zone_free(candidate: int, realization: ProbeRealization, params: NetworkParams) -> float:
    """Probability that no transmitter lies within ``r_z`` of the candidate."""
    r_z = threshold_radius(params)
    xy = realization.neighbor_xy
    dist = np.hypot(*(xy - xy[candidate]).T)
    dist[candidate] = np.inf
    n_z = int(np.sum(dist <= r_z))
    d = float(realization.neighbor_dist[candidate])
    b_t = float(_outside_area(d, params.r_a, r_z))
    return math.exp(-params.lam * params.p_tx * b_t) * (1 - params.p_tx) ** n_z


def jbar1(candidate: int, realization: ProbeRealization, params: NetworkParams) -> float:
    r_z = threshold_radius(params)
    xy = realization.neighbor_xy
    dist = np.hypot(*(xy - xy[candidate]).T)
    dist[candidate] = 0.0
    far = dist > r_z
    return float(params.p_tx * params.rho * np.sum(dist[far] ** (-params.alpha)))


def _r0(theta, d, r_a):
    return -d * np.cos(theta) + np.sqrt(r_a**2 - d**2 * np.sin(theta) ** 2)


def jbar21(geom: CandidateGeometry, params: NetworkParams) -> float:
    a = params.alpha
    ts = theta_s(geom)
    return 2 * ts * params.rho * params.lam * params.p_tx * geom.r_z ** (2 - a) / (a - 2)


def jbar22_quad(geom: CandidateGeometry, params: NetworkParams) -> float:
    """Routing-zone-edge part of ``j2`` by adaptive quadrature (QUADPACK QAGS)."""
    a = params.alpha
    ts = theta_s(geom)
    if ts >= math.pi:
        return 0.0
    d, ra = geom.d, geom.r_a
    val, abserr, info = integrate.quad(
        lambda t: _r0(t, d, ra) ** (2 - a),
        ts,
        math.pi,
        epsabs=QUAD_TOL,
        epsrel=QUAD_TOL,
        limit=QUAD_PANELS,
        full_output=True,
    )[:3]
    if abserr > 1e-8 * max(abs(val), 1e-300):
        raise QuadratureError(
            f"quadrature did not converge: value={val}, abserr={abserr}, "
            f"panels={info.get('last')}, geometry={geom}, alpha={a}"
        )
    return 2 * val * params.rho * params.lam * params.p_tx / (a - 2)


def _jbar22_alpha4(d, ra, ts):
    u = d * np.sin(ts)
    num = 2 * ra**2 * (math.pi - ts) - d**2 * np.sin(2 * ts) - 2 * u * np.sqrt(ra**2 - u**2) - 2 * ra**2 * np.arcsin(u / ra)
    return num / (2 * (ra**2 - d**2) ** 2)


def _jbar22_alpha4_printed(d, ra, ts):
    s = np.sqrt(2 * ra**2 + d**2 * np.cos(2 * ts) - d**2)
    bracket = (
        -2 * d * np.sin(ts) * np.sqrt(4 * ra**2 + 2 * d**2 * np.cos(2 * ts) - 2 * d**2)
        - 2 * ra**2 * np.arctan(math.sqrt(2) * d * np.sin(ts) / s)
        + 4 * ra**2 * (math.pi - ts)
        - 2 * d**2 * np.sin(2 * ts)
    )
    return bracket / (4 * (ra**2 - d**2) ** 2)


def _jbar22_alpha3(d, ra, ts):
    m = d**2 / ra**2
    e_diff = special.ellipeinc(2 * math.pi - ts, m) - special.ellipeinc(ts, m)
    first = -2 * d * np.sin(ts) / (ra**2 - d**2)
    root = np.sqrt(m * np.cos(2 * ts) - m + 2) / np.sqrt(2 * ra**2 + d**2 * np.cos(2 * ts) - d**2)
    return first + e_diff * ra**2 * root / (ra**2 - d**2)


def jbar22_closed(geom: CandidateGeometry, params: NetworkParams, printed: bool = False) -> float:
    """Closed form of the routing-zone-edge part for ``alpha`` in {3, 4}.

    ``printed=True`` evaluates the published alpha = 4 expression, whose
    arctan coefficient is off by a factor of two; used only for reporting.
    """
    scale = params.rho * params.lam * params.p_tx
    ts = theta_s(geom)
    if params.alpha == 4:
        f = _jbar22_alpha4_printed if printed else _jbar22_alpha4
        return scale * float(f(geom.d, geom.r_a, ts))
    if params.alpha == 3 and not printed:
        return scale * float(_jbar22_alpha3(geom.d, geom.r_a, ts))
    raise ValueError(f"no closed form for alpha={params.alpha}")


def jbar2(geom: CandidateGeometry, params: NetworkParams, method: str = "auto") -> float:
    """Mean interference from unknown nodes outside both zones.

    ``method`` is ``"auto"`` (closed form for alpha 3 and 4, quadrature
    otherwise), ``"closed"``, ``"quad"`` or ``"printed"``.
    """
    j21 = jbar21(geom, params)
    if method == "auto":
        edge = 1 - (geom.d / geom.r_a) ** 2
        method = "closed" if params.alpha in (3, 4) and edge > CLOSED_FORM_EDGE else "quad"
    if method == "quad":
        return j21 + jbar22_quad(geom, params)
    if method == "closed":
        return j21 + jbar22_closed(geom, params)
    if method == "printed":
        return j21 + jbar22_closed(geom, params, printed=True)
    raise ValueError(f"unknown method {method!r}")


def elliptic_e_incomplete(phi, m):
    """Incomplete elliptic integral of the second kind, parameter convention.

    ``E(phi | m) = integral_0^phi sqrt(1 - m sin^2 t) dt``.
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any((m_arr < 0) | (m_arr > 1)):
        raise ValueError(f"parameter m must lie in [0, 1], got {m}")
    out = special.ellipeinc(phi, m_arr)
    return float(out) if np.ndim(out) == 0 else out


def gamma_const(params: NetworkParams) -> float:
    """Mean-interference constant of the narrow-knowledge bound."""
    a = params.alpha
    if a <= 2:
        raise ValueError("gamma needs alpha > 2")
    inner = a * math.pi * params.lam * params.p_tx * special.gamma(1 + 2 / a) / (a - 2)
    return params.rho * (2 / a) * inner ** (a / 2)


def bound_terms(candidate: int, realization: ProbeRealization, params: NetworkParams, method: str = "auto") -> BoundTerms:
    geom = CandidateGeometry.of(realization.neighbor_dist[candidate], params)
    return BoundTerms(
        p_z=p_zone_free(candidate, realization, params),
        j1=jbar1(candidate, realization, params),
        j2=jbar2(geom, params, method),
        theta_s=theta_s(geom),
    )


def bound_g(candidate: int, realization: ProbeRealization, params: NetworkParams, method: str = "auto") -> float:
    """Lower bound on ``r_{i,0} G(i, M_0)``; this is also the BO routing metric."""
    t = bound_terms(candidate, realization, params, method)
    s = realization.signal_powers(params)[candidate]
    d = realization.neighbor_dist[candidate]
    return _bound_value(t.p_z, d, s, t.j1 + t.j2 + params.sigma_v2)


def _bound_value(p_z, d, s, denom):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(s > 0, s / denom, 0.0)
    out = p_z * d * np.log2(1 + ratio)
    return float(out) if np.ndim(out) == 0 else out


def bound_terms_all(realization: ProbeRealization, params: NetworkParams) -> dict[str, np.ndarray]:
    """Vectorised ``p_z``, ``j1``, ``j2``, ``theta_s`` for every neighbour."""
    r_z = threshold_radius(params)
    d = realization.neighbor_dist
    n_z, j1 = _zone_counts(realization, params, r_z)
    ts = _theta_s(d, params.r_a, r_z)
    b_t = _outside_area(d, params.r_a, r_z)
    p_z = np.exp(-params.lam * params.p_tx * b_t) * (1 - params.p_tx) ** n_z
    a = params.alpha
    scale = params.rho * params.lam * params.p_tx
    j21 = 2 * ts * scale * r_z ** (2 - a) / (a - 2)
    j22 = np.zeros_like(d)
    edge = 1 - (d / params.r_a) ** 2
    closed = (edge > CLOSED_FORM_EDGE) & (ts < math.pi) if a in (3, 4) else np.zeros(d.shape, bool)
    if np.any(closed):
        f = _jbar22_alpha4 if a == 4 else _jbar22_alpha3
        j22[closed] = scale * f(d[closed], params.r_a, ts[closed])
    for k in np.flatnonzero(~closed & (ts < math.pi)):
        j22[k] = jbar22_quad(CandidateGeometry(float(d[k]), params.r_a, r_z), params)
    return {"p_z": p_z, "j1": j1, "j2": j21 + j22, "theta_s": ts, "n_z": n_z}


def bound_metrics(realization: ProbeRealization, params: NetworkParams) -> np.ndarray:
    t = bound_terms_all(realization, params)
    s = realization.signal_powers(params)
    return np.asarray(_bound_value(t["p_z"], realization.neighbor_dist, s, t["j1"] + t["j2"] + params.sigma_v2), dtype=float).reshape(-1)


def exterior_mean_interference(d, radius: float, params: NetworkParams, nodes: int = 128):
    """Mean interference at distance ``d`` from the probe due to transmitters beyond ``radius``.

    Trapezoid rule on the periodic integrand; spectrally accurate for
    ``d / radius`` bounded away from one.
    """
    d = np.asarray(d, dtype=float)
    a = params.alpha
    th = np.linspace(0.0, 2 * math.pi, nodes, endpoint=False)
    r0 = _r0(th[None, :], d.reshape(-1, 1), radius)
    out = params.rho * params.lam * params.p_tx / (a - 2) * (r0 ** (2 - a)).mean(axis=1) * 2 * math.pi
    return out.reshape(d.shape) if d.ndim else float(out[0])
