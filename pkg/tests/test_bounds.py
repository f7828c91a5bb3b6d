import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from adhoc_relay import bounds, validation
from adhoc_relay.bounds import CandidateGeometry, GeometryError
from adhoc_relay.geometry import NetworkParams, ProbeRealization
from adhoc_relay.streams import stream

P_UNIT_RZ = 1 / (2 * math.pi)  # lam = 1, alpha = 4: r_z = 1


def params_rz(r_z=1.0, r_a=2.0, alpha=4.0, **kw):
    """Params with lam = 1 whose threshold radius is ``r_z``."""
    p = (alpha - 2) / (alpha * math.pi * r_z**2)
    return NetworkParams(lam=1.0, p_tx=p, alpha=alpha, r_a=r_a, **kw)


# --- threshold radius, theta_s ------------------------------------------------

def test_threshold_radius_examples():
    # sqrt(2 / (4 pi 0.15)) = sqrt(1 / (0.3 pi))
    assert bounds.threshold_radius(NetworkParams(p_tx=0.15, alpha=4.0)) == pytest.approx(1.0300645, abs=5e-8)
    assert bounds.threshold_radius(NetworkParams(p_tx=P_UNIT_RZ, alpha=4.0)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        bounds.threshold_radius(NetworkParams(p_tx=0.0))


@given(p1=st.floats(0.01, 0.98), dp=st.floats(0.001, 0.5))
def test_threshold_radius_decreasing(p1, dp):
    p2 = min(p1 + dp, 1.0)
    assert bounds.threshold_radius(NetworkParams(p_tx=p2)) < bounds.threshold_radius(NetworkParams(p_tx=p1))


def test_theta_s_examples():
    assert bounds.theta_s(CandidateGeometry(0.5, 2.0, 1.0)) == 0.0
    assert bounds.theta_s(CandidateGeometry(1.5, 2.0, 1.0)) == pytest.approx(math.acos(0.25), abs=1e-12)
    assert math.acos(0.25) == pytest.approx(1.318116, abs=5e-7)
    assert bounds.theta_s(CandidateGeometry(1.0, 2.0, 1.0)) == 0.0


def test_theta_s_continuous_at_case_boundary():
    for eps in (1e-4, 1e-6, 1e-8):
        assert bounds.theta_s(CandidateGeometry(1.0 + eps, 2.0, 1.0)) < 10 * math.sqrt(eps)


def test_geometry_contract():
    with pytest.raises(GeometryError):
        CandidateGeometry(0.0, 2.0, 1.0)
    with pytest.raises(GeometryError):
        CandidateGeometry(2.5, 2.0, 1.0)
    with pytest.raises(GeometryError):
        bounds.b_t_area(CandidateGeometry(0.5, 2.0, 1.0))


# --- overlap area -------------------------------------------------------------

def test_b_t_area_tangency_limit():
    assert bounds.b_t_area(CandidateGeometry(1.0 + 1e-9, 2.0, 1.0)) < 1e-10


def test_b_t_area_half_plane_limit():
    r_z = 1e-3
    area = bounds.b_t_area(CandidateGeometry(5.0, 5.0, r_z))
    assert area == pytest.approx(math.pi * r_z**2 / 2, rel=1e-3)


def test_b_t_area_monte_carlo_oracle():
    rng = stream(21)
    n = 10_000_000
    r = np.sqrt(rng.random(n))
    th = rng.random(n) * 2 * math.pi
    x = 1.5 + r * np.cos(th)
    y = r * np.sin(th)
    frac = np.mean(x * x + y * y > 4.0)
    oracle = frac * math.pi
    assert bounds.b_t_area(CandidateGeometry(1.5, 2.0, 1.0)) == pytest.approx(oracle, rel=5e-3)


def test_printed_area_formula_does_not_match_geometry():
    # reported as a finding by validate-bounds
    g = CandidateGeometry(1.5, 2.0, 1.0)
    assert not math.isclose(bounds.b_t_area_printed(g), bounds.b_t_area(g), rel_tol=1e-3)


# --- zone-free probability ----------------------------------------------------

def test_p_zone_free_examples():
    params = params_rz(1.0, 10.0)
    lone = ProbeRealization.from_neighbors([[1.0, 0.0]], [1.0], 10.0)
    assert bounds.p_zone_free(0, lone, params) == 1.0
    two = ProbeRealization.from_neighbors([[1.0, 0.0], [1.5, 0.0], [1.0, 0.5]], [1.0] * 3, 10.0)
    half = NetworkParams(lam=1.0, p_tx=0.5, alpha=4.0, r_a=10.0)
    assert bounds.threshold_radius(half) > 0.5
    assert bounds.p_zone_free(0, two, half) == pytest.approx(0.25, rel=1e-14)


def test_p_zone_free_continuous_across_cases():
    params = params_rz(1.0, 2.0)
    real = lambda d: ProbeRealization.from_neighbors([[d, 0.0]], [1.0], 2.0)
    inside = bounds.p_zone_free(0, real(1.0), params)
    for eps in (1e-6, 1e-8, 1e-10):
        assert abs(bounds.p_zone_free(0, real(1.0 + eps), params) - inside) < 1e-6


@pytest.mark.parametrize("overlap", [False, True])
def test_p_zone_free_monte_carlo(overlap):
    params = NetworkParams.from_mean_nodes(30.0, p_tx=0.15, alpha=4.0)
    r_z = bounds.threshold_radius(params)
    rng = stream(22, int(overlap))
    while True:
        real, cand = validation.knowledge_set(params, rng)
        if (r_z + real.neighbor_dist[cand] > params.r_a) == overlap:
            break
    freq, se = validation.mc_zone_free(real, cand, params, 100_000, rng)
    assert abs(freq - bounds.p_zone_free(cand, real, params)) <= 4 * se


# --- interference expectations ------------------------------------------------

def test_jbar1_examples():
    params = NetworkParams(lam=1.0, p_tx=0.5, alpha=4.0, r_a=10.0)
    assert bounds.threshold_radius(params) < 2
    lone = ProbeRealization.from_neighbors([[1.0, 0.0]], [1.0], 10.0)
    assert bounds.jbar1(0, lone, params) == 0.0
    pair = ProbeRealization.from_neighbors([[1.0, 0.0], [3.0, 0.0]], [1.0, 1.0], 10.0)
    assert bounds.jbar1(0, pair, params) == pytest.approx(0.03125, rel=1e-14)


def test_jbar1_is_mean_of_known_interference():
    params = NetworkParams(lam=1.0, p_tx=0.3, alpha=3.0, r_a=5.0)
    real = ProbeRealization.from_neighbors([[1.0, 0.0], [3.0, 1.0], [-2.0, 2.0], [0.0, -3.5]], [1.0] * 4, 5.0)
    rng = stream(23)
    n = 100_000
    c = real.neighbor_xy[0]
    d = np.hypot(*(real.neighbor_xy[1:] - c).T)
    far = d > bounds.threshold_radius(params)
    samples = ((rng.random((n, 3)) < params.p_tx) * rng.standard_exponential((n, 3)) * (far * d ** -params.alpha)).sum(axis=1)
    assert abs(samples.mean() - bounds.jbar1(0, real, params)) < 4 * samples.std() / math.sqrt(n)


def test_jbar2_at_the_centre():
    params = params_rz(0.5, 2.0)
    geom = CandidateGeometry(1e-9, 2.0, 0.5)
    expected = math.pi * params.rho * params.lam * params.p_tx / params.r_a**2
    assert bounds.jbar2(geom, params) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("alpha", [3.0, 4.0])
def test_jbar2_closed_matches_quadrature_example(alpha):
    params = params_rz(1.0, 2.0, alpha)
    geom = CandidateGeometry.of(1.5, params)
    assert geom.r_z == pytest.approx(1.0)
    assert bounds.jbar2(geom, params, "closed") == pytest.approx(bounds.jbar2(geom, params, "quad"), rel=1e-8)


def test_jbar2_reduces_to_full_circle_when_interior():
    params = params_rz(0.5, 3.0, 3.0)
    geom = CandidateGeometry.of(1.0, params)
    assert bounds.theta_s(geom) == 0.0 and bounds.jbar21(geom, params) == 0.0
    full, _ = integrate.quad(lambda t: bounds._r0(t, 1.0, 3.0) ** (2 - 3.0), 0.0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13)
    assert bounds.jbar2(geom, params) == pytest.approx(params.lam * params.p_tx * full / (3.0 - 2), rel=1e-9)


def test_printed_alpha4_form_differs_in_overlap_case():
    params = params_rz(1.0, 2.0, 4.0)
    geom = CandidateGeometry.of(1.5, params)
    quad = bounds.jbar2(geom, params, "quad")
    assert not math.isclose(bounds.jbar2(geom, params, "printed"), quad, rel_tol=1e-3)


@pytest.mark.parametrize("alpha", [3.0, 4.0])
def test_closed_forms_over_random_geometries(alpha):
    rows = validation.closed_form_rows(alpha, 100, seed=5)
    closed = [r for r in rows if r.check == "jbar2_closed"]
    assert len(closed) == 100
    assert {r.case for r in closed} == {"interior", "overlap"}
    assert all(r.status == "pass" for r in closed), [r for r in closed if r.status != "pass"][:3]


def test_jbar2_general_alpha_uses_quadrature():
    params = params_rz(1.0, 2.0, 3.5)
    geom = CandidateGeometry.of(1.5, params)
    assert bounds.jbar2(geom, params) == bounds.jbar2(geom, params, "quad")
    with pytest.raises(ValueError):
        bounds.jbar2(geom, params, "closed")


def test_interference_oracle_one_set():
    rows = validation.interference_rows(4.0, 2, 100_000, seed=9)
    assert all(r.status == "pass" for r in rows)


def test_exterior_mean_matches_double_integral():
    params = NetworkParams(lam=1.0, p_tx=0.2, alpha=3.0)
    d, radius = 1.3, 4.0
    inner = lambda r, t: (r * r + d * d - 2 * r * d * math.cos(t)) ** (-1.5) * r
    val, _ = integrate.dblquad(inner, 0, 2 * math.pi, radius, np.inf, epsabs=1e-12, epsrel=1e-10)
    assert bounds.exterior_mean_interference(d, radius, params) == pytest.approx(0.2 * val, rel=1e-8)


# --- elliptic, gamma, bound -----------------------------------------------------

def e_def(phi, m):
    # split at odd multiples of pi/2, where the integrand has a kink when m = 1
    kinks = [k * math.pi / 2 for k in (1, 3) if 0 < k * math.pi / 2 < phi]
    f = lambda t: math.sqrt(max(1 - m * math.sin(t) ** 2, 0.0))
    with warnings.catch_warnings():
        # QUADPACK flags roundoff when asked for near machine precision; its own error estimate is checked instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, 0, phi, epsabs=1e-14, epsrel=1e-14, limit=200, points=kinks or None)
    assert err < 1e-13
    return val


def test_elliptic_examples():
    assert bounds.elliptic_e_incomplete(0.7, 0.0) == pytest.approx(0.7, abs=1e-15)
    assert bounds.elliptic_e_incomplete(math.pi / 2, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert bounds.elliptic_e_incomplete(math.pi / 2, 0.5) == pytest.approx(1.350644, abs=5e-7)
    with pytest.raises(ValueError):
        bounds.elliptic_e_incomplete(1.0, 1.5)


@given(phi=st.floats(0, 2 * math.pi), m=st.floats(0, 1))
@settings(max_examples=50)
def test_elliptic_matches_definition(phi, m):
    assert bounds.elliptic_e_incomplete(phi, m) == pytest.approx(e_def(phi, m), abs=1e-12)


def test_gamma_const_examples():
    p = NetworkParams(p_tx=0.15, alpha=4.0)
    g = bounds.gamma_const(p)
    # (1/2) (0.3 pi Gamma(3/2))^2 = 0.045 pi^3 / 4
    assert g == pytest.approx(0.045 * math.pi**3 / 4, rel=1e-13)
    assert g == pytest.approx(0.3488206, abs=5e-8)
    assert g == pytest.approx(0.5 * (2 * math.pi * 0.15 * math.sqrt(math.pi) / 2) ** 2, rel=1e-13)
    assert bounds.gamma_const(p.with_(rho=3.0)) == pytest.approx(3 * g, rel=1e-14)


def test_bound_value_examples():
    assert bounds._bound_value(1.0, 1.0, 1.0, 1.0) == 1.0
    params = NetworkParams.from_mean_nodes(10.0, p_tx=0.2)
    real = ProbeRealization.from_neighbors([[1.0, 0.0], [0.5, 0.5]], [0.0, 1.0], params.r_a)
    assert bounds.bound_g(0, real, params) == 0.0


def test_bound_terms_all_match_scalar_versions():
    params = NetworkParams.from_mean_nodes(30.0, p_tx=0.15, alpha=3.0)
    real, _ = validation.knowledge_set(params, stream(24))
    t = bounds.bound_terms_all(real, params)
    m = bounds.bound_metrics(real, params)
    for i in range(real.n_neighbors):
        terms = bounds.bound_terms(i, real, params)
        assert t["p_z"][i] == pytest.approx(terms.p_z, rel=1e-12)
        assert t["j1"][i] == pytest.approx(terms.j1, rel=1e-12, abs=1e-300)
        assert t["j2"][i] == pytest.approx(terms.j2, rel=1e-10)
        assert m[i] == pytest.approx(bounds.bound_g(i, real, params), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(n_bar=st.floats(1, 60), p=st.floats(0.02, 0.9), u=st.floats(0.001, 1.0), alpha=st.sampled_from([2.5, 3.0, 4.0, 5.0]))
def test_outputs_in_range(n_bar, p, u, alpha):
    params = NetworkParams.from_mean_nodes(n_bar, p_tx=p, alpha=alpha)
    d = params.r_a * math.sqrt(u)
    geom = CandidateGeometry.of(d, params)
    assert 0 <= bounds.theta_s(geom) <= math.pi
    assert bounds.jbar2(geom, params) >= 0
    real = ProbeRealization.from_neighbors([[d, 0.0], [0.0, 0.3 * params.r_a]], [1.0, 1.0], params.r_a)
    assert 0 <= bounds.p_zone_free(0, real, params) <= 1
    assert bounds.jbar1(0, real, params) >= 0
