import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from adhoc_relay.geometry import (
    NetworkParams,
    ProbeRealization,
    mean_nodes_in_zone,
    sample_ppp_annulus,
    sample_probe_realization,
    truncation_radius,
)
from adhoc_relay.streams import stream


def count_draws(density, r_in, r_out, n, seed):
    rng = stream(seed)
    return np.array([len(sample_ppp_annulus(density, r_in, r_out, rng)) for _ in range(n)])


def test_zero_density_gives_empty():
    pts = sample_ppp_annulus(0.0, 0.0, 5.0, stream(1))
    assert pts.shape == (0, 2)


def test_mean_count_300_nodes():
    # the evaluation's 300-node windows: disk of area 300 at unit density
    counts = count_draws(1.0, 0.0, math.sqrt(300 / math.pi), 2000, 2)
    se = math.sqrt(300 / len(counts))
    assert abs(counts.mean() - 300) < 4 * se


def test_count_mean_and_variance_match_poisson():
    counts = count_draws(1.0, 0.0, math.sqrt(30 / math.pi), 10_000, 3)
    n = len(counts)
    assert abs(counts.mean() - 30) < 3 * math.sqrt(30 / n)
    # variance of the sample variance of a Poisson(mu) is about (2 mu^2 + mu) / n
    assert abs(counts.var(ddof=1) - 30) < 4 * math.sqrt((2 * 30**2 + 30) / n)


def test_annulus_count_and_support():
    rng = stream(4)
    counts, radii = [], []
    for _ in range(10_000):
        pts = sample_ppp_annulus(0.5, 1.0, 2.0, rng)
        counts.append(len(pts))
        radii.extend(np.hypot(pts[:, 0], pts[:, 1]))
    mu = 0.5 * math.pi * 3
    assert abs(np.mean(counts) - mu) < 4 * math.sqrt(mu / len(counts))
    radii = np.array(radii)
    assert radii.min() > 1.0 and radii.max() <= 2.0


def test_radial_distribution_is_uniform_on_disk():
    rng = stream(5)
    pts = np.concatenate([sample_ppp_annulus(1.0, 0.0, 3.0, rng) for _ in range(400)])[:10_000]
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert stats.kstest(r, lambda x: np.clip(x / 3.0, 0, 1) ** 2).pvalue > 0.01
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    assert stats.kstest(ang, stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 0.01


def test_invalid_annulus_rejected():
    with pytest.raises(ValueError):
        sample_ppp_annulus(1.0, 2.0, 1.0, stream(0))
    with pytest.raises(ValueError):
        sample_ppp_annulus(-1.0, 0.0, 1.0, stream(0))


def test_mean_nodes_in_zone_examples():
    assert mean_nodes_in_zone(NetworkParams(lam=1.0, r_a=math.sqrt(30 / math.pi))) == pytest.approx(30.0, rel=1e-14)
    assert mean_nodes_in_zone(NetworkParams(lam=1.0, r_a=0.0)) == 0.0
    assert mean_nodes_in_zone(NetworkParams(lam=2.0, r_a=1.0)) == pytest.approx(6.283185307179586, rel=1e-14)


def test_probe_realization_counts():
    params = NetworkParams.from_mean_nodes(30.0)
    rng = stream(6)
    n = [sample_probe_realization(params, params.r_a, rng).n_neighbors for _ in range(3000)]
    assert abs(np.mean(n) - 30) < 4 * math.sqrt(30 / 3000)


def test_background_count_oracle():
    params = NetworkParams(lam=1.0, r_a=1.0)
    rng = stream(7)
    bg = [len(sample_probe_realization(params, 10.0, rng).background_w) for _ in range(1000)]
    mu = math.pi * (100 - 1)
    assert abs(np.mean(bg) - mu) < 3 * math.sqrt(mu / 1000)


def test_zero_width_background_is_empty():
    params = NetworkParams.from_mean_nodes(10.0)
    real = sample_probe_realization(params, params.r_a, stream(8))
    assert len(real.background_w) == 0


def test_probe_realization_invariants():
    params = NetworkParams.from_mean_nodes(20.0)
    real = sample_probe_realization(params, 3 * params.r_a, stream(9))
    assert np.all(real.neighbor_dist <= params.r_a)
    bg_r = np.hypot(real.background_xy[:, 0], real.background_xy[:, 1])
    assert np.all((bg_r > params.r_a) & (bg_r <= 3 * params.r_a))
    assert np.all(real.neighbor_w > 0) and np.all(real.background_w > 0)
    with pytest.raises(ValueError):
        sample_probe_realization(params, 0.5 * params.r_a, stream(9))


def test_streams_are_reproducible():
    params = NetworkParams.from_mean_nodes(15.0)
    a = sample_probe_realization(params, 2 * params.r_a, stream(11, 3))
    b = sample_probe_realization(params, 2 * params.r_a, stream(11, 3))
    np.testing.assert_array_equal(a.neighbor_xy, b.neighbor_xy)
    np.testing.assert_array_equal(a.background_w, b.background_w)


@pytest.mark.parametrize(
    "kw",
    [dict(lam=0.0), dict(p_tx=1.5), dict(alpha=2.0), dict(rho=0.0), dict(sigma_v2=-1.0), dict(r_a=-1.0), dict(bandwidth=0.0)],
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        NetworkParams(**kw)


def test_truncation_radius_budget():
    # dropped tail: fluctuation std at the budget of the reference mean
    p = NetworkParams(p_tx=0.2, alpha=4.0)
    r = truncation_radius(p, 1e-3)
    lp, a = p.lam * p.p_tx, p.alpha
    r_z = math.sqrt((a - 2) / (a * math.pi * lp))
    mean_ref = 2 * math.pi * lp * r_z ** (2 - a) / (a - 2)
    # Campbell: variance = lam p E[W^2] int_r^inf s^(-2a) 2 pi s ds, with E[W^2] = 2 for Exp(1)
    std_tail = math.sqrt(lp * 2.0 * 2 * math.pi * r ** (2 - 2 * a) / (2 * a - 2))
    assert std_tail == pytest.approx(1e-3 * mean_ref, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(n_bar=st.floats(0.5, 80), lam=st.floats(0.01, 10))
def test_from_mean_nodes_round_trip(n_bar, lam):
    p = NetworkParams.from_mean_nodes(n_bar, lam=lam)
    assert p.n_bar_a == pytest.approx(n_bar, rel=1e-12)


def test_from_neighbors_has_no_background():
    real = ProbeRealization.from_neighbors([[1.0, 0.0], [0.0, 2.0]], [1.0, 0.5], 3.0)
    assert real.n_neighbors == 2 and real.background == []
    np.testing.assert_allclose(real.neighbor_dist, [1.0, 2.0])
