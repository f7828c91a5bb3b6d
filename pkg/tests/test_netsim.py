import math
from dataclasses import replace

import numpy as np
import pytest

from adhoc_relay import netsim
from adhoc_relay.geometry import NetworkParams
from adhoc_relay.netsim import SimConfig
from adhoc_relay.schemes import SchemeId
from adhoc_relay.streams import stream


def line_config(**kw):
    base = dict(area=400.0, mobility_sigma=0.0, gen_prob=0.0, fading="none", slots=0, scheme=SchemeId.NN,
                params=NetworkParams(lam=1.0, p_tx=0.5, alpha=3.0, sigma_v2=0.5, r_a=1.5))
    base.update(kw)
    return SimConfig(**base)


@pytest.mark.parametrize("sigma_v2,expected", [(1.0, 20), (0.5, 13), (0.05, 5)])
def test_single_link_needs_ceil_k_over_rate_transmissions(sigma_v2, expected):
    # oracle: with no fading or interference every transmission adds log2(1 + 1/sigma^2) bits
    assert expected == math.ceil(20.0 / math.log2(1.0 + 1.0 / sigma_v2))
    cfg = line_config(params=NetworkParams(lam=1.0, p_tx=0.5, alpha=3.0, sigma_v2=sigma_v2, r_a=1.5))
    rng = stream(11)
    state = netsim.init_state(cfg, rng, homes=[[5.0, 5.0], [6.0, 5.0]])
    netsim.new_message(state, cfg, 0, 1)
    for _ in range(1000):
        netsim.run_slot(state, cfg, rng)
        netsim.check_conservation(state)
        if state.delivered:
            break
    assert state.delivered == 1
    assert state.tx_counts[0] == expected and state.tx_counts[1] == 0
    assert state.delivered_distance == pytest.approx(1.0)


@pytest.mark.parametrize("scheme", ["NBO", "NN", "THRESHOLD", "SO", "BO", "NSO"])
def test_conservation_and_partial_information(scheme):
    cfg = SimConfig.desk(0.2, scheme, slots=60, so_samples=20, threshold=0.05, seed=3)
    run = netsim.run_sim(cfg, check_every=1)
    assert run.generated >= run.delivered >= 0
    assert run.eer >= 0


def test_silent_mac_changes_only_positions_and_buffers():
    cfg = SimConfig.desk(0.2, "NBO", slots=0)
    cfg = replace(cfg, params=cfg.params.with_(p_tx=0.0))
    rng = stream(5)
    state = netsim.init_state(cfg, rng)
    for _ in range(30):
        netsim.run_slot(state, cfg, rng)
    assert state.tx_counts.sum() == 0 and state.delivered == 0
    assert all(len(nd.buffer) == cfg.buffer_target for nd in state.nodes)
    assert all(m.accumulated_mi == 0 for m in state.messages.values())


def test_empty_buffers_never_transmit():
    cfg = replace(SimConfig.desk(0.2, "NN"), gen_prob=0.0)
    cfg = replace(cfg, params=cfg.params.with_(p_tx=1.0))
    rng = stream(6)
    state = netsim.init_state(cfg, rng)
    for _ in range(20):
        netsim.run_slot(state, cfg, rng)
    assert state.tx_counts.sum() == 0 and state.generated == 0


def test_zero_slots_or_no_traffic_give_zero_eer():
    assert netsim.run_sim(SimConfig.desk(0.2, slots=0)).eer == 0.0
    run = netsim.run_sim(SimConfig.desk(0.2, slots=50, gen_prob=0.0))
    assert run.eer == 0.0 and run.generated == 0


def test_eer_value_example():
    cfg = SimConfig.desk(0.2)
    # 100 m of delivered distance, 20-bit messages, 10 slots, 1000 m^2, unit bandwidth
    assert netsim.eer_value(100.0, 10, cfg) == pytest.approx(0.2)


def test_static_nodes_stay_home():
    cfg = replace(SimConfig.desk(0.2), mobility_sigma=0.0)
    rng = stream(7)
    state = netsim.init_state(cfg, rng)
    netsim.run_slot(state, cfg, rng)
    np.testing.assert_array_equal(state.pos, state.home)


def test_mobility_displacement_moments():
    nodes = [netsim.NodeState(i, netsim.Point2(0.0, 0.0), netsim.Point2(0.0, 0.0)) for i in range(50_000)]
    netsim.step_mobility(nodes, 1.7, stream(8))
    xy = np.array([nd.position for nd in nodes])
    assert np.all(np.abs(xy.mean(axis=0)) < 5 * 1.7 / math.sqrt(len(nodes)))
    np.testing.assert_allclose(xy.var(axis=0), 1.7**2, rtol=0.03)
    with pytest.raises(ValueError):
        netsim.step_mobility(nodes, -1.0, stream(8))


def test_torus_delta_uses_minimal_image():
    np.testing.assert_allclose(netsim.torus_delta([1.0, 1.0], [9.0, 2.0], 10.0), [-2.0, 1.0])
    np.testing.assert_allclose(netsim.torus_delta([5.0, 5.0], [6.0, 4.0], 10.0), [1.0, -1.0])


def _relabel_run(perm, homes, msgs, slots=40):
    cfg = line_config(scheme=SchemeId.NBO, params=NetworkParams(lam=1.0, p_tx=1.0, alpha=3.0, sigma_v2=0.3, r_a=1.6))
    rng = stream(9)
    inv = np.argsort(perm)
    state = netsim.init_state(cfg, rng, homes=np.asarray(homes)[inv])
    for s, d in msgs:
        netsim.new_message(state, cfg, int(perm[s]), int(perm[d]))
    trace = []
    for _ in range(slots):
        netsim.run_slot(state, cfg, rng)
        trace.append((state.delivered, state.delivered_distance))
    return state, trace


def test_relabeling_nodes_does_not_change_the_dynamics():
    homes = [[1.0, 1.0], [2.1, 1.3], [3.0, 0.7], [4.2, 1.1], [5.1, 1.6], [6.3, 1.0]]
    msgs = [(0, 5), (5, 0), (2, 4)]
    ident = np.arange(6)
    perm = np.array([3, 5, 0, 4, 1, 2])
    a, ta = _relabel_run(ident, homes, msgs)
    b, tb = _relabel_run(perm, homes, msgs)
    assert [t[0] for t in ta] == [t[0] for t in tb]
    np.testing.assert_allclose([t[1] for t in ta], [t[1] for t in tb], rtol=1e-12)
    assert any(m.hops > 0 for m in a.messages.values())
    for mid, m in a.messages.items():
        assert b.messages[mid].holder == perm[m.holder]
        assert b.messages[mid].accumulated_mi == pytest.approx(m.accumulated_mi, rel=1e-12)
    np.testing.assert_array_equal(b.tx_counts[perm], a.tx_counts)


def test_saturated_nodes_transmit_at_the_aloha_rate():
    cfg = SimConfig.desk(0.3, "NN", slots=2000, seed=4)
    rng = stream(4)
    state = netsim.init_state(cfg, rng)
    for _ in range(cfg.slots):
        netsim.run_slot(state, cfg, rng)
    n = cfg.slots - 1  # buffers are empty only during the first slot
    z = (state.tx_counts - 0.3 * n) / math.sqrt(n * 0.3 * 0.7)
    assert np.all(np.abs(z) < 5)
    assert abs(z.mean()) < 5 / math.sqrt(len(z))


def _choice_state():
    cfg = line_config()
    homes = [[0.0, 0.0], [1.0, 0.0], [3.0, 3.0], [6.0, 0.0], [6.0, -6.0]]
    state = netsim.init_state(cfg, stream(1), homes=np.array(homes) + 100.0)
    a = netsim.new_message(state, cfg, 0, 2)  # heads diagonally
    b = netsim.new_message(state, cfg, 0, 3)  # source-destination axis is vertical
    state.messages[b.id].source = 4
    return cfg, state, a, b


def test_message_choice_rules():
    cfg, state, a, b = _choice_state()
    # distance gain: a -> sqrt(18) - sqrt(13) = 0.637, b -> 6 - 5 = 1
    assert netsim.choose_message(state, 0, 1, cfg.side, "distance") == b.id
    # projection: a -> 1/sqrt(2), b -> 0
    assert netsim.choose_message(state, 0, 1, cfg.side, "projection") == a.id
    c = netsim.new_message(state, cfg, 0, 1)
    assert netsim.choose_message(state, 0, 1, cfg.side, "distance") == c.id
    with pytest.raises(ValueError):
        netsim.choose_message(state, 0, 1, cfg.side, "bogus")


def test_batch_stderr():
    assert netsim.batch_stderr(np.ones(100)) == 0.0
    assert math.isnan(netsim.batch_stderr(np.ones(10)))
    # averaged over many white-noise series the batch estimate matches sigma / sqrt(n)
    rng = np.random.default_rng(0)
    ratios = [netsim.batch_stderr(rng.standard_normal(20_000)) * math.sqrt(20_000) for _ in range(300)]
    assert abs(np.mean(ratios) - 0.987) < 4 * 0.161 / math.sqrt(300)


def test_config_validation_and_fingerprint():
    with pytest.raises(ValueError):
        SimConfig(slots=-1)
    with pytest.raises(ValueError):
        SimConfig(fading="rician")
    with pytest.raises(ValueError):
        SimConfig(message_choice="random")
    assert SimConfig.desk(0.2).fingerprint() != SimConfig.desk(0.3).fingerprint()


def test_runs_are_reproducible():
    cfg = SimConfig.desk(0.2, "NBO", slots=100, seed=12)
    assert netsim.run_sim(cfg) == netsim.run_sim(cfg)
