"""Slotted multi-hop network simulation with opportunistic relaying.

Nodes live on a square torus, each wandering around a fixed home location.
In every slot a node with a non-empty buffer transmits with probability
``p_tx``.  It scores its neighbours inside the routing zone with the chosen
scheme, picks a relay, then sends the buffered message that the hop pushes
furthest toward its destination.  The relay accumulates mutual information
``log2(1 + SINR)`` for that message and takes custody once it holds ``K``
bits.  The figure of merit is the end-to-end rate-distance density (eeR).

All positions and displacements use minimal-image (wrap-around) vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds, schemes
from .geometry import NetworkParams, Point2, ProbeRealization
from .schemes import MCConfig, SchemeId, select_index
from .streams import TAG_NETSIM, TAG_QTABLE, stream

DESK_AREA = 1000.0
DESK_NODES = 100.0
# "variance of 2.84 m" read literally as 2.84 m^2, i.e. a per-axis standard deviation of about 1.69 m
DESK_MOBILITY_SIGMA = math.sqrt(2.84)
EER_BATCHES = 20
MESSAGE_CHOICES = ("distance", "projection")


@dataclass
class NodeState:
    id: int
    home: Point2
    position: Point2
    buffer: list = field(default_factory=list)


@dataclass
class Message:
    id: int
    source: int
    destination: int
    size_k: float
    origin_distance: float
    holder: int
    accumulated_mi: float = 0.0
    hops: int = 0
    delivered: bool = False
    created: int = 0


def _desk_params(p_tx: float = 0.2) -> NetworkParams:
    lam = DESK_NODES / DESK_AREA
    return NetworkParams.from_mean_nodes(30.0, lam=lam, p_tx=p_tx, alpha=3.0)


@dataclass(frozen=True)
class SimConfig:
    """Network simulation settings.

    ``gen_prob`` is the per-slot probability that a node creates a message,
    and ``buffer_target`` caps generation: a node only creates one while its
    buffer holds fewer messages.  With the defaults buffers are practically
    never empty.  ``warmup`` slots are simulated before measurement starts
    and excluded from the eeR.  ``fading="none"`` fixes every power gain to one, for
    deterministic scenarios.  ``message_choice`` picks the buffered message
    by distance reduction toward its destination (``"distance"``) or by the
    projection of the hop onto the source-to-destination direction
    (``"projection"``); see :func:`choose_message`.
    """

    area: float = DESK_AREA
    n_nodes_mean: float = DESK_NODES
    mobility_sigma: float = DESK_MOBILITY_SIGMA
    slots: int = 100_000
    gen_prob: float = 1.0
    buffer_target: int = 20
    scheme: SchemeId = SchemeId.NBO
    params: NetworkParams = field(default_factory=_desk_params)
    seed: int = 0
    message_bits: float = 20.0
    so_samples: int = 100
    threshold: float | None = None
    fading: str = "rayleigh"
    trace: bool = False
    warmup: int = 0
    message_choice: str = "distance"

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeId(self.scheme))
        if self.slots < 0 or self.warmup < 0:
            raise ValueError("slots and warmup must be non-negative")
        if self.mobility_sigma < 0:
            raise ValueError("mobility_sigma must be non-negative")
        if not self.area > 0 or not self.n_nodes_mean >= 0:
            raise ValueError("area must be positive and n_nodes_mean non-negative")
        if not 0 <= self.gen_prob <= 1:
            raise ValueError("gen_prob must lie in [0, 1]")
        if self.buffer_target < 1 or self.message_bits <= 0:
            raise ValueError("buffer_target and message_bits must be positive")
        if self.fading not in ("rayleigh", "none"):
            raise ValueError(f"unknown fading mode {self.fading!r}")
        if self.message_choice not in MESSAGE_CHOICES:
            raise ValueError(f"unknown message choice {self.message_choice!r}")

    @property
    def side(self) -> float:
        return math.sqrt(self.area)

    @classmethod
    def desk(cls, p_tx: float, scheme=SchemeId.NBO, **kw) -> "SimConfig":
        """Desk-scale setup: 100 nodes on 1000 m^2, alpha = 3, 30 nodes per routing zone."""
        return cls(scheme=scheme, params=_desk_params(p_tx), **kw)

    def fingerprint(self) -> str:
        return (
            f"scheme={self.scheme.value};{self.params.fingerprint()};r_a={self.params.r_a!r};"
            f"area={self.area!r};n_nodes_mean={self.n_nodes_mean!r};mobility_sigma={self.mobility_sigma!r};"
            f"slots={self.slots};gen_prob={self.gen_prob!r};buffer_target={self.buffer_target};"
            f"message_bits={self.message_bits!r};fading={self.fading};choice={self.message_choice};warmup={self.warmup};seed={self.seed}"
        )


@dataclass(frozen=True)
class EerRun:
    fingerprint: str
    eer: float
    delivered: int
    generated: int
    slots: int
    seed: int
    trace: np.ndarray | None = field(default=None, compare=False, repr=False)
    stderr: float = float("nan")

    def __post_init__(self):
        if self.eer < 0:
            raise ValueError("eer must be non-negative")


@dataclass
class SimState:
    """Mutable network state.

    Positions live in the ``(n, 2)`` arrays ``home`` and ``pos``; the
    :class:`NodeState` records mirror them and hold the buffers.
    """

    nodes: list
    messages: dict
    home: np.ndarray | None = None
    pos: np.ndarray | None = None
    slot: int = 0
    generated: int = 0
    delivered: int = 0
    delivered_distance: float = 0.0
    next_id: int = 0
    tx_counts: np.ndarray | None = None
    qtable: object = None
    threshold: float | None = None

    def __post_init__(self):
        if self.tx_counts is None:
            self.tx_counts = np.zeros(len(self.nodes), dtype=np.int64)
        if self.home is None:
            self.home = np.array([nd.home for nd in self.nodes], dtype=float).reshape(-1, 2)
        if self.pos is None:
            self.pos = np.array([nd.position for nd in self.nodes], dtype=float).reshape(-1, 2)

    @property
    def in_flight(self) -> int:
        return sum(len(n.buffer) for n in self.nodes)

    def positions(self) -> np.ndarray:
        return self.pos

    def set_positions(self, pos: np.ndarray) -> None:
        self.pos = pos
        for nd, (x, y) in zip(self.nodes, pos.tolist()):
            nd.position = Point2(x, y)


def torus_delta(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    """Minimal-image displacement ``b - a`` on a square torus."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return d - side * np.round(d / side)


def _displace(home: np.ndarray, mobility_sigma: float, rng: np.random.Generator, side: float | None) -> np.ndarray:
    pos = home + rng.standard_normal(home.shape) * mobility_sigma
    return np.mod(pos, side) if side is not None else pos


def step_mobility(nodes: list, mobility_sigma: float, rng: np.random.Generator, side: float | None = None) -> list:
    """Redraw every position as home plus an isotropic normal displacement.

    ``mobility_sigma`` is the per-axis standard deviation.  Positions wrap
    onto the torus when ``side`` is given.
    """
    if mobility_sigma < 0:
        raise ValueError("mobility_sigma must be non-negative")
    home = np.array([nd.home for nd in nodes], dtype=float).reshape(-1, 2)
    for node, (x, y) in zip(nodes, _displace(home, mobility_sigma, rng, side).tolist()):
        node.position = Point2(x, y)
    return nodes


def init_state(config: SimConfig, rng: np.random.Generator, homes=None) -> SimState:
    """Poisson number of nodes with uniform homes, buffers empty."""
    side = config.side
    if homes is None:
        n = int(rng.poisson(config.n_nodes_mean))
        homes = rng.random((n, 2)) * side
    homes = np.asarray(homes, dtype=float).reshape(-1, 2)
    nodes = [NodeState(i, Point2(float(x), float(y)), Point2(float(x), float(y))) for i, (x, y) in enumerate(homes)]
    state = SimState(nodes, {})
    state.set_positions(_displace(state.home, config.mobility_sigma, rng, side))
    return state


def new_message(state: SimState, config: SimConfig, source: int, destination: int) -> Message:
    dist = float(np.hypot(*torus_delta(state.pos[source], state.pos[destination], config.side)))
    msg = Message(state.next_id, source, destination, config.message_bits, dist, source, created=state.slot)
    state.next_id += 1
    state.messages[msg.id] = msg
    state.nodes[source].buffer.append(msg.id)
    state.generated += 1
    return msg


def _generate(state: SimState, config: SimConfig, rng: np.random.Generator) -> None:
    n = len(state.nodes)
    if n < 2 or config.gen_prob == 0:
        return
    want = rng.random(n) < config.gen_prob
    dest_draw = rng.integers(0, n - 1, size=n)
    for i in np.flatnonzero(want).tolist():
        if len(state.nodes[i].buffer) < config.buffer_target:
            d = int(dest_draw[i])
            new_message(state, config, i, d + (d >= i))


class _Scorer:
    """Routing metric of one transmitter's neighbourhood.

    NBO, NN and the threshold scheme are evaluated directly on arrays; the
    other schemes go through :func:`adhoc_relay.schemes.scheme_metrics`.
    """

    def __init__(self, config: SimConfig, state: SimState):
        self.config = config
        self.state = state
        p = config.params
        if config.scheme is SchemeId.NBO:
            self.inv_noise = 1.0 / (p.sigma_v2 + bounds.gamma_const(p)) if p.p_tx > 0 else None
        self.mc = MCConfig(so_samples=config.so_samples)

    def __call__(self, rel_xy, dist, s, rng) -> np.ndarray:
        sch = self.config.scheme
        if sch is SchemeId.NN:
            return -dist
        if sch is SchemeId.NBO and self.inv_noise is not None:
            return dist * np.log2(1.0 + self.inv_noise * s)
        if sch is SchemeId.THRESHOLD:
            return np.where(s >= self.state.threshold, dist, -np.inf)
        p = self.config.params
        real = ProbeRealization.from_neighbors(rel_xy, s / (p.rho * dist ** (-p.alpha)), p.r_a)
        if sch is SchemeId.SO:
            return schemes.so_metrics_compiled(real, p, self.config.so_samples, rng)[0]
        return schemes.scheme_metrics(sch, real, p, qtable=self.state.qtable, threshold=self.state.threshold)


def run_slot(state: SimState, config: SimConfig, rng: np.random.Generator, scorer: _Scorer | None = None) -> SimState:
    """Advance the network by one slot (MAC, routing, reception, mobility, generation).

    Decisions are taken on the pre-slot snapshot; custody changes are then
    applied in transmitter-id order.
    """
    params = config.params
    side = config.side
    n = len(state.nodes)
    scorer = scorer or _Scorer(config, state)
    pos = state.pos
    busy = np.array([len(nd.buffer) > 0 for nd in state.nodes], dtype=bool)
    tx = busy & (rng.random(n) < params.p_tx)
    fade = rng.standard_exponential((n, n)) if config.fading == "rayleigh" else np.ones((n, n))
    tx_ids = np.flatnonzero(tx)
    state.tx_counts[tx_ids] += 1
    moves = []  # (message id, transmitter, relay, gained mutual information)
    if len(tx_ids):
        delta = torus_delta(pos[:, None, :], pos[None, :, :], side)  # delta[i, j] = pos_j - pos_i
        d2 = delta[..., 0] ** 2 + delta[..., 1] ** 2
        np.fill_diagonal(d2, np.inf)
        rx_power = params.rho * fade * d2 ** (-params.alpha / 2)  # rx_power[k, j]: power of k received at j
        total = rx_power[tx_ids].sum(axis=0)
        r_a2 = params.r_a**2
        for t in tx_ids.tolist():
            nbr = np.flatnonzero(d2[t] <= r_a2)
            if len(nbr) == 0:
                continue
            dist = np.sqrt(d2[t, nbr])
            metric = scorer(delta[t, nbr], dist, rx_power[t, nbr], rng)
            pick = select_index(metric, dist)
            if pick is None:
                continue
            relay = int(nbr[pick])
            msg_id = choose_message(state, t, relay, side, config.message_choice)
            if tx[relay]:
                continue
            s = rx_power[t, relay]
            j = max(total[relay] - s, 0.0)
            den = j + params.sigma_v2
            mi = math.log2(1.0 + s / den) * params.bandwidth if den > 0 else math.inf
            moves.append((msg_id, t, relay, mi))
    for msg_id, t, relay, mi in moves:
        msg = state.messages[msg_id]
        msg.accumulated_mi += mi
        if msg.accumulated_mi >= msg.size_k:
            state.nodes[t].buffer.remove(msg_id)
            msg.accumulated_mi = 0.0
            msg.hops += 1
            msg.holder = relay
            if relay == msg.destination:
                msg.delivered = True
                state.delivered += 1
                state.delivered_distance += msg.origin_distance
                del state.messages[msg_id]
            else:
                state.nodes[relay].buffer.append(msg_id)
    state.set_positions(_displace(state.home, config.mobility_sigma, rng, side))
    state.slot += 1
    _generate(state, config, rng)
    return state


def choose_message(state: SimState, t: int, relay: int, side: float, rule: str = "distance") -> int:
    """Buffered message of ``t`` that gains most from the hop to ``relay``.

    With ``rule="distance"`` the gain is the reduction of the distance to
    the destination, ``|t - dest| - |relay - dest|``, and a message addressed
    to the relay itself always wins.  With ``rule="projection"`` it is the
    hop vector projected onto the unit vector from the message's source to
    its destination (current positions).  Ties go to the oldest message.
    """
    buf = state.nodes[t].buffer
    pos = state.pos
    msgs = [state.messages[m] for m in buf]
    dests = np.fromiter((m.destination for m in msgs), dtype=np.int64, count=len(buf))
    if rule == "distance":
        before = np.hypot(*torus_delta(pos[t], pos[dests], side).T)
        after = np.hypot(*torus_delta(pos[relay], pos[dests], side).T)
        gain = np.where(dests == relay, np.inf, before - after)
    elif rule == "projection":
        srcs = np.fromiter((m.source for m in msgs), dtype=np.int64, count=len(buf))
        axis = torus_delta(pos[srcs], pos[dests], side)
        norm = np.hypot(axis[:, 0], axis[:, 1])
        unit = axis / np.where(norm > 0, norm, 1.0)[:, None]
        gain = unit @ torus_delta(pos[t], pos[relay], side)
    else:
        raise ValueError(f"unknown message choice {rule!r}")
    return buf[int(np.argmax(gain))]


def check_conservation(state: SimState) -> None:
    """Raise if messages were created or lost, or a hop overshot ``K`` without completing."""
    if state.generated != state.delivered + state.in_flight:
        raise AssertionError(
            f"conservation violated: generated={state.generated}, delivered={state.delivered}, in_flight={state.in_flight}"
        )
    for nd in state.nodes:
        for m in nd.buffer:
            msg = state.messages[m]
            if msg.holder != nd.id or not 0 <= msg.accumulated_mi < msg.size_k:
                raise AssertionError(f"message state invalid: {msg}")


def prepare(config: SimConfig, state: SimState) -> None:
    """Attach scheme side data (q-table, tuned threshold) to the state."""
    sch = config.scheme
    if sch is SchemeId.NSO and state.qtable is None:
        state.qtable = schemes.build_q_table(config.params, None, MCConfig(), stream(config.seed, TAG_QTABLE))
    if sch is SchemeId.THRESHOLD:
        if config.threshold is not None:
            state.threshold = config.threshold
        elif state.threshold is None:
            from .adorp import tune_threshold

            state.threshold = tune_threshold(config.params, None, MCConfig(), config.seed)


def eer_value(delivered_distance: float, slots: int, config: SimConfig) -> float:
    """Delivered distance-bits per unit area, time and bandwidth (slot duration one)."""
    if slots == 0:
        return 0.0
    return delivered_distance * config.message_bits / (slots * config.area * config.params.bandwidth)


def batch_stderr(per_slot: np.ndarray, batches: int = EER_BATCHES) -> float:
    """Standard error of the mean of a per-slot series by non-overlapping batch means."""
    n = len(per_slot) // batches
    if n == 0:
        return float("nan")
    means = per_slot[: n * batches].reshape(batches, n).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def run_sim(config: SimConfig, state: SimState | None = None, check_every: int = 0) -> EerRun:
    """Run ``config.slots`` slots and report the eeR.

    The standard error comes from batch means of the per-slot delivered
    rate-distance.  With ``config.trace`` the per-slot delivery counts are
    kept as well.  ``check_every`` > 0 runs :func:`check_conservation` at
    that slot interval.
    """
    rng = stream(config.seed, TAG_NETSIM)
    if state is None:
        state = init_state(config, rng)
    prepare(config, state)
    trace = np.zeros(config.slots, dtype=np.int64) if config.trace else None
    per_slot = np.zeros(config.slots)
    scorer = _Scorer(config, state)
    for _ in range(config.warmup):
        run_slot(state, config, rng, scorer)
    delivered0, generated0 = state.delivered, state.generated
    for k in range(config.slots):
        before, dist_before = state.delivered, state.delivered_distance
        run_slot(state, config, rng, scorer)
        per_slot[k] = state.delivered_distance - dist_before
        if trace is not None:
            trace[k] = state.delivered - before
        if check_every and (k + 1) % check_every == 0:
            check_conservation(state)
    scale = config.message_bits / (config.area * config.params.bandwidth)
    return EerRun(
        config.fingerprint(),
        eer_value(float(per_slot.sum()), config.slots, config),
        state.delivered - delivered0,
        state.generated - generated0,
        config.slots,
        config.seed,
        trace,
        stderr=batch_stderr(per_slot) * scale,
    )


def with_scheme(config: SimConfig, scheme) -> SimConfig:
    return replace(config, scheme=SchemeId(scheme))
