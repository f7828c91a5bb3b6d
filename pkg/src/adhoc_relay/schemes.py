"""Relay-selection schemes.

Each scheme maps the probe's knowledge to one metric value per neighbour and
the relay is the argmax.  The batch functions (``*_metrics``) return arrays
over all neighbours and are what the simulators use; the ``metric_*``
functions evaluate a single candidate and return a
:class:`CandidateEvaluation`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import bounds
from .bounds import threshold_radius
from .geometry import NetworkParams, ProbeRealization, sample_ppp_annulus, truncation_radius


class SchemeId(str, Enum):
    SO = "SO"
    BO = "BO"
    NSO = "NSO"
    NBO = "NBO"
    NN = "NN"
    THRESHOLD = "THRESHOLD"


PROPOSED_SCHEMES = (SchemeId.SO, SchemeId.BO, SchemeId.NSO, SchemeId.NBO)
ALL_SCHEMES = tuple(SchemeId)


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo sample sizes shared by the estimators.

    ``so_exterior_margin`` sets how far (in threshold radii) beyond the
    routing zone the SO metric samples unknown transmitters explicitly; past
    that the mean is added.  ``truncation_budget`` is passed to
    :func:`~adhoc_relay.geometry.truncation_radius`.
    """

    realizations: int = 20_000
    so_samples: int = 500
    so_exterior_margin: float = 3.0
    qtable_samples: int = 100_000
    qtable_points: int = 256
    truncation_budget: float = 1e-3
    tune_realizations: int = 4_000

    def __post_init__(self):
        if self.realizations < 1 or self.so_samples < 1 or self.qtable_samples < 2:
            raise ValueError(f"sample counts must be positive: {self}")


@dataclass(frozen=True)
class CandidateEvaluation:
    index: int
    metric: float
    stderr: float | None = None
    distance: float = 0.0
    out_of_range: bool = False


def select_index(metrics: np.ndarray, distances: np.ndarray) -> int | None:
    """Argmax with ties broken by smaller distance, then smaller index.

    Non-finite metrics (the ``-inf`` ineligibility sentinel, NaN) never win.
    """
    metrics = np.asarray(metrics, dtype=float)
    if metrics.size == 0:
        return None
    m = np.where(np.isnan(metrics), -np.inf, metrics)
    order = np.lexsort((np.arange(m.size), distances, -m))
    best = int(order[0])
    if m[best] == -np.inf:
        return None
    return best


def select_relay(evaluations: list[CandidateEvaluation]) -> int | None:
    """Index (the ``CandidateEvaluation.index``) of the winning candidate, or None."""
    if not evaluations:
        return None
    metrics = np.array([e.metric for e in evaluations], dtype=float)
    dist = np.array([e.distance for e in evaluations], dtype=float)
    idx = np.array([e.index for e in evaluations])
    m = np.where(np.isnan(metrics), -np.inf, metrics)
    order = np.lexsort((idx, dist, -m))
    if m[order[0]] == -np.inf:
        return None
    return int(idx[order[0]])


def path_gain(dist2: np.ndarray, alpha: float) -> np.ndarray:
    """``r^-alpha`` from squared distances, with cheap paths for alpha 3 and 4."""
    if alpha == 4:
        return 1.0 / (dist2 * dist2)
    if alpha == 3:
        return 1.0 / (dist2 * np.sqrt(dist2))
    return dist2 ** (-alpha / 2)


def _segment_sums(values: np.ndarray, seg: np.ndarray, n_seg: int) -> np.ndarray:
    """Sum rows of ``values`` per segment id; ``seg`` must be sorted."""
    out = np.zeros((n_seg,) + values.shape[1:])
    if len(seg) == 0:
        return out
    starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
    out[seg[starts]] = np.add.reduceat(values, starts, axis=0)
    return out


# --- SO ---------------------------------------------------------------------

def so_exterior_radius(params: NetworkParams, margin: float) -> float:
    return params.r_a + margin * threshold_radius(params)


def so_metrics(
    realization: ProbeRealization,
    params: NetworkParams,
    samples: int,
    rng: np.random.Generator,
    candidates=None,
    exterior_margin: float = 3.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of ``r_i E{log2(1 + S_i/(J_i + noise)) | M_0}``.

    Every sample draws an ALOHA decision for each known neighbour and a fresh
    PPP of unknown transmitters outside the routing zone; all candidates are
    scored on the same samples.  Each interferer-candidate link gets its own
    fading draw.  Returns ``(metric, stderr)`` arrays over ``candidates``.
    """
    n = realization.n_neighbors
    cand = np.arange(n) if candidates is None else np.atleast_1d(np.asarray(candidates, dtype=int))
    nc = len(cand)
    if nc == 0:
        return np.empty(0), np.empty(0)
    xy = realization.neighbor_xy
    cxy = xy[cand]
    a = params.alpha
    k_tot = int(samples)

    diff = xy[:, None, :] - cxy[None, :, :]
    d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
    with np.errstate(divide="ignore"):
        g_known = np.where(d2 > 0, path_gain(d2, a), 0.0)  # [neighbour, candidate]; self-link zeroed

    J = np.zeros((k_tot, nc))
    active = rng.random((k_tot, n)) < params.p_tx
    ks, ls = np.nonzero(active)
    if len(ks):
        contrib = rng.standard_exponential((len(ks), nc)) * g_known[ls]
        J += _segment_sums(contrib, ks, k_tot)

    lp = params.lam * params.p_tx
    if lp > 0:
        r_out = so_exterior_radius(params, exterior_margin)
        area = math.pi * (r_out**2 - params.r_a**2)
        counts = rng.poisson(lp * area, size=k_tot)
        m = int(counts.sum())
        if m:
            rad = np.sqrt(params.r_a**2 + rng.random(m) * (r_out**2 - params.r_a**2))
            ang = rng.random(m) * (2 * math.pi)
            ex = rad * np.cos(ang)
            ey = rad * np.sin(ang)
            ed2 = (ex[:, None] - cxy[None, :, 0]) ** 2 + (ey[:, None] - cxy[None, :, 1]) ** 2
            contrib = rng.standard_exponential((m, nc)) * path_gain(ed2, a)
            seg = np.repeat(np.arange(k_tot), counts)
            J += _segment_sums(contrib, seg, k_tot)
    J *= params.rho
    if lp > 0:
        # mean of the field beyond r_out; already carries rho
        J += bounds.exterior_mean_interference(realization.neighbor_dist[cand], r_out, params)[None, :]
    s = realization.signal_powers(params)[cand]
    with np.errstate(divide="ignore"):
        rates = np.log2(1.0 + s[None, :] / (J + params.sigma_v2))
    dist = realization.neighbor_dist[cand]
    mean = rates.mean(axis=0)
    se = rates.std(axis=0, ddof=1) / math.sqrt(k_tot) if k_tot > 1 else np.full(nc, np.inf)
    return dist * mean, dist * se


def so_metrics_compiled(
    realization: ProbeRealization,
    params: NetworkParams,
    samples: int,
    rng: np.random.Generator,
    candidates=None,
    exterior_margin: float = 3.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Same estimator as :func:`so_metrics`, run by the compiled kernel.

    The kernel is seeded from one draw of ``rng``, so it is reproducible but
    not sample-for-sample identical to the numpy path.
    """
    from ._kernels import so_rate_sums

    n = realization.n_neighbors
    cand = np.arange(n) if candidates is None else np.atleast_1d(np.asarray(candidates, dtype=np.int64))
    if len(cand) == 0:
        return np.empty(0), np.empty(0)
    k_tot = int(samples)
    seed = int(rng.integers(0, 2**32))
    lp = params.lam * params.p_tx
    dist = realization.neighbor_dist[cand]
    if lp > 0:
        r_out = so_exterior_radius(params, exterior_margin)
        ext_count = lp * math.pi * (r_out**2 - params.r_a**2)
        base = np.asarray(bounds.exterior_mean_interference(dist, r_out, params), dtype=float).reshape(-1)
    else:
        r_out, ext_count, base = params.r_a, 0.0, np.zeros(len(cand))
    s = realization.signal_powers(params)[cand]
    sr, sr2 = so_rate_sums(
        seed, k_tot, float(params.p_tx), float(ext_count), float(params.r_a), float(r_out), float(params.alpha),
        np.ascontiguousarray(realization.neighbor_xy, dtype=float), cand.astype(np.int64), s, base,
        float(params.sigma_v2), float(params.rho),
    )
    mean = sr / k_tot
    if k_tot > 1:
        var = np.maximum(sr2 - k_tot * mean**2, 0.0) / (k_tot - 1)
        se = np.sqrt(var / k_tot)
    else:
        se = np.full(len(cand), np.inf)
    return dist * mean, dist * se


def metric_so(candidate: int, realization: ProbeRealization, params: NetworkParams, mc_cfg: MCConfig | int, rng) -> CandidateEvaluation:
    samples = mc_cfg if isinstance(mc_cfg, int) else mc_cfg.so_samples
    margin = 3.0 if isinstance(mc_cfg, int) else mc_cfg.so_exterior_margin
    if samples < 1:
        raise ValueError("SO metric needs at least one sample")
    m, se = so_metrics(realization, params, samples, rng, candidates=[candidate], exterior_margin=margin)
    return CandidateEvaluation(candidate, float(m[0]), float(se[0]), float(realization.neighbor_dist[candidate]))


# --- BO ---------------------------------------------------------------------

def metric_bo(candidate: int, realization: ProbeRealization, params: NetworkParams) -> CandidateEvaluation:
    value = bounds.bound_g(candidate, realization, params)
    return CandidateEvaluation(candidate, value, None, float(realization.neighbor_dist[candidate]))


# --- NSO --------------------------------------------------------------------

@dataclass(frozen=True)
class QGridConfig:
    x_min: float
    x_max: float
    points: int = 256

    def __post_init__(self):
        if not (0 < self.x_min < self.x_max) or self.points < 2:
            raise ValueError(f"invalid q-table grid: {self}")

    @classmethod
    def default(cls, params: NetworkParams, points: int = 256) -> "QGridConfig":
        ref = params.rho * params.r_a ** (-params.alpha)
        return cls(1e-4 * ref, 1e6 * ref, points)


@dataclass(frozen=True)
class QTable:
    """Tabulated ``q(x) = E{log2(1 + x/(J + noise))}`` for the unconditional interference ``J``."""

    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    params_fingerprint: str
    mc_samples: int
    repaired: bool = False
    _logx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_logx", np.log(self.grid))

    def __call__(self, x):
        """Interpolated q and an out-of-range mask (values are clamped to the end knots)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lx = np.log(x)
        q = np.interp(lx, self._logx, self.values)
        oor = (x < self.grid[0]) | (x > self.grid[-1])
        return q, oor

    def check(self, params: NetworkParams) -> None:
        if params.fingerprint() != self.params_fingerprint:
            raise ValueError(
                f"q-table built for {self.params_fingerprint!r}, used with {params.fingerprint()!r}"
            )


def sample_typical_interference(params: NetworkParams, samples: int, rng: np.random.Generator, budget: float = 1e-3, chunk: int = 4096) -> np.ndarray:
    """Interference at a typical receiver from all ALOHA transmitters of the PPP."""
    radius = truncation_radius(params, budget)
    tail = float(bounds.exterior_mean_interference(0.0, radius, params))
    out = np.empty(samples)
    lp = params.lam * params.p_tx
    for start in range(0, samples, chunk):
        k = min(chunk, samples - start)
        counts = rng.poisson(lp * math.pi * radius**2, size=k)
        m = int(counts.sum())
        r2 = rng.random(m) * radius**2
        contrib = rng.standard_exponential(m) * path_gain(r2, params.alpha)
        seg = np.repeat(np.arange(k), counts)
        out[start : start + k] = np.bincount(seg, weights=contrib, minlength=k) * params.rho + tail
    return out


def build_q_table(params: NetworkParams, grid_cfg: QGridConfig | None, mc_cfg: MCConfig | int, rng: np.random.Generator) -> QTable:
    """Tabulate q on a log-spaced grid from one shared set of interference samples.

    Sharing the samples across knots makes the table monotone by construction;
    the check and repair remain as a guard.
    """
    samples = mc_cfg if isinstance(mc_cfg, int) else mc_cfg.qtable_samples
    budget = 1e-3 if isinstance(mc_cfg, int) else mc_cfg.truncation_budget
    if grid_cfg is None:
        grid_cfg = QGridConfig.default(params, 256 if isinstance(mc_cfg, int) else mc_cfg.qtable_points)
    grid = np.geomspace(grid_cfg.x_min, grid_cfg.x_max, grid_cfg.points)
    J = sample_typical_interference(params, samples, rng, budget) + params.sigma_v2
    inv = 1.0 / J
    values = np.empty(len(grid))
    stderr = np.empty(len(grid))
    for k, x in enumerate(grid):
        r = np.log2(1.0 + x * inv)
        values[k] = r.mean()
        stderr[k] = r.std(ddof=1) / math.sqrt(samples)
    repaired = bool(np.any(np.diff(values) < 0))
    if repaired:
        values = np.maximum.accumulate(values)
    return QTable(grid, values, stderr, params.fingerprint(), samples, repaired)


def nso_metrics(realization: ProbeRealization, params: NetworkParams, qtable: QTable) -> tuple[np.ndarray, np.ndarray]:
    qtable.check(params)
    q, oor = qtable(realization.signal_powers(params))
    return realization.neighbor_dist * q, oor


def metric_nso(candidate: int, realization: ProbeRealization, qtable: QTable, params: NetworkParams) -> CandidateEvaluation:
    qtable.check(params)
    s = realization.signal_powers(params)[candidate]
    q, oor = qtable(s)
    d = float(realization.neighbor_dist[candidate])
    return CandidateEvaluation(candidate, d * float(q), None, d, bool(oor))


# --- NBO, NN, threshold -------------------------------------------------------

def nbo_metrics(realization: ProbeRealization, params: NetworkParams) -> np.ndarray:
    gamma_b = 1.0 / (params.sigma_v2 + bounds.gamma_const(params))
    return realization.neighbor_dist * np.log2(1.0 + gamma_b * realization.signal_powers(params))


def metric_nbo(candidate: int, realization: ProbeRealization, params: NetworkParams) -> CandidateEvaluation:
    d = float(realization.neighbor_dist[candidate])
    return CandidateEvaluation(candidate, float(nbo_metrics(realization, params)[candidate]), None, d)


def nn_metrics(realization: ProbeRealization) -> np.ndarray:
    return -realization.neighbor_dist


def metric_nn(candidate: int, realization: ProbeRealization) -> CandidateEvaluation:
    d = float(realization.neighbor_dist[candidate])
    return CandidateEvaluation(candidate, -d, None, d)


def threshold_metrics(realization: ProbeRealization, params: NetworkParams, threshold: float) -> np.ndarray:
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    s = realization.signal_powers(params)
    return np.where(s >= threshold, realization.neighbor_dist, -np.inf)


def metric_threshold(candidate: int, realization: ProbeRealization, params: NetworkParams, threshold: float) -> CandidateEvaluation:
    d = float(realization.neighbor_dist[candidate])
    return CandidateEvaluation(candidate, float(threshold_metrics(realization, params, threshold)[candidate]), None, d)


def scheme_metrics(
    scheme: SchemeId,
    realization: ProbeRealization,
    params: NetworkParams,
    *,
    qtable: QTable | None = None,
    threshold: float | None = None,
    mc_cfg: MCConfig | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Metric array over all neighbours for any scheme."""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.SO:
        cfg = mc_cfg or MCConfig()
        if rng is None:
            raise ValueError("SO metric needs a random stream")
        return so_metrics_compiled(realization, params, cfg.so_samples, rng, exterior_margin=cfg.so_exterior_margin)[0]
    if scheme is SchemeId.BO:
        return bounds.bound_metrics(realization, params)
    if scheme is SchemeId.NSO:
        if qtable is None:
            raise ValueError("NSO metric needs a q-table")
        return nso_metrics(realization, params, qtable)[0]
    if scheme is SchemeId.NBO:
        return nbo_metrics(realization, params)
    if scheme is SchemeId.NN:
        return nn_metrics(realization)
    if threshold is None:
        raise ValueError("threshold scheme needs a threshold")
    return threshold_metrics(realization, params, threshold)


def evaluate(scheme: SchemeId, realization: ProbeRealization, params: NetworkParams, **kw) -> list[CandidateEvaluation]:
    """All candidates of one realization as evaluation records."""
    metrics = scheme_metrics(scheme, realization, params, **kw)
    dist = realization.neighbor_dist
    return [CandidateEvaluation(i, float(metrics[i]), None, float(dist[i])) for i in range(len(metrics))]


# --- q-table persistence ------------------------------------------------------

QTABLE_HEADER = "# params: "


def qtable_to_csv(table: QTable) -> str:
    """CSV text: a fingerprint comment line, then ``x,q,stderr`` rows."""
    lines = [f"{QTABLE_HEADER}{table.params_fingerprint};mc_samples={table.mc_samples}", "x,q,stderr"]
    lines += [f"{x!r},{q!r},{s!r}" for x, q, s in zip(table.grid.tolist(), table.values.tolist(), table.stderr.tolist())]
    return "\n".join(lines) + "\n"


def qtable_from_csv(text: str) -> QTable:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(QTABLE_HEADER):
        raise ValueError("q-table CSV must start with a params comment line")
    meta = lines[0][len(QTABLE_HEADER):]
    fingerprint, _, samples = meta.rpartition(";mc_samples=")
    if lines[1].split(",") != ["x", "q", "stderr"]:
        raise ValueError(f"unexpected q-table header {lines[1]!r}")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]], dtype=float).reshape(-1, 3)
    return QTable(rows[:, 0], rows[:, 1], rows[:, 2], fingerprint, int(samples))
