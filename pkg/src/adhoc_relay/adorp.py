"""Single-slot ADORP estimation, parameter sweeps and threshold tuning.

The ADORP of a scheme is ``lam p (1 - p) E{r log2(1 + SINR)}``: the density
of transmitters that are active while their relay listens, times the mean
progress-rate product of one hop.  The listener factor ``(1 - p)`` is applied
analytically.

Each realization index ``i`` owns its own streams (positions, truth slot, SO
inner samples), derived from ``(seed, tag, i)``.  Every scheme is scored on
the same realization and the same truth slot, so differences between schemes
are paired.  The streams do not depend on the sweep point either: along a
``p_tx`` sweep the nodes are the same, and the truth slot marks node ``k``
active when its uniform ``u_k < p``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds, schemes
from .geometry import NetworkParams, ProbeRealization, sample_probe_realization, truncation_radius
from .schemes import MCConfig, QTable, SchemeId, build_q_table, path_gain, select_index
from .streams import TAG_QTABLE, TAG_REALIZATION, TAG_SO_INNER, TAG_TRUTH, TAG_TUNE, stream

log = logging.getLogger(__name__)

AXES = ("p_tx", "n_bar_a", "snr")


@dataclass(frozen=True)
class AdorpEstimate:
    """Normalized ADORP (ADORP / B) of one scheme at one parameter point."""

    scheme: SchemeId
    params: NetworkParams
    value: float
    stderr: float
    realizations: int
    seed: int

    def __post_init__(self):
        if not (self.value >= 0 and self.stderr >= 0):
            raise ValueError(f"ADORP estimate must be non-negative: {self.value} +- {self.stderr}")


@dataclass(frozen=True)
class PointRun:
    """Per-realization contributions of all schemes at one point.

    ``contributions[i, k]`` is ``r log2(1 + SINR)`` of the relay scheme ``k``
    picked in realization ``i`` (zero when it picked none), before the
    ``lam p (1 - p)`` prefactor.
    """

    params: NetworkParams
    schemes: tuple
    contributions: np.ndarray
    seed: int
    threshold: float | None = None
    qtable_clamped: int = 0

    @property
    def prefactor(self) -> float:
        p = self.params.p_tx
        return self.params.lam * p * (1 - p)

    def estimate(self, scheme) -> AdorpEstimate:
        k = self.schemes.index(SchemeId(scheme))
        c = self.contributions[:, k]
        n = len(c)
        se = float(c.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return AdorpEstimate(SchemeId(scheme), self.params, self.prefactor * float(c.mean()), self.prefactor * se, n, self.seed)

    def paired_difference(self, a, b) -> tuple[float, float]:
        """Mean and standard error of ADORP(a) - ADORP(b) on shared realizations."""
        ia, ib = self.schemes.index(SchemeId(a)), self.schemes.index(SchemeId(b))
        diff = self.contributions[:, ia] - self.contributions[:, ib]
        n = len(diff)
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return self.prefactor * float(diff.mean()), self.prefactor * se


@dataclass(frozen=True)
class SweepResult:
    axis: str
    points: list
    runs: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        xs = [x for x, _ in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("sweep abscissae must be strictly increasing")

    def series(self, scheme) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Abscissae, values and standard errors of one scheme."""
        scheme = SchemeId(scheme)
        xs = np.array([x for x, _ in self.points])
        vals = np.array([est[scheme].value for _, est in self.points])
        ses = np.array([est[scheme].stderr for _, est in self.points])
        return xs, vals, ses


# --- truth slot -----------------------------------------------------------------

def realized_rates(realization: ProbeRealization, params: NetworkParams, rng: np.random.Generator, far_field: bool = True) -> np.ndarray:
    """``r log2(1 + SINR)`` of every neighbour in one realized slot.

    All known and background nodes transmit independently with probability
    ``p_tx``, each with a fresh fading draw per receiving neighbour.  The
    neighbour itself is the listener and never interferes with its own
    reception.  Interference from beyond the truncation radius enters through
    its exact mean, unless ``far_field`` is false (a finite network).
    """
    n = realization.n_neighbors
    if n == 0:
        return np.empty(0)
    nodes = np.concatenate((realization.neighbor_xy, realization.background_xy))
    u = rng.random(len(nodes))
    order = np.argsort(u, kind="stable")
    n_act = int(np.count_nonzero(u < params.p_tx))
    act = order[:n_act]
    fade = rng.standard_exponential((n_act, n))
    cxy = realization.neighbor_xy
    diff = nodes[act][:, None, :] - cxy[None, :, :]
    d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
    with np.errstate(divide="ignore"):
        g = np.where(d2 > 0, path_gain(d2, params.alpha), 0.0)
    j = params.rho * np.einsum("kc,kc->c", fade, g)
    dist = realization.neighbor_dist
    if far_field and params.lam * params.p_tx > 0:
        j = j + np.asarray(bounds.exterior_mean_interference(dist, realization.r_trunc, params), dtype=float).reshape(-1)
    s = realization.signal_powers(params)
    with np.errstate(divide="ignore"):
        return dist * np.log2(1.0 + s / (j + params.sigma_v2))


# --- one point ------------------------------------------------------------------

@dataclass(frozen=True)
class _PointContext:
    params: NetworkParams
    schemes: tuple
    mc_cfg: MCConfig
    seed: int
    r_trunc: float
    qtable: QTable | None
    threshold: float | None
    tag: int = TAG_REALIZATION
    far_field: bool = True


def _realization(ctx: _PointContext, index: int) -> ProbeRealization:
    return sample_probe_realization(ctx.params, ctx.r_trunc, stream(ctx.seed, ctx.tag, index))


def _outcome(ctx: _PointContext, index: int) -> tuple[np.ndarray, int]:
    real = _realization(ctx, index)
    out = np.zeros(len(ctx.schemes))
    if real.n_neighbors == 0:
        return out, 0
    truth = realized_rates(real, ctx.params, stream(ctx.seed, TAG_TRUTH, ctx.tag, index), ctx.far_field)
    clamped = 0
    dist = real.neighbor_dist
    for k, sch in enumerate(ctx.schemes):
        if sch is SchemeId.SO:
            m = schemes.so_metrics_compiled(
                real, ctx.params, ctx.mc_cfg.so_samples, stream(ctx.seed, TAG_SO_INNER, index),
                exterior_margin=ctx.mc_cfg.so_exterior_margin,
            )[0]
        elif sch is SchemeId.NSO:
            m, oor = schemes.nso_metrics(real, ctx.params, ctx.qtable)
            clamped += int(np.count_nonzero(oor))
        else:
            m = schemes.scheme_metrics(sch, real, ctx.params, threshold=ctx.threshold)
        best = select_index(m, dist)
        if best is not None:
            out[k] = truth[best]
    return out, clamped


def _run_chunk(ctx: _PointContext, start: int, stop: int):
    rows = np.zeros((stop - start, len(ctx.schemes)))
    clamped = 0
    for i in range(start, stop):
        rows[i - start], c = _outcome(ctx, i)
        clamped += c
    return rows, clamped


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n / max(1, 8 * workers)))
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def _collect(ctx: _PointContext, n: int, workers: int) -> tuple[np.ndarray, int]:
    spans = _chunks(n, workers)
    if workers <= 1:
        parts = [_run_chunk(ctx, a, b) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_chunk, ctx, a, b) for a, b in spans]
            parts = [f.result() for f in futs]
    # reduction happens on the full array in realization order, so the worker count cannot matter
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def _normalize_schemes(scheme_set) -> tuple:
    out = tuple(SchemeId(s) for s in scheme_set)
    if not out:
        raise ValueError("at least one scheme is required")
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate schemes in {out}")
    return out


def run_point(
    scheme_set,
    params: NetworkParams,
    mc_cfg: MCConfig | None = None,
    seed: int = 0,
    *,
    workers: int = 1,
    r_trunc: float | None = None,
    qtable: QTable | None = None,
    threshold: float | None = None,
    far_field: bool = True,
) -> PointRun:
    """Score every scheme in ``scheme_set`` on the same realizations.

    A q-table and a tuned threshold are produced on demand when NSO or the
    threshold scheme is requested without them.  With ``far_field=False``
    the network ends at ``r_trunc`` (a finite network of that radius); the
    routing metrics still assume an infinite network.
    """
    cfg = mc_cfg or MCConfig()
    sch = _normalize_schemes(scheme_set)
    n = cfg.realizations
    if n < 1:
        raise ValueError("need at least one realization")
    if params.p_tx in (0.0, 1.0):
        return PointRun(params, sch, np.zeros((n, len(sch))), seed, threshold)
    if SchemeId.NSO in sch and qtable is None:
        qtable = build_q_table(params, None, cfg, stream(seed, TAG_QTABLE))
    if SchemeId.THRESHOLD in sch and threshold is None:
        threshold = tune_threshold(params, None, cfg, seed, workers=workers)
    if r_trunc is None:
        r_trunc = truncation_radius(params, cfg.truncation_budget)
    ctx = _PointContext(params, sch, cfg, seed, float(r_trunc), qtable, threshold, far_field=far_field)
    contrib, clamped = _collect(ctx, n, workers)
    if clamped:
        log.info("%d NSO lookups fell outside the q-table grid and were clamped", clamped)
    return PointRun(params, sch, contrib, seed, threshold, clamped)


def estimate_adorp(scheme, params: NetworkParams, mc_cfg: MCConfig | None = None, seed: int = 0, **kw) -> AdorpEstimate:
    return run_point([scheme], params, mc_cfg, seed, **kw).estimate(scheme)


def estimate_many(scheme_set, params: NetworkParams, mc_cfg: MCConfig | None = None, seed: int = 0, **kw) -> dict:
    run = run_point(scheme_set, params, mc_cfg, seed, **kw)
    return {s: run.estimate(s) for s in run.schemes}


# --- sweeps ---------------------------------------------------------------------

def snr_to_noise(snr_db: float, rho: float = 1.0) -> float:
    """Noise power for a mean SNR (in dB) at unit distance, ``SNR_1 = rho / sigma_v2``."""
    return rho / 10 ** (snr_db / 10)


def point_params(axis: str, x: float, template: NetworkParams) -> NetworkParams:
    if axis == "p_tx":
        return template.with_(p_tx=float(x))
    if axis == "n_bar_a":
        return template.with_(r_a=math.sqrt(x / (math.pi * template.lam)))
    if axis == "snr":
        return template.with_(sigma_v2=snr_to_noise(x, template.rho))
    raise ValueError(f"unknown sweep axis {axis!r}")


def sweep(
    axis: str,
    grid,
    scheme_set,
    template: NetworkParams,
    mc_cfg: MCConfig | None = None,
    seed: int = 0,
    *,
    workers: int = 1,
    progress=None,
) -> SweepResult:
    """ADORP of every scheme along one axis, with common random numbers.

    The truncation radius is the largest one any point needs, so the spatial
    realizations are shared by all points of the sweep.
    """
    cfg = mc_cfg or MCConfig()
    grid = [float(x) for x in grid]
    if not grid:
        raise ValueError("sweep grid is empty")
    sch = _normalize_schemes(scheme_set)
    plist = [point_params(axis, x, template) for x in grid]
    r_trunc = max(truncation_radius(p, cfg.truncation_budget) for p in plist)
    points, runs = [], []
    for x, p in zip(grid, plist):
        run = run_point(sch, p, cfg, seed, workers=workers, r_trunc=r_trunc)
        runs.append(run)
        points.append((x, {s: run.estimate(s) for s in sch}))
        if progress is not None:
            progress(axis, x, run)
    return SweepResult(axis, points, runs)


def upper_bound_curve(max_so_adorp: float, n_bar_a_grid) -> list[float]:
    """Best SO ADORP scaled by the probability of a non-empty routing zone."""
    if max_so_adorp < 0:
        raise ValueError("max_so_adorp must be non-negative")
    return [max_so_adorp * -math.expm1(-float(n)) for n in n_bar_a_grid]


# --- threshold tuning -----------------------------------------------------------

def default_threshold_grid(params: NetworkParams, points: int = 29) -> np.ndarray:
    """Zero (farthest neighbour) plus a log grid around the mean interference-plus-noise."""
    scale = (bounds.gamma_const(params) if params.p_tx > 0 else 0.0) + params.sigma_v2
    if scale <= 0:
        scale = params.rho * params.r_a ** (-params.alpha)
    return np.concatenate(([0.0], np.geomspace(1e-4, 1e3, points) * scale))


def threshold_scan(params: NetworkParams, grid, mc_cfg: MCConfig | None = None, seed: int = 0, *, workers: int = 1):
    """Per-realization contributions of the threshold scheme for every grid value.

    Uses its own streams, disjoint from the ones of :func:`run_point`.
    Returns ``(grid, contributions)`` with contributions of shape
    ``(realizations, len(grid))`` already multiplied by the prefactor.
    """
    cfg = mc_cfg or MCConfig()
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    if np.any(grid < 0):
        raise ValueError("thresholds must be non-negative")
    n = cfg.tune_realizations
    ctx = _PointContext(params, (), cfg, seed, truncation_radius(params, cfg.truncation_budget), None, None, TAG_TUNE)
    spans = _chunks(n, workers)
    if workers <= 1:
        parts = [_scan_chunk(ctx, grid, a, b) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = [f.result() for f in [pool.submit(_scan_chunk, ctx, grid, a, b) for a, b in spans]]
    p = params.p_tx
    return grid, np.concatenate(parts) * (params.lam * p * (1 - p))


def _scan_chunk(ctx: _PointContext, grid: np.ndarray, start: int, stop: int) -> np.ndarray:
    rows = np.zeros((stop - start, len(grid)))
    for i in range(start, stop):
        real = _realization(ctx, i)
        if real.n_neighbors == 0:
            continue
        truth = realized_rates(real, ctx.params, stream(ctx.seed, TAG_TRUTH, ctx.tag, i), ctx.far_field)
        s = real.signal_powers(ctx.params)
        dist = real.neighbor_dist
        for k, t in enumerate(grid):
            ok = s >= t
            if ok.any():
                # farthest eligible neighbour; smallest index on exact ties
                cand = np.flatnonzero(ok)
                rows[i - start, k] = truth[cand[np.argmax(dist[cand])]]
    return rows


def tune_threshold(params: NetworkParams, grid=None, mc_cfg: MCConfig | None = None, seed: int = 0, *, workers: int = 1) -> float:
    """Grid value with the highest threshold-scheme ADORP on the tuning streams."""
    if grid is None:
        grid = default_threshold_grid(params)
    if params.p_tx in (0.0, 1.0):
        return float(np.asarray(grid, dtype=float).reshape(-1)[0])
    g, contrib = threshold_scan(params, grid, mc_cfg, seed, workers=workers)
    return float(g[int(np.argmax(contrib.mean(axis=0)))])
