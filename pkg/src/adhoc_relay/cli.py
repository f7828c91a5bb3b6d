"""Command-line experiment runner.

Every subcommand reads an experiment description (``--config`` file or a
``--paper-figure`` preset), runs it, writes one CSV and prints a short
summary.  Results depend only on the configuration and the seed, never on
``--workers``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import adorp, netsim, schemes, validation
from .config import ConfigError, ExperimentConfig, paper_figure, parse_config, render_config, with_overrides
from .schemes import QGridConfig, SchemeId
from .streams import TAG_QTABLE, stream

SWEEP_COLUMNS = ("experiment", "scheme", "axis", "abscissa", "value", "stderr", "realizations", "seed")
NETSIM_COLUMNS = ("scheme", "p_tx", "slots", "generated", "delivered", "eer", "seed")
COMMANDS = ("adorp-sweep", "netsim", "build-qtable", "validate-bounds", "tune-threshold")

log = logging.getLogger("adhoc_relay")


def fmt(value) -> str:
    """Shortest round-trip text of a number (``repr`` of the float), other values as ``str``."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(columns, rows, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


# --- subcommands ----------------------------------------------------------------

def _alphas(cfg: ExperimentConfig):
    return [float(a) for a in cfg.sweep.alphas] or [cfg.params.alpha]


def run_sweep(cfg: ExperimentConfig, workers: int) -> tuple[list, int]:
    rows = []
    points = 0
    multi = len(cfg.sweep.alphas) > 0
    for a in _alphas(cfg):
        template = cfg.params.with_(alpha=a)
        label = f"{cfg.label}/alpha={a!r}" if multi else cfg.label
        res = adorp.sweep(cfg.sweep.axis, cfg.sweep.grid, cfg.sweep.schemes, template, cfg.mc, cfg.seed, workers=workers)
        for x, ests in res.points:
            points += 1
            for s in (SchemeId(n) for n in cfg.sweep.schemes):
                e = ests[s]
                rows.append([label, s.value, cfg.sweep.axis, x, e.value, e.stderr, e.realizations, cfg.seed])
        if cfg.sweep.axis == "n_bar_a":
            ub = cfg.sweep.ub_max_so
            if ub is None and SchemeId.SO.value in cfg.sweep.schemes:
                ub = float(res.series(SchemeId.SO)[1].max())
            if ub is not None:
                for x, v in zip(cfg.sweep.grid, adorp.upper_bound_curve(ub, cfg.sweep.grid)):
                    rows.append([label, "UB", "n_bar_a", x, v, 0.0, cfg.mc.realizations, cfg.seed])
    return rows, points


def _netsim_job(args):
    sim_cfg = args
    return netsim.run_sim(sim_cfg)


def netsim_configs(cfg: ExperimentConfig) -> list[netsim.SimConfig]:
    n = cfg.netsim
    out = []
    for p in n.p_tx:
        for s in n.schemes:
            out.append(netsim.SimConfig(
                area=n.area, n_nodes_mean=n.n_nodes_mean, mobility_sigma=n.mobility_sigma, slots=n.slots,
                gen_prob=n.gen_prob, buffer_target=n.buffer_target, scheme=SchemeId(s),
                params=cfg.params.with_(p_tx=float(p)), seed=cfg.seed, message_bits=n.message_bits,
                so_samples=n.so_samples, fading=n.fading, warmup=n.warmup, message_choice=n.message_choice,
            ))
    return out


def run_netsim(cfg: ExperimentConfig, workers: int) -> tuple[list, int]:
    configs = netsim_configs(cfg)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_netsim_job, configs))
    else:
        results = [_netsim_job(c) for c in configs]
    rows = [[c.scheme.value, c.params.p_tx, r.slots, r.generated, r.delivered, r.eer, r.seed] for c, r in zip(configs, results)]
    return rows, len(rows)


def build_qtable_text(cfg: ExperimentConfig) -> str:
    q = cfg.qtable
    grid = QGridConfig(q.x_min, q.x_max, q.points) if q.x_min is not None else QGridConfig.default(cfg.params, q.points)
    table = schemes.build_q_table(cfg.params, grid, cfg.mc, stream(cfg.seed, TAG_QTABLE))
    if table.repaired:
        log.warning("q-table was not monotone and has been repaired (increase mc.qtable_samples)")
    return schemes.qtable_to_csv(table)


def run_tune(cfg: ExperimentConfig, workers: int) -> tuple[list, float]:
    grid = cfg.tune.grid or adorp.default_threshold_grid(cfg.params)
    g, contrib = adorp.threshold_scan(cfg.params, grid, cfg.mc, cfg.seed, workers=workers)
    n = contrib.shape[0]
    means = contrib.mean(axis=0)
    ses = contrib.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(len(g))
    rows = [[cfg.label, SchemeId.THRESHOLD.value, "threshold", float(t), float(m), float(s), n, cfg.seed]
            for t, m, s in zip(g, means, ses)]
    return rows, float(g[int(np.argmax(means))])


def run_validate(cfg: ExperimentConfig) -> list:
    v = cfg.validate
    return validation.run_all(v.alphas, v.geometries, v.knowledge_sets, v.mc_draws, v.rel_tol, cfg.seed, v.fault)


# --- plumbing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adhoc-relay", description="Relay-selection experiments for random ad-hoc networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="TOML experiment description")
        src.add_argument("--paper-figure", type=int, choices=(3, 4, 5, 6), help="use the preset of one evaluation figure")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
        p.add_argument("--out", type=Path, help="output CSV path")
        p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = parse_config(args.config.read_text())
    elif args.paper_figure is not None:
        cfg = paper_figure(args.paper_figure)
        if args.command in ("build-qtable", "tune-threshold", "validate-bounds"):
            # the auxiliary commands borrow the figure's network parameters
            cfg = replace(cfg, experiment=args.command)
    else:
        cfg = ExperimentConfig(args.command)
    if cfg.experiment != args.command:
        raise ConfigError([(None, "experiment", f"configuration is for {cfg.experiment!r}, not {args.command!r}")])
    if args.seed is not None and args.seed < 0:
        raise ConfigError([(None, "--seed", "must be non-negative")])
    return with_overrides(cfg, seed=args.seed, output=str(args.out) if args.out is not None else None)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        sys.stdout.write(render_config(cfg))
        return 0
    out = Path(cfg.output or f"{cfg.label}.csv")
    start = time.perf_counter()
    status = 0
    extra = ""
    cmd = args.command
    if cmd == "adorp-sweep":
        rows, points = run_sweep(cfg, args.workers)
        text = csv_text(SWEEP_COLUMNS, rows)
    elif cmd == "netsim":
        rows, points = run_netsim(cfg, args.workers)
        text = csv_text(NETSIM_COLUMNS, rows)
    elif cmd == "build-qtable":
        text = build_qtable_text(cfg)
        points = cfg.qtable.points
    elif cmd == "tune-threshold":
        rows, best = run_tune(cfg, args.workers)
        text = csv_text(SWEEP_COLUMNS, rows)
        points = len(rows)
        extra = f", best threshold {best!r}"
    else:
        checks = run_validate(cfg)
        text = csv_text(validation.COLUMNS, [validation.row_values(r) for r in checks])
        points = len(checks)
        failed = [r for r in checks if r.status == "fail"]
        findings = sum(r.status == "finding" for r in checks)
        extra = f", {len(failed)} failed, {findings} findings"
        if failed:
            status = 1
            for r in failed[:10]:
                print(f"FAILED {r.check} alpha={r.alpha!r} d={r.d!r}: reference {r.reference!r}, got {r.value!r}", file=sys.stderr)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - start
    print(f"{cmd}: {points} points in {wall:.1f} s, seed {cfg.seed}{extra} -> {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
