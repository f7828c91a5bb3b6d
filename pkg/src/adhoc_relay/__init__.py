"""Relay selection for random wireless ad-hoc networks.

Routing metrics that pick the next hop from local knowledge (positions and
channel gains inside a routing zone), a single-slot estimator of the
asymptotic density of rate progress (ADORP), and a slotted multi-hop network
simulation with mutual-information accumulation.
"""

from .adorp import AdorpEstimate, SweepResult, estimate_adorp, sweep, tune_threshold, upper_bound_curve
from .bounds import BoundTerms, CandidateGeometry, bound_g, gamma_const, jbar1, jbar2, p_zone_free, threshold_radius
from .channel import LinkBudget, aggregate_interference, rate, sample_fading, signal_power, sinr
from .config import ConfigError, ExperimentConfig, parse_config, render_config
from .geometry import NetworkParams, Point2, ProbeRealization, mean_nodes_in_zone, sample_ppp_annulus, sample_probe_realization
from .netsim import EerRun, Message, NodeState, SimConfig, run_sim, run_slot, step_mobility
from .schemes import CandidateEvaluation, MCConfig, QTable, SchemeId, build_q_table, select_relay

__version__ = "0.1.0"

__all__ = [
    "AdorpEstimate", "SweepResult", "estimate_adorp", "sweep", "tune_threshold", "upper_bound_curve",
    "BoundTerms", "CandidateGeometry", "bound_g", "gamma_const", "jbar1", "jbar2", "p_zone_free", "threshold_radius",
    "LinkBudget", "aggregate_interference", "rate", "sample_fading", "signal_power", "sinr",
    "ConfigError", "ExperimentConfig", "parse_config", "render_config",
    "NetworkParams", "Point2", "ProbeRealization", "mean_nodes_in_zone", "sample_ppp_annulus", "sample_probe_realization",
    "EerRun", "Message", "NodeState", "SimConfig", "run_sim", "run_slot", "step_mobility",
    "CandidateEvaluation", "MCConfig", "QTable", "SchemeId", "build_q_table", "select_relay",
]
