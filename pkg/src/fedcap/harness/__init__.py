"""Loopback experiment harness: process topologies, scenarios and latency benchmarks."""

from .bench import LatencyReport, emit_report, run_latency_experiment
from .scenario import Scenario, ScenarioResult, run_scenario
from .topology import Topology

__all__ = [
    "LatencyReport",
    "Scenario",
    "ScenarioResult",
    "Topology",
    "emit_report",
    "run_latency_experiment",
    "run_scenario",
]
