"""Simulation harness: scenarios, fault library, oracles, metrics, apps."""

from .oracles import InvariantViolation
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import RunResult, Simulation, run
from .sweep import SweepReport, random_scenario, sweep

__all__ = ["InvariantViolation", "RunResult", "Scenario", "Simulation", "load_scenario", "parse_scenario", "run",
           "SweepReport", "random_scenario", "sweep"]
