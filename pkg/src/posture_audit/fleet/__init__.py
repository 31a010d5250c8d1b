"""Scenario-driven mock server fleet for end-to-end verification."""
from .fleet import FleetHandle, FleetServer, spawn_fleet
from .hello import ParsedHello, parse_client_hello
from .scenarios import (Flag, ScenarioExpectation, ServerScenario, compute_expectation,
                        format_scenarios, load_scenario_file, parse_scenarios, random_scenarios,
                        read_raw_snapshot, write_scenario_file)
from .server import ConnectionLog, ConnectionRecord

__all__ = [
    "FleetHandle", "FleetServer", "spawn_fleet", "ParsedHello", "parse_client_hello", "Flag",
    "ScenarioExpectation", "ServerScenario", "compute_expectation", "format_scenarios",
    "load_scenario_file", "parse_scenarios", "random_scenarios", "read_raw_snapshot",
    "write_scenario_file", "ConnectionLog", "ConnectionRecord",
]
