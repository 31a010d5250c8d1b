import contextlib
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from posture_audit.catalog import load_catalog  # noqa: E402
from posture_audit.datafiles import data_path  # noqa: E402
from posture_audit.fleet import spawn_fleet  # noqa: E402
from posture_audit.prober.net import Endpoint, ProbePolicy  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]

# fast but still paced; the mock servers live on loopback
FAST_POLICY = ProbePolicy(connect_timeout=2.0, read_timeout=1.0, retries=1, per_host_delay=0.0)


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def table2_path():
    return data_path("nvd_table2.jsonl")


@pytest.fixture
def fleet_of(catalog):
    """Spawn a fleet for the test and stop it afterwards."""
    stack = contextlib.ExitStack()

    def start(scenarios, **kw):
        return stack.enter_context(spawn_fleet(scenarios, catalog, **kw))

    with stack:
        yield start


def endpoint_for(fleet, scenario) -> Endpoint:
    entry = fleet.address_map()[scenario.domain]
    return Endpoint(scenario.domain, 443, (entry["host"], entry["ports"]["443"]))


def settled_log(fleet, scenario_id, count=None, timeout=3.0):
    """Connection log once the server has recorded every closed connection."""
    import time
    deadline = time.monotonic() + timeout
    last = -1
    while True:
        log = fleet.connection_log(scenario_id)
        if count is not None and len(log) >= count:
            return log
        if count is None and len(log) == last:
            return log
        if time.monotonic() > deadline:
            return log
        last = len(log)
        time.sleep(0.05)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
