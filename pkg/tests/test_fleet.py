import socket

import pytest

from posture_audit.certs.fixtures import FlawSpec
from posture_audit.certs.validate import IssueCode
from posture_audit.errors import ScenarioInvalid
from posture_audit.fleet import (Flag, ServerScenario, format_scenarios, load_scenario_file,
                                 parse_scenarios, random_scenarios, write_scenario_file)
from posture_audit.prober.net import Pacer
from posture_audit.prober.probe import probe
from posture_audit.prober.wire import Outcome
from posture_audit.versions import ProtocolVersion as V

from conftest import FAST_POLICY, endpoint_for, settled_log


def test_seeded_generation_is_deterministic(catalog):
    a = random_scenarios(7, 10, catalog)
    b = random_scenarios(7, 10, catalog)
    assert format_scenarios(a) == format_scenarios(b)
    assert [s.expected for s in a] == [s.expected for s in b]
    assert format_scenarios(random_scenarios(8, 10, catalog)) != format_scenarios(a)


def test_generated_scenarios_are_valid(catalog):
    for s in random_scenarios(11, 40, catalog, flag_rate=0.3):
        s.validate(catalog)
        for version, codes in s.version_config.items():
            assert all(catalog.valid_for(c, version) for c in codes)


def test_file_round_trip(tmp_path, catalog):
    scenarios = random_scenarios(3, 12, catalog, flag_rate=0.5)
    path = tmp_path / "fleet.txt"
    write_scenario_file(scenarios, path)
    again = load_scenario_file(path)
    assert again == scenarios
    write_scenario_file(again, tmp_path / "again.txt")
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_pem_chain_field(tmp_path):
    text = "id=p1\nversions=TLS1_2:0x002F\nchain=pem:/tmp/x.pem\nbanner.22=SSH-2.0-OpenSSH_7.4\n"
    (s,) = parse_scenarios(text)
    assert str(s.chain) == "/tmp/x.pem" and s.banners == {22: "SSH-2.0-OpenSSH_7.4"}


@pytest.mark.parametrize("text", [
    "id=a\nversions=TLS1_2:0x002F\n",
    "id=a\nversions=TLS9:0x002F\nchain=flaws:,depth:2\n",
    "id=a\nversions=TLS1_2:0x002F\nchain=flaws:XYZ,depth:2\n",
    "id=a\nversions=TLS1_2:0x002F\nchain=flaws:,depth:2\nflags=Sleepy\n",
    "id=a\nversions=TLS1_2:0x002F\nchain=flaws:,depth:2\n\nid=a\nversions=TLS1_2:0x002F\nchain=flaws:,depth:2\n",
    "id=a\nnot a field\n",
])
def test_bad_scenario_text(text):
    with pytest.raises(ScenarioInvalid):
        parse_scenarios(text)


@pytest.mark.parametrize("config,chain,banners", [
    ({V.TLS1_3: (0x002F,)}, FlawSpec.of(), {}),
    ({V.TLS1_2: ()}, FlawSpec.of(), {}),
    ({V.TLS1_2: (0x002F,)}, FlawSpec(frozenset({IssueCode.SLF}), 3), {}),
    ({V.TLS1_2: (0x002F,)}, FlawSpec.of(), {443: "x"}),
])
def test_invalid_scenarios(catalog, config, chain, banners):
    with pytest.raises(ScenarioInvalid):
        ServerScenario("bad", config, chain, banners).validate(catalog)


def test_accept_and_reject_by_construction(fleet_of):
    s = ServerScenario("one", {V.TLS1_2: (0x002F,)}, FlawSpec.of())
    fleet = fleet_of([s])
    ep = endpoint_for(fleet, s)
    ok = probe(ep, V.TLS1_2, (0x002F,), FAST_POLICY, Pacer(FAST_POLICY))
    assert ok.outcome is Outcome.ACCEPTED and ok.chosen == 0x002F
    no = probe(ep, V.TLS1_2, (0x0035,), FAST_POLICY, Pacer(FAST_POLICY))
    assert no.outcome is Outcome.REJECTED_ALERT and no.alert == 40
    log = settled_log(fleet, "one", 2)
    assert [r.response for r in log] == ["server-hello:0x0303:0x002F", "alert:40"]


def test_close_on_hello(fleet_of):
    s = ServerScenario("shut", {V.TLS1_2: (0x002F,)}, FlawSpec.of(), flags={Flag.CLOSE_ON_HELLO})
    fleet = fleet_of([s])
    r = probe(endpoint_for(fleet, s), V.TLS1_2, (0x002F,), FAST_POLICY, Pacer(FAST_POLICY))
    assert r.outcome is Outcome.REJECTED_CLOSE


def test_fifty_distinct_reachable_ports(fleet_of, catalog):
    scenarios = random_scenarios(50, 50, catalog)
    fleet = fleet_of(scenarios)
    ports = [a for entry in fleet.address_map().values() for a in entry["ports"].values()]
    assert len(ports) == len(set(ports))
    tls_ports = [entry["ports"]["443"] for entry in fleet.address_map().values()]
    assert len(set(tls_ports)) == 50
    for port in tls_ports:
        with socket.create_connection(("127.0.0.1", port), timeout=2):
            pass


def test_log_is_time_ordered(fleet_of, catalog):
    s = ServerScenario("ordered", {V.TLS1_2: (0x002F, 0x009C)}, FlawSpec.of(),
                       banners={22: "SSH-2.0-OpenSSH_8.4"})
    fleet = fleet_of([s])
    ep = endpoint_for(fleet, s)
    pacer = Pacer(FAST_POLICY)
    for code in catalog.for_version(V.TLS1_2)[:20]:
        probe(ep, V.TLS1_2, (code,), FAST_POLICY, pacer)
    log = settled_log(fleet, "ordered", 20)
    assert len(log) == 20
    for a, b in zip(log, log[1:]):
        assert a.opened <= a.replied <= a.closed <= b.opened


def test_state_files(fleet_of, catalog, tmp_path):
    import json

    from posture_audit.aggregate.dataset import load_dataset

    scenarios = random_scenarios(4, 3, catalog)
    fleet = fleet_of(scenarios)
    path = fleet.write_state(tmp_path, extra_domains=["ghost.example.gov"])
    mapping = json.loads(path.read_text())
    assert set(mapping) == {s.domain for s in scenarios}
    rows = load_dataset(tmp_path / "dataset.csv")
    assert {t.domain for t in rows} == set(mapping) | {"ghost.example.gov"}
    assert (fleet.trust_dir / "fixture-root.pem").exists()


def test_expectations_carry_cves(catalog, table2_path):
    from posture_audit.fleet import read_raw_snapshot
    raw = read_raw_snapshot(table2_path)
    scenarios = random_scenarios(2023, 30, catalog, raw_snapshot=raw)
    assert all(s.expected.cves is not None for s in scenarios)
    assert any(s.expected.cves for s in scenarios)
