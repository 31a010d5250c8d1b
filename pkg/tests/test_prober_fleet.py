"""Prober against live mock servers on loopback."""
import dataclasses
import hashlib
import socket

import pytest

from posture_audit.certs.fixtures import FlawSpec
from posture_audit.errors import NoChainPresented, Unreachable
from posture_audit.fleet import Flag, ServerScenario
from posture_audit.prober.net import Endpoint, Pacer, ProbePolicy
from posture_audit.prober.probe import (RetrievalPath, enumerate_ciphers, enumerate_protocols,
                                        fetch_certificate_chain, probe)
from posture_audit.prober.wire import Outcome
from posture_audit.versions import ALL_VERSIONS, ProtocolVersion as V

from conftest import FAST_POLICY, endpoint_for, settled_log


def scenario(sid, config, *, depth=2, flags=frozenset(), **kw):
    return ServerScenario(sid, config, FlawSpec.of(depth=depth), flags=frozenset(flags), **kw)


def accepted_sets(matrix):
    return {v: frozenset(matrix.accepted(v)) for v in ALL_VERSIONS if matrix.accepted(v)}


def test_recovers_two_tls12_ciphers(fleet_of, catalog):
    s = scenario("two", {V.TLS1_2: (0x002F, 0x009C)})
    fleet = fleet_of([s])
    matrix = enumerate_protocols(endpoint_for(fleet, s), catalog, FAST_POLICY)
    assert accepted_sets(matrix) == {V.TLS1_2: {0x002F, 0x009C}}
    assert matrix.supported_versions() == [V.TLS1_2]
    assert matrix.compression is False
    assert matrix.probe_count == len(settled_log(fleet, "two", matrix.probe_count))


def test_tls12_and_tls13(fleet_of, catalog):
    s = scenario("modern", {V.TLS1_2: (0xC02F, 0xC030), V.TLS1_3: (0x1301, 0x1302, 0x1303)})
    fleet = fleet_of([s])
    matrix = enumerate_protocols(endpoint_for(fleet, s), catalog, FAST_POLICY)
    assert accepted_sets(matrix) == {V.TLS1_2: {0xC02F, 0xC030}, V.TLS1_3: {0x1301, 0x1302, 0x1303}}


def test_every_version(fleet_of, catalog):
    config = {V.SSL2: (0x010080, 0x0700C0), V.SSL3: (0x000A,), V.TLS1_0: (0x002F, 0x0005),
              V.TLS1_1: (0x0035,), V.TLS1_2: (0x009C, 0xC02F), V.TLS1_3: (0x1301,)}
    s = scenario("all6", config)
    fleet = fleet_of([s])
    matrix = enumerate_protocols(endpoint_for(fleet, s), catalog, FAST_POLICY)
    assert accepted_sets(matrix) == {v: frozenset(c) for v, c in config.items()}


def test_tls10_only_gates_other_versions(fleet_of, catalog):
    s = scenario("old", {V.TLS1_0: (0x002F,)})
    fleet = fleet_of([s])
    matrix = enumerate_protocols(endpoint_for(fleet, s), catalog, FAST_POLICY)
    assert accepted_sets(matrix) == {V.TLS1_0: {0x002F}}
    # one gate hello per non-SSL2 version that answers something else, plus
    # the SSLv2 hello, the TLS1.0 enumeration and the compression probe
    tls10 = len(catalog.for_version(V.TLS1_0))
    assert matrix.probe_count == 6 + tls10 + 1


def test_unreachable_endpoint(catalog):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    ep = Endpoint("gone.example.gov", 443, ("127.0.0.1", port))
    with pytest.raises(Unreachable):
        enumerate_protocols(ep, catalog, FAST_POLICY)


def test_no_chain_without_support():
    ep = Endpoint("x.example.gov", 443, ("127.0.0.1", 9))
    from posture_audit.prober.probe import ProtocolSupportMatrix
    with pytest.raises(NoChainPresented):
        fetch_certificate_chain(ep, ProtocolSupportMatrix(), FAST_POLICY)


def test_plaintext_chain_matches_presented(fleet_of, catalog):
    s = scenario("chain3", {V.TLS1_2: (0x002F,)}, depth=3)
    fleet = fleet_of([s])
    ep = endpoint_for(fleet, s)
    matrix = enumerate_protocols(ep, catalog, FAST_POLICY)
    raw = fetch_certificate_chain(ep, matrix, FAST_POLICY)
    presented = fleet.servers["chain3"].tls.behavior.chain_der
    assert raw.retrieval_path is RetrievalPath.PLAINTEXT_CERTIFICATE_MESSAGE
    assert len(raw.der_certificates) == 3
    assert [hashlib.sha256(c).digest() for c in raw.der_certificates] == \
        [hashlib.sha256(c).digest() for c in presented]


def test_tls13_only_chain_via_handshake(fleet_of, catalog):
    s = scenario("only13", {V.TLS1_3: (0x1301, 0x1302)}, depth=3)
    fleet = fleet_of([s])
    ep = endpoint_for(fleet, s)
    matrix = enumerate_protocols(ep, catalog, FAST_POLICY)
    assert matrix.compression is None
    raw = fetch_certificate_chain(ep, matrix, FAST_POLICY)
    assert raw.retrieval_path is RetrievalPath.COMPLETED_HANDSHAKE
    presented = fleet.servers["only13"].tls.behavior.chain_der
    assert list(raw.der_certificates) == list(presented)


def test_behaviour_flags(fleet_of, catalog):
    scenarios = [scenario("closer", {V.TLS1_2: (0x002F,)}, flags={Flag.CLOSE_ON_HELLO}),
                 scenario("broken", {V.TLS1_2: (0x002F,)}, flags={Flag.MALFORMED}),
                 scenario("sloth", {V.TLS1_2: (0x002F,)}, flags={Flag.SLOW}),
                 scenario("zip", {V.TLS1_2: (0x002F,)}, flags={Flag.DEFLATE})]
    fleet = fleet_of(scenarios, slow_delay=0.3)
    policy = dataclasses.replace(FAST_POLICY, read_timeout=0.1, retries=0)
    outcomes = {}
    for s in scenarios:
        ep = endpoint_for(fleet, s)
        outcomes[s.id] = probe(ep, V.TLS1_2, (0x002F,), policy, Pacer(policy)).outcome
    assert outcomes == {"closer": Outcome.REJECTED_CLOSE, "broken": Outcome.MALFORMED,
                        "sloth": Outcome.TIMEOUT, "zip": Outcome.ACCEPTED}
    zipped = enumerate_protocols(endpoint_for(fleet, scenarios[3]), catalog, FAST_POLICY)
    assert zipped.compression is True


def test_timeout_is_retried(fleet_of):
    s = scenario("sloth2", {V.TLS1_2: (0x002F,)}, flags={Flag.SLOW})
    fleet = fleet_of([s], slow_delay=0.2)
    policy = dataclasses.replace(FAST_POLICY, read_timeout=0.05, retries=2)
    pacer = Pacer(policy)
    assert probe(endpoint_for(fleet, s), V.TLS1_2, (0x002F,), policy, pacer).outcome \
        is Outcome.TIMEOUT
    assert pacer.count == 3


def test_per_version_budget(fleet_of, catalog):
    s = scenario("budget", {V.TLS1_2: (0x002F,)})
    fleet = fleet_of([s])
    policy = dataclasses.replace(FAST_POLICY, max_probes_per_version=20)
    matrix = enumerate_protocols(endpoint_for(fleet, s), catalog, policy)
    assert "budget" in matrix.per_version[V.TLS1_2].error
    assert not matrix.per_version[V.TLS1_2].supported


def test_per_host_budget_never_exceeded(fleet_of, catalog):
    s = scenario("cap", {V.TLS1_2: (0x002F,), V.TLS1_3: (0x1301,)})
    fleet = fleet_of([s])
    policy = dataclasses.replace(FAST_POLICY, max_probes_per_host=40)
    matrix = enumerate_protocols(endpoint_for(fleet, s), catalog, policy)
    assert matrix.errors
    assert len(settled_log(fleet, "cap")) <= 40


def test_enumerate_ciphers_subset(fleet_of, catalog):
    s = scenario("subset", {V.TLS1_1: (0x002F, 0x0035)})
    fleet = fleet_of([s])
    got = enumerate_ciphers(endpoint_for(fleet, s), V.TLS1_1, (0x000A, 0x0035, 0x002F),
                            FAST_POLICY)
    assert got == (0x0035, 0x002F)


def test_pacer_gaps_seen_by_server(fleet_of, catalog):
    s = scenario("paced", {V.TLS1_2: (0x002F,)})
    fleet = fleet_of([s])
    policy = dataclasses.replace(FAST_POLICY, per_host_delay=0.02)
    enumerate_ciphers(endpoint_for(fleet, s), V.TLS1_2, catalog.for_version(V.TLS1_2)[:25],
                      policy)
    log = settled_log(fleet, "paced", 25)
    assert len(log) == 25
    gaps = [b.opened - a.replied for a, b in zip(log, log[1:])]
    assert min(gaps) >= 0.02


def test_policy_validation():
    with pytest.raises(ValueError):
        ProbePolicy(per_host_delay=-1)
    with pytest.raises(ValueError):
        ProbePolicy(max_probes_per_host=0)
    assert Endpoint.parse("a.gov:8443") == Endpoint("a.gov", 8443)
    assert Endpoint.parse("a.gov") == Endpoint("a.gov", 443)
