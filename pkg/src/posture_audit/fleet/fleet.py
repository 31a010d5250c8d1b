"""Spawning and tearing down a fleet of scenario servers on loopback."""
from __future__ import annotations

import dataclasses
import json
import tempfile
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import serialization

from ..aggregate.dataset import Income, ScanTarget, geoscheme, write_dataset
from ..certs.fixtures import FixtureAuthority, FlawSpec, default_authority, generate_fixture_chain
from ..certs.validate import RevocationData
from ..errors import ScenarioInvalid
from .scenarios import HTTP_PORTS, Flag, ServerScenario
from .server import BannerServer, ConnectionLog, TlsBehavior, TlsServer

DEFAULT_SLOW_DELAY = 0.3


@dataclasses.dataclass
class FleetServer:
    scenario: ServerScenario
    tls: TlsServer
    banners: dict                   # logical port -> BannerServer
    log: ConnectionLog

    def ports(self) -> dict:
        out = {443: self.tls.address[1]}
        out.update({p: s.address[1] for p, s in self.banners.items()})
        return out


class FleetHandle:
    def __init__(self, servers: dict, workdir: Path, revocations: RevocationData,
                 authority: FixtureAuthority, owns_workdir: tempfile.TemporaryDirectory | None):
        self.servers = servers
        self.workdir = workdir
        self.revocations = revocations
        self.authority = authority
        self._owned = owns_workdir
        self.trust_dir = workdir / "trust"
        self.crl_path = workdir / "crl.csv"
        self.blocklist_path = workdir / "blocklist.txt"
        authority.write_trust_store(self.trust_dir)
        revocations.write(self.crl_path, self.blocklist_path)

    def address_map(self) -> dict:
        return {s.scenario.domain: {"host": "127.0.0.1",
                                    "ports": {str(p): a for p, a in sorted(s.ports().items())}}
                for s in self.servers.values()}

    def connection_log(self, scenario_id: str) -> list:
        return self.servers[scenario_id].log.entries()

    def by_domain(self, domain: str) -> FleetServer:
        for s in self.servers.values():
            if s.scenario.domain == domain:
                return s
        raise KeyError(domain)

    def clear_logs(self) -> None:
        for s in self.servers.values():
            s.log.clear()

    def targets(self, extra_domains=()) -> list:
        """Scan targets for every fleet domain (plus ``extra_domains``), geography assigned round-robin."""
        subs = sorted(geoscheme().items())
        incomes = list(Income)
        domains = [s.scenario.domain for s in self.servers.values()] + list(extra_domains)
        out = []
        for i, domain in enumerate(domains):
            sub, region = subs[i % len(subs)]
            out.append(ScanTarget(domain, region, sub, incomes[i % len(incomes)]))
        return out

    def write_state(self, directory=None, extra_domains=()) -> Path:
        """Write address_map.json and dataset.csv; returns the address map path."""
        directory = Path(directory or self.workdir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "address_map.json"
        path.write_text(json.dumps(self.address_map(), indent=2, sort_keys=True))
        write_dataset(self.targets(extra_domains), directory / "dataset.csv")
        return path

    def stop(self) -> None:
        listeners = [l for s in self.servers.values() for l in (s.tls, *s.banners.values())]
        for listener in listeners:
            listener.signal_stop()
        for listener in listeners:
            listener.join()
        self.servers = {}
        if self._owned is not None:
            self._owned.cleanup()
            self._owned = None

    def __enter__(self) -> "FleetHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def _materialize(scenario: ServerScenario, authority, workdir: Path, at):
    """Return (chain DER list, cert file, key file, revocation fragment)."""
    if isinstance(scenario.chain, FlawSpec):
        fc = generate_fixture_chain(scenario.chain, scenario.domain, at=at, authority=authority)
        cert_file = workdir / f"{scenario.id}.chain.pem"
        key_file = workdir / f"{scenario.id}.key.pem"
        cert_file.write_bytes(fc.pem_chain)
        key_file.write_bytes(fc.leaf_key_pem)
        return fc.der_chain, str(cert_file), str(key_file), fc.revocations
    data = Path(scenario.chain).read_bytes()
    certs = x509.load_pem_x509_certificates(data)
    if not certs:
        raise ScenarioInvalid(f"{scenario.id}: no certificates in {scenario.chain}")
    ders = [c.public_bytes(serialization.Encoding.DER) for c in certs]
    has_key = b"PRIVATE KEY-----" in data
    path = str(scenario.chain)
    return ders, path if has_key else None, path if has_key else None, RevocationData()


def spawn_fleet(scenarios, catalog=None, *, workdir=None,
                authority: FixtureAuthority | None = None,
                slow_delay: float = DEFAULT_SLOW_DELAY, at=None) -> FleetHandle:
    """Start one TLS responder plus banner servers per scenario, all on loopback."""
    scenarios = list(scenarios)
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ScenarioInvalid("duplicate scenario ids")
    if catalog is not None:
        for s in scenarios:
            s.validate(catalog)
    authority = authority or default_authority()
    owned = None
    if workdir is None:
        owned = tempfile.TemporaryDirectory(prefix="posture-fleet-")
        workdir = Path(owned.name)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    servers: dict = {}
    revocations = RevocationData()
    try:
        for s in scenarios:
            ders, cert_file, key_file, fragment = _materialize(s, authority, workdir, at)
            revocations = revocations.merge(fragment)
            behavior = TlsBehavior(
                accepted={v.wire_code: tuple(c) for v, c in s.version_config.items()},
                chain_der=ders, cert_file=cert_file, key_file=key_file,
                close_on_hello=Flag.CLOSE_ON_HELLO in s.flags,
                malformed_server_hello=Flag.MALFORMED in s.flags,
                slow_delay=slow_delay if Flag.SLOW in s.flags else 0.0,
                deflate=Flag.DEFLATE in s.flags)
            log = ConnectionLog()
            tls = TlsServer(443, log, behavior).start()
            banners = {p: BannerServer(p, log, text, p in HTTP_PORTS).start()
                       for p, text in s.banners.items()}
            servers[s.id] = FleetServer(s, tls, banners, log)
    except BaseException:
        for fs in servers.values():
            fs.tls.stop()
            for b in fs.banners.values():
                b.stop()
        if owned is not None:
            owned.cleanup()
        raise
    return FleetHandle(servers, workdir, revocations, authority, owned)
