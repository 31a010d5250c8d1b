"""Protocol and cipher enumeration against a live endpoint."""
from __future__ import annotations

import dataclasses
import enum
import logging
import socket
import ssl
import time
from collections.abc import Iterable, Sequence

from ..errors import (BudgetExceeded, HandshakeFailure, NoChainPresented,
                      ProtocolViolation, Unreachable)
from ..versions import ALL_VERSIONS, ProtocolVersion
from . import wire
from .net import Endpoint, Pacer, ProbePolicy
from .wire import Outcome, ProbeResult

log = logging.getLogger(__name__)

V = ProtocolVersion
PLAINTEXT_CHAIN_VERSIONS = (V.TLS1_2, V.TLS1_1, V.TLS1_0, V.SSL3)


@dataclasses.dataclass(frozen=True)
class VersionSupport:
    supported: bool = False
    accepted_ciphers: tuple = ()
    error: str | None = None

    def __post_init__(self):
        if self.supported != bool(self.accepted_ciphers):
            raise ValueError("supported must be true exactly when ciphers were accepted")


@dataclasses.dataclass
class ProtocolSupportMatrix:
    per_version: dict = dataclasses.field(
        default_factory=lambda: {v: VersionSupport() for v in ALL_VERSIONS})
    probe_count: int = 0
    elapsed: float = 0.0
    compression: bool | None = None

    def supported_versions(self) -> list[ProtocolVersion]:
        return [v for v in ALL_VERSIONS if self.per_version[v].supported]

    def accepted(self, version: ProtocolVersion) -> tuple:
        return self.per_version[version].accepted_ciphers

    def accepted_union(self) -> frozenset:
        return frozenset(c for s in self.per_version.values() for c in s.accepted_ciphers)

    @property
    def errors(self) -> dict:
        return {v: s.error for v, s in self.per_version.items() if s.error}

    @classmethod
    def from_acceptance(cls, accepted: dict, **kw) -> "ProtocolSupportMatrix":
        per_version = {v: VersionSupport(bool(accepted.get(v)), tuple(accepted.get(v, ())))
                       for v in ALL_VERSIONS}
        return cls(per_version=per_version, **kw)

    def to_dict(self) -> dict:
        return {
            "versions": {v.name: {"supported": s.supported,
                                  "accepted_ciphers": [f"0x{c:04X}" for c in s.accepted_ciphers],
                                  **({"error": s.error} if s.error else {})}
                         for v, s in self.per_version.items()},
            "probe_count": self.probe_count,
            "elapsed": round(self.elapsed, 6),
            "compression": self.compression,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolSupportMatrix":
        per_version = {}
        for v in ALL_VERSIONS:
            entry = data["versions"].get(v.name, {})
            ciphers = tuple(int(c, 16) for c in entry.get("accepted_ciphers", ()))
            per_version[v] = VersionSupport(bool(ciphers), ciphers, entry.get("error"))
        return cls(per_version, data.get("probe_count", 0), data.get("elapsed", 0.0),
                   data.get("compression"))


class RetrievalPath(enum.Enum):
    PLAINTEXT_CERTIFICATE_MESSAGE = "PlaintextCertificateMessage"
    COMPLETED_HANDSHAKE = "CompletedHandshake"


@dataclasses.dataclass(frozen=True)
class RawChain:
    der_certificates: tuple
    retrieval_path: RetrievalPath
    version: ProtocolVersion | None = None


def _read_flight(sock: socket.socket, version: ProtocolVersion, deadline: float,
                 want_certificate: bool = False) -> tuple[bytes, bool]:
    """Read until the flight can be classified; returns (data, timed_out)."""
    data = b""
    while not wire.response_complete(version, data, want_certificate=want_certificate):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return data, True
        sock.settimeout(remaining)
        try:
            chunk = sock.recv(65536)
        except socket.timeout:
            return data, True
        except ConnectionResetError:
            break
        if not chunk:
            break
        data += chunk
    return data, False


def exchange(endpoint: Endpoint, hello: bytes, version: ProtocolVersion, pacer: Pacer,
             *, want_certificate: bool = False) -> tuple[bytes, bool]:
    """Open one connection, send ``hello`` and read the server flight."""
    with pacer.connection(endpoint.connect_address()) as sock:
        try:
            sock.sendall(hello)
        except OSError:
            return b"", False
        deadline = time.monotonic() + pacer.policy.read_timeout
        return _read_flight(sock, version, deadline, want_certificate)


def probe(endpoint: Endpoint, version: ProtocolVersion, ciphers: Sequence[int],
          policy: ProbePolicy, pacer: Pacer, *, catalog=None,
          compression: Sequence[int] = (wire.COMPRESSION_NULL,)) -> ProbeResult:
    """Send one ClientHello (retrying on timeout) and classify the answer."""
    hello_args = dict(catalog=catalog, compression=compression)
    result = None
    for _attempt in range(policy.retries + 1):
        hello = wire.build_client_hello(version, ciphers, endpoint.host, **hello_args)
        data, timed_out = exchange(endpoint, hello, version, pacer)
        if timed_out and not data:
            result = ProbeResult(version, tuple(ciphers), Outcome.TIMEOUT)
            continue
        result = wire.parse_server_response(version, ciphers, data)
        break
    if result.is_accepted and not set(result.accepted) <= set(ciphers):
        raise ProtocolViolation("accepted cipher outside offered set")
    if result.outcome is Outcome.MALFORMED and result.note.startswith("protocol violation"):
        log.warning("%s %s: %s", endpoint, version.name, result.note)
    return result


def enumerate_ciphers(endpoint: Endpoint, version: ProtocolVersion, candidates: Sequence[int],
                      policy: ProbePolicy, pacer: Pacer | None = None, *,
                      catalog=None) -> tuple:
    """Return the candidates the server accepts for ``version``.

    SSLv2 is settled by a single hello listing every kind; other versions
    are probed one candidate per connection.
    """
    pacer = pacer or Pacer(policy)
    candidates = tuple(candidates)
    if not candidates:
        return ()
    if version is V.SSL2:
        result = probe(endpoint, version, candidates, policy, pacer, catalog=catalog)
        return result.accepted if result.is_accepted else ()
    budget = policy.max_probes_per_version
    used_before = pacer.count
    accepted = []
    for code in candidates:
        if pacer.count - used_before + 1 + policy.retries > budget:
            raise BudgetExceeded(
                f"{version.name}: {len(candidates)} candidates exceed the per-version budget of {budget}")
        result = probe(endpoint, version, (code,), policy, pacer, catalog=catalog)
        if result.is_accepted:
            accepted.append(result.chosen)
    return tuple(accepted)


def enumerate_protocols(endpoint: Endpoint, catalog, policy: ProbePolicy,
                        pacer: Pacer | None = None, *,
                        versions: Iterable[ProtocolVersion] = ALL_VERSIONS,
                        probe_compression: bool = True) -> ProtocolSupportMatrix:
    """Build the support matrix for every protocol version.

    Each version is first gated by one hello offering its whole catalog
    family; only versions that answer with a ServerHello are enumerated
    cipher by cipher.  Unreachable during the first connection propagates;
    later per-version failures are recorded on the matrix.
    """
    pacer = pacer or Pacer(policy)
    started = time.monotonic()
    count0 = pacer.count
    per_version = {v: VersionSupport() for v in ALL_VERSIONS}
    for version in versions:
        candidates = catalog.for_version(version)
        if not candidates:
            continue
        try:
            if version is V.SSL2:
                accepted = enumerate_ciphers(endpoint, version, candidates, policy, pacer,
                                             catalog=catalog)
            else:
                gate = probe(endpoint, version, candidates, policy, pacer, catalog=catalog)
                if gate.outcome is Outcome.TIMEOUT:
                    per_version[version] = VersionSupport(error="timeout on version probe")
                    continue
                if not gate.is_accepted:
                    continue
                accepted = enumerate_ciphers(endpoint, version, candidates, policy, pacer,
                                             catalog=catalog)
            per_version[version] = VersionSupport(bool(accepted), accepted)
        except Unreachable:
            if pacer.count - count0 <= 1:
                raise
            per_version[version] = VersionSupport(error="unreachable during enumeration")
        except BudgetExceeded as exc:
            per_version[version] = VersionSupport(error=str(exc))
    matrix = ProtocolSupportMatrix(per_version)
    if probe_compression:
        try:
            matrix.compression = probe_deflate(endpoint, matrix, policy, pacer, catalog=catalog)
        except (Unreachable, BudgetExceeded) as exc:
            log.info("%s: compression probe skipped: %s", endpoint, exc)
    matrix.probe_count = pacer.count - count0
    matrix.elapsed = time.monotonic() - started
    return matrix


def probe_deflate(endpoint: Endpoint, matrix: ProtocolSupportMatrix, policy: ProbePolicy,
                  pacer: Pacer, *, catalog=None) -> bool | None:
    """One extra hello offering DEFLATE; ``None`` when no SSLv3-TLS1.2 version is supported."""
    for version in PLAINTEXT_CHAIN_VERSIONS:
        ciphers = matrix.accepted(version)
        if ciphers:
            result = probe(endpoint, version, ciphers, policy, pacer, catalog=catalog,
                           compression=(wire.COMPRESSION_DEFLATE, wire.COMPRESSION_NULL))
            return result.is_accepted and result.compression == wire.COMPRESSION_DEFLATE
    return None


def fetch_certificate_chain(endpoint: Endpoint, matrix: ProtocolSupportMatrix,
                            policy: ProbePolicy, pacer: Pacer | None = None) -> RawChain:
    """Retrieve the presented chain without completing a key exchange where possible."""
    pacer = pacer or Pacer(policy)
    for version in PLAINTEXT_CHAIN_VERSIONS + (V.SSL2,):
        ciphers = matrix.accepted(version)
        if not ciphers:
            continue
        hello = wire.build_client_hello(version, ciphers, endpoint.host)
        data, _ = exchange(endpoint, hello, version, pacer, want_certificate=True)
        try:
            certs = wire.certificates_from_flight(version, data)
        except (wire.Garbage, wire.Incomplete) as exc:
            raise NoChainPresented(f"{endpoint}: unreadable certificate flight: {exc}") from exc
        if not certs:
            raise NoChainPresented(f"{endpoint}: no Certificate message over {version.name}")
        return RawChain(tuple(certs), RetrievalPath.PLAINTEXT_CERTIFICATE_MESSAGE, version)
    if matrix.per_version[V.TLS1_3].supported:
        certs = _tls13_chain(endpoint, policy, pacer)
        return RawChain(tuple(certs), RetrievalPath.COMPLETED_HANDSHAKE, V.TLS1_3)
    raise NoChainPresented(f"{endpoint}: no SSL/TLS version supported")


def _tls13_chain(endpoint: Endpoint, policy: ProbePolicy, pacer: Pacer) -> list[bytes]:
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
    ctx.check_hostname = False
    ctx.verify_mode = ssl.CERT_NONE
    ctx.minimum_version = ssl.TLSVersion.TLSv1_3
    server_name = None if wire._is_ip_literal(endpoint.host) else endpoint.host
    with pacer.connection(endpoint.connect_address()) as raw:
        raw.settimeout(policy.read_timeout)
        try:
            with ctx.wrap_socket(raw, server_hostname=server_name) as tls:
                chain = _peer_chain(tls)
        except (ssl.SSLError, OSError) as exc:
            raise HandshakeFailure(f"{endpoint}: TLS 1.3 handshake failed: {exc}") from exc
    if not chain:
        raise NoChainPresented(f"{endpoint}: TLS 1.3 peer sent no certificate")
    return chain


def _peer_chain(tls: ssl.SSLSocket) -> list[bytes]:
    getter = getattr(tls, "get_unverified_chain", None)
    if getter is None:
        getter = getattr(tls._sslobj, "get_unverified_chain", None)  # private before 3.13
    if getter is not None:
        chain = getter() or []
        return [c if isinstance(c, bytes) else c.public_bytes(ssl._ssl.ENCODING_DER)
                for c in chain]
    leaf = tls.getpeercert(binary_form=True)
    return [leaf] if leaf else []
