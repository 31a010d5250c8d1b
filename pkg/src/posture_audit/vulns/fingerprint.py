"""Read-only service fingerprinting: one benign request per port, then rule matching."""
from __future__ import annotations

import contextlib
import csv
import dataclasses
import logging
import re
import socket
import ssl
from pathlib import Path

from ..datafiles import data_path
from ..errors import BudgetExceeded, SchemaError, Unreachable
from ..prober.net import Pacer, ProbePolicy
from . import cpe as cpelib

log = logging.getLogger(__name__)

DEFAULT_PORTS = (21, 22, 25, 80, 110, 143, 443, 465, 587, 993, 995, 8080, 8443)
WEB_PORTS = frozenset({80, 443, 8080, 8443})
TLS_PORTS = frozenset({443, 465, 993, 995, 8443})
MAX_BANNER = 8192


@dataclasses.dataclass(frozen=True)
class ServiceFingerprint:
    port: int
    banner: str
    vendor: str
    product: str
    version: str
    cpe: str
    transport: str = "TCP"

    def __post_init__(self):
        if not cpelib.is_well_formed(self.cpe):
            raise ValueError(f"malformed CPE {self.cpe!r}")
        if cpelib.unescape(cpelib.split_cpe(self.cpe)[5]) != self.version.lower():
            raise ValueError("CPE version component differs from the version field")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ServiceFingerprint":
        return cls(**data)


@dataclasses.dataclass(frozen=True)
class FingerprintRule:
    pattern: re.Pattern
    vendor: str
    product: str
    version_group_index: int

    def match(self, banner: str):
        m = self.pattern.search(banner)
        if not m:
            return None
        return m.group(self.version_group_index)


def load_rules(path: str | Path | None = None) -> list[FingerprintRule]:
    path = Path(path) if path else data_path("fingerprint_rules.csv")
    rules = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["pattern", "vendor", "product", "version_group_index"]:
            raise SchemaError("rule file header must be pattern,vendor,product,version_group_index",
                              row=1)
        for line, row in enumerate(reader, start=2):
            try:
                pattern = re.compile(row["pattern"])
                group = int(row["version_group_index"])
            except (re.error, ValueError) as exc:
                raise SchemaError(f"bad rule: {exc}", row=line) from exc
            if not 0 < group <= pattern.groups:
                raise SchemaError(f"group {group} not in pattern", row=line)
            if not row["vendor"] or not row["product"]:
                raise SchemaError("vendor and product required", row=line)
            rules.append(FingerprintRule(pattern, row["vendor"], row["product"], group))
    return rules


def match_banner(port: int, banner: str, rules) -> ServiceFingerprint | None:
    """First rule that matches wins."""
    for rule in rules:
        version = rule.match(banner)
        if version:
            return ServiceFingerprint(port, banner, rule.vendor, rule.product, version.lower(),
                                      cpelib.make_cpe(rule.vendor, rule.product, version))
    return None


def _client_context() -> ssl.SSLContext:
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
    ctx.check_hostname = False
    ctx.verify_mode = ssl.CERT_NONE
    with contextlib.suppress(ssl.SSLError):
        ctx.set_ciphers("ALL:@SECLEVEL=0")
    return ctx


def _read_banner(sock, *, http: bool) -> bytes:
    data = b""
    end = b"\r\n\r\n" if http else b"\n"
    while len(data) < MAX_BANNER and end not in data:
        try:
            chunk = sock.recv(4096)
        except (socket.timeout, ConnectionResetError, ssl.SSLError):
            break
        if not chunk:
            break
        data += chunk
    return data


def grab_banner(host: str, port: int, address: tuple, pacer: Pacer) -> str:
    """HEAD for web ports, a passive read elsewhere; TLS first on implicit-TLS ports."""
    http = port in WEB_PORTS
    with pacer.connection(address) as sock:
        conn = sock
        if port in TLS_PORTS:
            try:
                conn = _client_context().wrap_socket(sock, server_hostname=host or None)
            except (ssl.SSLError, OSError) as exc:
                raise ConnectionError(f"TLS handshake failed: {exc}") from exc
        if http:
            conn.sendall(f"HEAD / HTTP/1.0\r\nHost: {host}\r\nUser-Agent: posture-audit\r\n\r\n"
                         .encode("ascii"))
        raw = _read_banner(conn, http=http)
    return raw.decode("latin-1").strip()


@dataclasses.dataclass
class ServiceScan:
    fingerprints: list
    notes: dict          # port -> annotation


def scan_services(host: str, ports, policy: ProbePolicy, *, rules=None, port_map=None,
                  pacer: Pacer | None = None) -> ServiceScan:
    """Fingerprint ``ports`` on ``host``.

    ``port_map`` maps each logical port to the address actually dialled;
    ports missing from it are treated as closed without connecting.
    """
    ports = list(ports)
    if not ports:
        raise ValueError("no ports to fingerprint")
    rules = load_rules() if rules is None else rules
    pacer = pacer or Pacer(policy)
    found, notes = [], {}
    for port in ports:
        if port_map is not None:
            address = port_map.get(port)
            if address is None:
                notes[port] = "closed"
                continue
        else:
            address = (host, port)
        try:
            banner = grab_banner(host, port, tuple(address), pacer)
        except Unreachable:
            notes[port] = "closed"
            continue
        except BudgetExceeded as exc:
            notes[port] = f"skipped: {exc}"
            break
        except (ConnectionError, OSError) as exc:
            notes[port] = f"no banner: {exc}"
            continue
        fp = match_banner(port, banner, rules) if banner else None
        if fp is None:
            notes[port] = "no rule matched" if banner else "empty banner"
        else:
            found.append(fp)
    return ServiceScan(found, notes)


def fingerprint_services(host: str, ports, policy: ProbePolicy, **kw) -> list[ServiceFingerprint]:
    return scan_services(host, ports, policy, **kw).fingerprints
