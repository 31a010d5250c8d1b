"""Server scenarios: the text format, validation, seeded generation and ground truth."""
from __future__ import annotations

import dataclasses
import enum
import json
import random
from pathlib import Path

from ..catalog import CipherCatalog, Classification
from ..certs.fixtures import FlawSpec, check_spec, flaw_corpus
from ..errors import ScenarioInvalid, UnsatisfiableSpec
from ..versions import ALL_VERSIONS, ProtocolVersion

V = ProtocolVersion
HTTP_PORTS = frozenset({80, 8080})
DOMAIN_SUFFIX = "fleet.test"


class Flag(enum.Enum):
    SLOW = "SlowResponder"
    CLOSE_ON_HELLO = "CloseOnHello"
    MALFORMED = "MalformedServerHello"
    DEFLATE = "Deflate"


@dataclasses.dataclass
class ScenarioExpectation:
    accepted: dict            # ProtocolVersion -> frozenset of code points
    weak: frozenset
    insecure: frozenset
    issues: frozenset | None  # IssueCode set; None when the chain is an arbitrary PEM
    fingerprints: dict        # port -> cpe
    cves: frozenset | None    # None when no snapshot was supplied
    compression: bool | None


@dataclasses.dataclass
class ServerScenario:
    id: str
    version_config: dict                      # ProtocolVersion -> tuple of code points
    chain: FlawSpec | Path
    banners: dict = dataclasses.field(default_factory=dict)   # port -> banner text
    flags: frozenset = frozenset()
    domain: str | None = None
    expected: ScenarioExpectation | None = dataclasses.field(default=None, compare=False)

    def __post_init__(self):
        if self.domain is None:
            self.domain = f"{self.id}.{DOMAIN_SUFFIX}"

    def validate(self, catalog: CipherCatalog) -> None:
        if not self.id or any(ch.isspace() for ch in self.id):
            raise ScenarioInvalid(f"bad scenario id {self.id!r}")
        for version, codes in self.version_config.items():
            if not codes:
                raise ScenarioInvalid(f"{self.id}: {version.name} listed with no ciphers")
            bad = [c for c in codes if not catalog.valid_for(c, version)]
            if bad:
                raise ScenarioInvalid(f"{self.id}: {version.name} cannot carry "
                                      + ", ".join(f"0x{c:04X}" for c in bad))
        if isinstance(self.chain, FlawSpec):
            try:
                check_spec(self.chain)
            except UnsatisfiableSpec as exc:
                raise ScenarioInvalid(f"{self.id}: {exc}") from exc
        for port in self.banners:
            if not 0 < port < 65536 or port == 443:
                raise ScenarioInvalid(f"{self.id}: banner port {port} not allowed")

    # --- text format ---------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"id={self.id}"]
        if self.domain != f"{self.id}.{DOMAIN_SUFFIX}":
            lines.append(f"domain={self.domain}")
        versions = ";".join(
            f"{v.name}:" + "+".join(_fmt_code(c) for c in self.version_config[v])
            for v in ALL_VERSIONS if v in self.version_config)
        lines.append(f"versions={versions}")
        if isinstance(self.chain, FlawSpec):
            lines.append(f"chain={self.chain.inline()}")
        else:
            lines.append(f"chain=pem:{self.chain}")
        for port in sorted(self.banners):
            lines.append(f"banner.{port}={self.banners[port]}")
        if self.flags:
            lines.append("flags=" + ",".join(sorted(f.value for f in self.flags)))
        return "\n".join(lines) + "\n"


def _fmt_code(code: int) -> str:
    return f"0x{code:06X}" if code > 0xFFFF else f"0x{code:04X}"


def _parse_block(block: str, line0: int) -> ServerScenario:
    fields: dict = {}
    banners: dict = {}
    for offset, line in enumerate(block.splitlines()):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioInvalid(f"line {line0 + offset}: expected key=value")
        key = key.strip()
        if key.startswith("banner."):
            try:
                banners[int(key[len("banner."):])] = value
            except ValueError as exc:
                raise ScenarioInvalid(f"line {line0 + offset}: bad banner port") from exc
        else:
            fields[key] = value.strip()
    if "id" not in fields or "versions" not in fields or "chain" not in fields:
        raise ScenarioInvalid(f"block at line {line0}: id, versions and chain are required")
    config = {}
    try:
        for part in filter(None, fields["versions"].split(";")):
            name, _, codes = part.partition(":")
            config[ProtocolVersion[name.strip()]] = tuple(int(c, 16) for c in codes.split("+") if c)
    except (KeyError, ValueError) as exc:
        raise ScenarioInvalid(f"block at line {line0}: bad versions field ({exc})") from exc
    chain_text = fields["chain"]
    try:
        chain = Path(chain_text[4:]) if chain_text.startswith("pem:") else FlawSpec.parse(chain_text)
    except (UnsatisfiableSpec, ValueError) as exc:
        raise ScenarioInvalid(f"block at line {line0}: bad chain field ({exc})") from exc
    try:
        flags = frozenset(Flag(f.strip()) for f in fields.get("flags", "").split(",") if f.strip())
    except ValueError as exc:
        raise ScenarioInvalid(f"block at line {line0}: {exc}") from exc
    return ServerScenario(fields["id"], config, chain, banners, flags, fields.get("domain"))


def parse_scenarios(text: str) -> list[ServerScenario]:
    scenarios, block, start = [], [], 1
    for number, line in enumerate(text.splitlines() + [""], start=1):
        if line.strip():
            if not block:
                start = number
            block.append(line)
        elif block:
            scenarios.append(_parse_block("\n".join(block), start))
            block = []
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ScenarioInvalid("duplicate scenario ids")
    return scenarios


def format_scenarios(scenarios) -> str:
    return "\n".join(s.to_text() for s in scenarios)


def load_scenario_file(path) -> list[ServerScenario]:
    return parse_scenarios(Path(path).read_text(encoding="utf-8"))


def write_scenario_file(scenarios, path) -> None:
    Path(path).write_text(format_scenarios(scenarios), encoding="utf-8")


# --- ground truth -------------------------------------------------------------

def banner_text(port: int, banner: str) -> str:
    """What the fingerprinter reads back from a banner port."""
    if port in HTTP_PORTS:
        return (f"HTTP/1.1 200 OK\r\nServer: {banner}\r\nContent-Length: 0\r\n"
                f"Connection: close").strip()
    return banner.strip()


def _numeric(version: str) -> tuple:
    parts = [int(p) for p in version.split(".")]
    while parts and parts[-1] == 0:
        parts.pop()
    return tuple(parts)


def _cmp(a: str, b: str) -> int:
    x, y = _numeric(a), _numeric(b)
    n = max(len(x), len(y))
    x += (0,) * (n - len(x))
    y += (0,) * (n - len(y))
    return (x > y) - (x < y)


def brute_force_cves(cpe: str, raw_records) -> frozenset:
    """Linear scan over raw snapshot dicts; deliberately independent of the index code."""
    parts = cpe.split(":")
    vendor, product, version = parts[3], parts[4], parts[5]
    hits = set()
    for rec in raw_records:
        for m in rec["matches"]:
            p = m["cpe_prefix"].split(":")
            if p[3] != vendor or p[4] != product:
                continue
            if len(p) > 5 and p[5] not in ("*", "-", "") and _cmp(version, p[5]) != 0:
                continue
            ok = True
            if m.get("ver_start_incl") and _cmp(version, m["ver_start_incl"]) < 0:
                ok = False
            if m.get("ver_start_excl") and _cmp(version, m["ver_start_excl"]) <= 0:
                ok = False
            if m.get("ver_end_incl") and _cmp(version, m["ver_end_incl"]) > 0:
                ok = False
            if m.get("ver_end_excl") and _cmp(version, m["ver_end_excl"]) >= 0:
                ok = False
            if ok:
                hits.add(rec["id"])
                break
    return frozenset(hits)


def read_raw_snapshot(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def compute_expectation(scenario: ServerScenario, catalog: CipherCatalog, *, rules=None,
                        raw_snapshot=None) -> ScenarioExpectation:
    from ..vulns.fingerprint import load_rules, match_banner

    dead = scenario.flags & {Flag.CLOSE_ON_HELLO, Flag.MALFORMED}
    accepted = {v: frozenset() if dead else frozenset(scenario.version_config.get(v, ()))
                for v in ALL_VERSIONS}
    union = frozenset().union(*accepted.values())
    weak = frozenset(c for c in union if catalog[c].classification is Classification.Weak)
    insecure = frozenset(c for c in union if catalog[c].classification is Classification.Insecure)
    if isinstance(scenario.chain, FlawSpec) and not dead:
        issues = frozenset(scenario.chain.flaws)
    else:
        issues = None
    rules = load_rules() if rules is None else rules
    fingerprints = {}
    for port, banner in scenario.banners.items():
        fp = match_banner(port, banner_text(port, banner), rules)
        if fp is not None:
            fingerprints[port] = fp.cpe
    cves = None
    if raw_snapshot is not None:
        cves = frozenset().union(*(brute_force_cves(c, raw_snapshot) for c in fingerprints.values()))
    plaintext = [v for v in (V.TLS1_2, V.TLS1_1, V.TLS1_0, V.SSL3) if accepted[v]]
    compression = (Flag.DEFLATE in scenario.flags) if plaintext else None
    return ScenarioExpectation(accepted, weak, insecure, issues, fingerprints, cves, compression)


# --- seeded generation -----------------------------------------------------------

# (vendor, product) -> (ports, banner template, versions)
BANNER_CHOICES = {
    ("openbsd", "openssh"): ((22,), "SSH-2.0-OpenSSH_{v}",
                             ("5.3", "5.8", "6.6", "7.2", "7.4", "7.6", "7.9", "8.0", "8.2",
                              "8.4", "8.7", "8.9", "9.3")),
    ("apache", "http_server"): ((80, 8080), "Apache/{v} (Unix)",
                                ("2.2.34", "2.4.6", "2.4.18", "2.4.29", "2.4.38", "2.4.41",
                                 "2.4.46", "2.4.48", "2.4.51", "2.4.52", "2.4.53", "2.4.54",
                                 "2.4.57", "2.4.58")),
    ("f5", "nginx"): ((80, 8080), "nginx/{v}", ("1.14.2", "1.18.0", "1.20.1", "1.22.1", "1.24.0")),
    ("proftpd", "proftpd"): ((21,), "220 ProFTPD {v} Server ready.", ("1.3.5", "1.3.6", "1.3.7")),
    ("exim", "exim"): ((25,), "220 mail.example ESMTP Exim {v} ready", ("4.92", "4.94", "4.96")),
}

VERSION_PROBABILITY = {V.SSL2: 0.05, V.SSL3: 0.15, V.TLS1_0: 0.45, V.TLS1_1: 0.4,
                       V.TLS1_2: 0.95, V.TLS1_3: 0.6}


def _sample_versions(rng: random.Random) -> list[ProtocolVersion]:
    chosen = [v for v in ALL_VERSIONS if rng.random() < VERSION_PROBABILITY[v]]
    classic = [v for v in chosen if v not in (V.SSL2, V.TLS1_3)]
    if V.SSL2 in chosen and not classic:
        chosen.append(V.TLS1_2)     # SSLv2 alone yields only a leaf; keep a full-chain path
    if not chosen:
        chosen = [V.TLS1_2]
    return sorted(set(chosen))


def _sample_chain(rng: random.Random) -> FlawSpec:
    if rng.random() < 0.3:
        return FlawSpec.of(depth=rng.choice((2, 3)))
    spec = rng.choice(flaw_corpus())
    flaws = spec.flaws
    from ..certs.validate import IssueCode
    if IssueCode.SLF in flaws:
        return spec
    low = 3 if IssueCode.INC in flaws else 2
    return FlawSpec(flaws, rng.randint(low, 4))


def _sample_banners(rng: random.Random) -> dict:
    banners: dict = {}
    for key in rng.sample(sorted(BANNER_CHOICES), rng.randint(0, 3)):
        ports, template, versions = BANNER_CHOICES[key]
        free = [p for p in ports if p not in banners]
        if free:
            banners[rng.choice(free)] = template.format(v=rng.choice(versions))
    return banners


def random_scenarios(seed: int, n: int, catalog: CipherCatalog, *, raw_snapshot=None,
                     rules=None, max_ciphers_per_version: int = 12,
                     flag_rate: float = 0.0) -> list[ServerScenario]:
    """Deterministic scenarios for ``seed``, each with its expectation attached."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    out = []
    for i in range(n):
        config = {}
        for version in _sample_versions(rng):
            family = catalog.for_version(version)
            k = rng.randint(1, min(max_ciphers_per_version, len(family)))
            config[version] = tuple(sorted(rng.sample(family, k)))
        flags = frozenset()
        if flag_rate and rng.random() < flag_rate:
            flags = frozenset({rng.choice(list(Flag))})
        scenario = ServerScenario(f"s{seed % 10000:04d}n{i:03d}", config, _sample_chain(rng),
                                  _sample_banners(rng), flags)
        scenario.validate(catalog)
        scenario.expected = compute_expectation(scenario, catalog, rules=rules,
                                                raw_snapshot=raw_snapshot)
        out.append(scenario)
    return out
