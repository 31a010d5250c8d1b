"""Scan scheduling, persistence and resumption."""
from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .aggregate.dataset import ScanTarget, load_dataset
from .aggregate.report import DomainPostureReport, ScanStatus
from .catalog import count_weak_insecure, load_catalog
from .certs.model import parse_chain
from .certs.validate import RevocationData, load_revocations, load_trust_store, validate_chain
from .errors import ConfigError, PostureError, SchemaError, UnknownRun, Unreachable
from .grading import grade_server, load_scoring
from .prober.net import Endpoint, Pacer, ProbePolicy
from .prober.probe import enumerate_protocols, fetch_certificate_chain
from .vulns.fingerprint import DEFAULT_PORTS, load_rules, scan_services
from .vulns.nvd import NvdIndex, load_nvd_snapshot, lookup_cves

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
REPORT_LOG = "reports.jsonl"


@dataclasses.dataclass(frozen=True)
class ScanConfig:
    dataset_path: str
    trust_store_dir: str
    output_dir: str
    catalog_path: str | None = None
    revocation_paths: tuple = ()          # (crl_csv, blocklist) either may be None
    nvd_snapshot_paths: tuple = ()
    ports: tuple = DEFAULT_PORTS
    concurrency: int = 4
    per_host_delay: float = 0.05
    connect_timeout: float = 5.0
    read_timeout: float = 5.0
    max_probes_per_host: int = 1200
    max_probes_per_version: int = 400
    retries: int = 1
    address_map_path: str | None = None
    scoring_path: str | None = None
    rules_path: str | None = None

    def __post_init__(self):
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.per_host_delay < 0:
            raise ConfigError("per_host_delay must be >= 0")
        if self.max_probes_per_host < 1:
            raise ConfigError("max_probes_per_host must be >= 1")
        if not self.ports:
            raise ConfigError("at least one port is required")

    def policy(self) -> ProbePolicy:
        return ProbePolicy(connect_timeout=self.connect_timeout, read_timeout=self.read_timeout,
                           retries=self.retries, per_host_delay=self.per_host_delay,
                           max_probes_per_version=self.max_probes_per_version,
                           max_probes_per_host=self.max_probes_per_host)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["revocation_paths"] = list(self.revocation_paths)
        d["nvd_snapshot_paths"] = list(self.nvd_snapshot_paths)
        d["ports"] = list(self.ports)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScanConfig":
        d = dict(d)
        for key in ("revocation_paths", "nvd_snapshot_paths", "ports"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclasses.dataclass
class ScanRun:
    run_id: str
    run_dir: Path
    started_at: dt.datetime
    finished_at: dt.datetime | None
    config_digest: str
    statuses: dict                       # domain -> ScanStatus
    scanned: int = 0                     # domains actually scanned by this invocation
    max_in_flight: int = 0

    @property
    def exit_code(self) -> int:
        return 0 if all(s is ScanStatus.COMPLETE for s in self.statuses.values()) else 2

    def counts(self) -> dict:
        out: dict = {}
        for s in self.statuses.values():
            out[s.value] = out.get(s.value, 0) + 1
        return out


@dataclasses.dataclass
class ScanContext:
    """Everything loaded during pre-flight; immutable while the scan runs."""
    config: ScanConfig
    targets: list
    catalog: object
    trust_store: list
    revocations: RevocationData
    index: NvdIndex
    rules: list
    scoring: object
    address_map: dict | None


def load_address_map(path) -> dict:
    """``{domain: {"host": ip, "ports": {"443": actual_port, ...}}}``."""
    raw = json.loads(Path(path).read_text())
    out = {}
    for domain, entry in raw.items():
        out[domain.lower()] = {"host": entry["host"],
                               "ports": {int(p): int(a) for p, a in entry["ports"].items()}}
    return out


def preflight(config: ScanConfig) -> ScanContext:
    """Load every referenced file before any network activity."""
    try:
        targets = load_dataset(config.dataset_path)
        catalog = load_catalog(config.catalog_path)
        trust = load_trust_store(config.trust_store_dir)
        if not trust:
            raise ConfigError(f"trust store {config.trust_store_dir} holds no certificates")
        crl, blocklist = (tuple(config.revocation_paths) + (None, None))[:2]
        revocations = load_revocations(crl, blocklist)
        index = load_nvd_snapshot(config.nvd_snapshot_paths) if config.nvd_snapshot_paths \
            else NvdIndex()
        rules = load_rules(config.rules_path)
        scoring = load_scoring(config.scoring_path)
        amap = load_address_map(config.address_map_path) if config.address_map_path else None
    except ConfigError:
        raise
    except (OSError, SchemaError, PostureError, ValueError, KeyError) as exc:
        raise ConfigError(f"pre-flight failed: {exc}") from exc
    return ScanContext(config, targets, catalog, trust, revocations, index, rules, scoring, amap)


def _endpoint_and_ports(target: ScanTarget, ctx: ScanContext):
    amap = ctx.address_map
    if amap is None:
        return Endpoint(target.domain, target.port), None
    entry = amap.get(target.domain)
    if entry is None:
        return None, {}
    ports = {p: (entry["host"], a) for p, a in entry["ports"].items()}
    tls_addr = ports.get(target.port)
    endpoint = Endpoint(target.domain, target.port, tls_addr) if tls_addr else None
    return endpoint, ports


def scan_domain(target: ScanTarget, ctx: ScanContext) -> DomainPostureReport:
    """All three dimensions for one target, strictly sequential, one shared pacer."""
    cfg = ctx.config
    policy = cfg.policy()
    pacer = Pacer(policy)
    errors: dict = {}
    endpoint, port_map = _endpoint_and_ports(target, ctx)
    matrix = counts = chain_report = grade = None
    tls_unreachable = False

    # dimension 1: protocol and cipher support
    if endpoint is None:
        tls_unreachable = True
        errors["tls"] = "unreachable: port closed"
    else:
        try:
            matrix = enumerate_protocols(endpoint, ctx.catalog, policy, pacer)
            counts = count_weak_insecure(matrix, ctx.catalog, strict=False)
            if matrix.errors:
                errors["tls"] = "; ".join(f"{v.name}: {e}" for v, e in matrix.errors.items())
        except Unreachable as exc:
            tls_unreachable = True
            errors["tls"] = f"unreachable: {exc}"
        except PostureError as exc:
            errors["tls"] = str(exc)

    # dimension 2: certificate chain
    if matrix is not None and matrix.supported_versions():
        try:
            raw = fetch_certificate_chain(endpoint, matrix, policy, pacer)
            chain_report = validate_chain(parse_chain(raw), target.domain, ctx.trust_store,
                                          ctx.revocations, at=dt.datetime.now(dt.timezone.utc))
        except (PostureError, OSError) as exc:
            errors["cert"] = str(exc)

    # dimension 3: exposed services and known vulnerabilities
    exposure = None
    severity: dict = {}
    all_closed = False
    try:
        scan = scan_services(target.domain, cfg.ports, policy, rules=ctx.rules,
                             port_map=port_map, pacer=pacer)
        entries = []
        for fp in scan.fingerprints:
            ids = tuple(lookup_cves(fp, ctx.index))
            for cve in ids:
                severity[cve] = ctx.index[cve].severity.value
            entries.append((fp, ids))
        exposure = tuple(entries)
        all_closed = not scan.fingerprints and all(n == "closed" for n in scan.notes.values())
        skipped = {p: n for p, n in scan.notes.items() if n.startswith("skipped")}
        if skipped:
            errors["vuln"] = "; ".join(f"{p}: {n}" for p, n in skipped.items())
    except PostureError as exc:
        errors["vuln"] = str(exc)

    if matrix is not None and matrix.supported_versions() and counts is not None \
            and not counts.unknown:
        grade = grade_server(matrix, chain_report, ctx.catalog, ctx.scoring)

    if tls_unreachable and all_closed:
        status = ScanStatus.UNREACHABLE
        exposure = None
    elif errors:
        status = ScanStatus.PARTIAL
    else:
        status = ScanStatus.COMPLETE
    return DomainPostureReport(target, status, matrix, counts, chain_report, exposure, severity,
                               grade, dt.datetime.now(dt.timezone.utc), errors)


class _ReportWriter:
    """Single appender for the run's report log."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, report: DomainPostureReport) -> None:
        line = json.dumps(report.to_dict(), sort_keys=True) + "\n"
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()


def _write_manifest(run: ScanRun, config: ScanConfig) -> None:
    data = {
        "run_id": run.run_id,
        "started_at": run.started_at.isoformat(),
        "finished_at": run.finished_at.isoformat() if run.finished_at else None,
        "config_digest": run.config_digest,
        "config": config.to_dict(),
        "statuses": {d: s.value for d, s in sorted(run.statuses.items())},
    }
    tmp = run.run_dir / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(data, indent=2))
    tmp.replace(run.run_dir / MANIFEST)


def read_report_log(run_dir: Path) -> dict:
    """Latest report per domain from the append-only log; a torn last line is ignored."""
    latest = {}
    path = Path(run_dir) / REPORT_LOG
    if not path.exists():
        return latest
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            report = DomainPostureReport.from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            log.warning("ignoring unreadable report line: %s", exc)
            continue
        latest[report.domain] = report
    return latest


def _execute(run: ScanRun, ctx: ScanContext, todo: list, limit: int | None) -> None:
    writer = _ReportWriter(run.run_dir / REPORT_LOG)
    if limit is not None:
        todo = todo[:limit]
    lock = threading.Lock()
    in_flight = 0

    def work(target):
        nonlocal in_flight
        with lock:
            in_flight += 1
            run.max_in_flight = max(run.max_in_flight, in_flight)
        try:
            try:
                report = scan_domain(target, ctx)
            except Exception as exc:   # isolation: one domain never aborts the run
                log.exception("%s: scan failed", target.domain)
                report = DomainPostureReport(target, ScanStatus.PARTIAL,
                                             scanned_at=dt.datetime.now(dt.timezone.utc),
                                             errors={"internal": repr(exc)})
            writer.append(report)
            with lock:
                run.statuses[target.domain] = report.status
                run.scanned += 1
        finally:
            with lock:
                in_flight -= 1

    with ThreadPoolExecutor(max_workers=ctx.config.concurrency,
                            thread_name_prefix="scan") as pool:
        list(pool.map(work, todo))


def run_scan(config: ScanConfig, *, run_id: str | None = None,
             limit: int | None = None) -> ScanRun:
    """Scan every dataset domain.  ``limit`` stops after that many (simulating an interruption)."""
    ctx = preflight(config)
    run_id = run_id or dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ-") \
        + uuid.uuid4().hex[:6]
    run_dir = Path(config.output_dir) / "runs" / run_id
    if (run_dir / MANIFEST).exists():
        raise ConfigError(f"run {run_id} already exists; use resume")
    run_dir.mkdir(parents=True, exist_ok=True)
    run = ScanRun(run_id, run_dir, dt.datetime.now(dt.timezone.utc), None, config.digest(),
                  {t.domain: ScanStatus.SKIPPED for t in ctx.targets})
    _write_manifest(run, config)
    try:
        _execute(run, ctx, list(ctx.targets), limit)
    finally:
        run.finished_at = dt.datetime.now(dt.timezone.utc)
        _write_manifest(run, config)
    return run


def load_run(run_id: str, output_dir) -> tuple[ScanConfig, dict]:
    run_dir = Path(output_dir) / "runs" / run_id
    manifest = run_dir / MANIFEST
    if not manifest.exists():
        raise UnknownRun(f"no run {run_id!r} under {output_dir}")
    data = json.loads(manifest.read_text())
    return ScanConfig.from_dict(data["config"]), data


def resume_scan(run_id: str, output_dir, *, limit: int | None = None) -> ScanRun:
    """Re-scan every domain of ``run_id`` that is not yet Complete."""
    config, data = load_run(run_id, output_dir)
    ctx = preflight(config)
    run_dir = Path(output_dir) / "runs" / run_id
    latest = read_report_log(run_dir)
    statuses = {t.domain: latest[t.domain].status if t.domain in latest else ScanStatus.SKIPPED
                for t in ctx.targets}
    run = ScanRun(run_id, run_dir, dt.datetime.fromisoformat(data["started_at"]), None,
                  data["config_digest"], statuses)
    todo = [t for t in ctx.targets if statuses[t.domain] is not ScanStatus.COMPLETE]
    try:
        if todo:
            _execute(run, ctx, todo, limit)
    finally:
        run.finished_at = dt.datetime.now(dt.timezone.utc)
        _write_manifest(run, config)
    return run
