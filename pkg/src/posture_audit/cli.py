"""Command-line entry point: ``posture-audit <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import ssl
import sys
import threading
import time
import urllib.parse
from pathlib import Path

from . import datafiles
from .errors import ConfigError, PostureError, SchemaError, UnknownRun
from .vulns.fingerprint import DEFAULT_PORTS

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_INTERNAL = 0, 1, 2, 3
log = logging.getLogger("posture_audit")


# --- shared option handling ---------------------------------------------------

def _ports(text: str) -> tuple:
    try:
        ports = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port list {text!r}") from None
    if not ports or any(not 0 < p < 65536 for p in ports):
        raise argparse.ArgumentTypeError(f"bad port list {text!r}")
    return ports


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--dataset", help="CSV of domain,port,region,sub_region,income")
    g.add_argument("--catalog", help="cipher catalog CSV (default: shipped)")
    g.add_argument("--trust-store", help="directory or bundle of trusted roots")
    g.add_argument("--crl", help="offline CRL CSV (issuer_dn_hash,serial_hex)")
    g.add_argument("--blocklist", help="SPKI SHA-256 deny list, one hex digest per line")
    g.add_argument("--nvd-snapshot", action="append", default=[],
                   help="NVD JSONL snapshot file or directory (repeatable)")
    g.add_argument("--ports", type=_ports, default=DEFAULT_PORTS,
                   help="comma-separated ports to fingerprint")
    g.add_argument("--concurrency", type=int, default=4)
    g.add_argument("--per-host-delay", type=float, default=0.05,
                   help="seconds between connections to one host")
    g.add_argument("--timeout", type=float, default=5.0, help="connect and read timeout")
    g.add_argument("--max-probes", type=int, default=1200, help="connection budget per host")
    g.add_argument("--output", help="output directory (default: $POSTURE_AUDIT_HOME)")
    g.add_argument("--address-map", help="JSON map of domain -> loopback addresses (fleet runs)")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _output_dir(args) -> Path:
    return Path(args.output) if args.output else datafiles.home()


def _trust_store(args) -> str:
    if args.trust_store:
        return args.trust_store
    local = datafiles.home() / "trust"
    if local.is_dir():
        return str(local)
    paths = ssl.get_default_verify_paths()
    for candidate in (paths.cafile, paths.capath):
        if candidate and Path(candidate).exists():
            return candidate
    raise ConfigError("no trust store: pass --trust-store or populate $POSTURE_AUDIT_HOME/trust")


def _snapshots(args) -> tuple:
    if args.nvd_snapshot:
        return tuple(args.nvd_snapshot)
    return (str(datafiles.data_path("nvd_table2.jsonl")),)


def _policy(args):
    from .prober.net import ProbePolicy
    try:
        return ProbePolicy(connect_timeout=args.timeout, read_timeout=args.timeout,
                           per_host_delay=args.per_host_delay,
                           max_probes_per_host=args.max_probes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _endpoint(args, text: str):
    """Resolve ``host[:port]``, honouring --address-map and --address."""
    from .orchestrator import load_address_map
    from .prober.net import Endpoint
    ep = Endpoint.parse(text)
    if getattr(args, "address", None):
        host, _, port = args.address.rpartition(":")
        return Endpoint(ep.host, ep.port, (host, int(port)))
    if args.address_map:
        entry = load_address_map(args.address_map).get(ep.host.lower())
        if entry and ep.port in entry["ports"]:
            return Endpoint(ep.host, ep.port, (entry["host"], entry["ports"][ep.port]))
    return ep


def _port_map(args, host: str):
    if not args.address_map:
        return None
    from .orchestrator import load_address_map
    entry = load_address_map(args.address_map).get(host.lower())
    if entry is None:
        return {}
    return {p: (entry["host"], a) for p, a in entry["ports"].items()}


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


# --- verbs ----------------------------------------------------------------------

def cmd_scan(args) -> int:
    from .orchestrator import ScanConfig, run_scan
    if not args.dataset:
        raise ConfigError("--dataset is required")
    try:
        config = ScanConfig(
            dataset_path=args.dataset, trust_store_dir=_trust_store(args),
            output_dir=str(_output_dir(args)), catalog_path=args.catalog,
            revocation_paths=(args.crl, args.blocklist), nvd_snapshot_paths=_snapshots(args),
            ports=tuple(args.ports), concurrency=args.concurrency,
            per_host_delay=args.per_host_delay, connect_timeout=args.timeout,
            read_timeout=args.timeout, max_probes_per_host=args.max_probes,
            address_map_path=args.address_map)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    run = run_scan(config, run_id=args.run_id, limit=args.limit)
    _print({"run_id": run.run_id, "run_dir": str(run.run_dir), "statuses": run.counts()})
    return run.exit_code


def cmd_resume(args) -> int:
    from .orchestrator import resume_scan
    run = resume_scan(args.run_id, _output_dir(args), limit=args.limit)
    _print({"run_id": run.run_id, "rescanned": run.scanned, "statuses": run.counts()})
    return run.exit_code


def cmd_probe_tls(args) -> int:
    from .catalog import count_weak_insecure, load_catalog
    from .prober.net import Pacer
    from .prober.probe import enumerate_protocols
    catalog = load_catalog(args.catalog)
    policy = _policy(args)
    endpoint = _endpoint(args, args.target)
    matrix = enumerate_protocols(endpoint, catalog, policy, Pacer(policy))
    counts = count_weak_insecure(matrix, catalog, strict=False)
    _print({"endpoint": str(endpoint), "matrix": matrix.to_dict(),
            "weak_count": counts.weak_count, "insecure_count": counts.insecure_count,
            "unknown": [f"0x{c:04X}" for c in sorted(counts.unknown)]})
    return EXIT_OK


def _fetch_chain_records(args, endpoint, catalog, policy, pacer):
    from .certs.model import parse_chain
    from .prober.probe import enumerate_protocols, fetch_certificate_chain
    matrix = enumerate_protocols(endpoint, catalog, policy, pacer, probe_compression=False)
    raw = fetch_certificate_chain(endpoint, matrix, policy, pacer)
    return matrix, parse_chain(raw)


def cmd_analyze_cert(args) -> int:
    from .catalog import load_catalog
    from .certs.model import load_pem_chain
    from .certs.validate import load_revocations, load_trust_store, validate_chain
    from .prober.net import Pacer
    source = Path(args.target)
    if source.is_file():
        chain = load_pem_chain(source.read_bytes())
        hostname = args.hostname or (chain[0].subject_alt_names or (chain[0].subject_cn,))[0]
    else:
        policy = _policy(args)
        endpoint = _endpoint(args, args.target)
        _, chain = _fetch_chain_records(args, endpoint, load_catalog(args.catalog), policy,
                                        Pacer(policy))
        hostname = args.hostname or endpoint.host
    report = validate_chain(chain, hostname, load_trust_store(_trust_store(args)),
                            load_revocations(args.crl, args.blocklist))
    out = report.to_dict()
    out.pop("der_chain", None)
    _print(out)
    return EXIT_OK


def cmd_vuln(args) -> int:
    from .vulns.fingerprint import scan_services
    from .vulns.nvd import load_nvd_snapshot, lookup_cves
    index = load_nvd_snapshot(_snapshots(args))
    policy = _policy(args)
    scan = scan_services(args.host, args.ports, policy, port_map=_port_map(args, args.host))
    services = []
    for fp in scan.fingerprints:
        notes: list = []
        ids = lookup_cves(fp, index, notes)
        services.append({"fingerprint": fp.to_dict(), "notes": notes,
                         "cves": [{"id": c, "base_score": index[c].base_score,
                                   "severity": index[c].severity.value} for c in ids]})
    _print({"host": args.host, "services": services,
            "port_notes": {str(k): v for k, v in scan.notes.items()}})
    return EXIT_OK


def cmd_grade(args) -> int:
    from .catalog import load_catalog
    from .certs.validate import load_revocations, load_trust_store, validate_chain
    from .grading import grade_server
    from .prober.net import Pacer
    catalog = load_catalog(args.catalog)
    policy = _policy(args)
    endpoint = _endpoint(args, args.target)
    pacer = Pacer(policy)
    matrix, chain = _fetch_chain_records(args, endpoint, catalog, policy, pacer)
    report = validate_chain(chain, endpoint.host, load_trust_store(_trust_store(args)),
                            load_revocations(args.crl, args.blocklist))
    grade = grade_server(matrix, report, catalog)
    _print({"endpoint": str(endpoint), **grade.to_dict()})
    return EXIT_OK


def cmd_aggregate(args) -> int:
    from .aggregate import Grouping, aggregate, emit_reports
    from .orchestrator import load_run, read_report_log
    out_root = _output_dir(args)
    load_run(args.run_id, out_root)
    run_dir = out_root / "runs" / args.run_id
    reports = list(read_report_log(run_dir).values())
    names = {"global": Grouping.GLOBAL, "region": Grouping.BY_REGION,
             "sub-region": Grouping.BY_SUB_REGION, "income": Grouping.BY_INCOME}
    groupings = list(names.values()) if args.group_by == "all" else [names[args.group_by]]
    stats = [aggregate(reports, g, top_n=args.top_n) for g in groupings]
    dest = Path(args.dest) if args.dest else run_dir / "aggregate"
    paths = emit_reports(stats, reports, dest)
    _print({"run_id": args.run_id, "reports": len(reports), "written": [str(p) for p in paths]})
    return EXIT_OK


def cmd_ingest_nvd(args) -> int:
    from .vulns.ingest import convert_nvd2, fetch_nvd
    from .vulns.nvd import write_snapshot
    source = args.source
    if source.startswith(("http://", "https://")):
        params = dict(urllib.parse.parse_qsl(urllib.parse.urlparse(source).query))
        records = fetch_nvd(params, api_key=os.environ.get("NVD_API_KEY"))
    else:
        path = Path(source)
        files = sorted(path.glob("*.json")) if path.is_dir() else [path]
        records = []
        for f in files:
            try:
                records.extend(convert_nvd2(json.loads(f.read_text(encoding="utf-8"))))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{f}: not JSON: {exc}") from exc
    write_snapshot(records, args.out)
    _print({"records": len(records), "snapshot": args.out})
    return EXIT_OK


def _fleet_dir(args) -> Path:
    return Path(args.state_dir) if args.state_dir else datafiles.home() / "fleet"


def cmd_fleet_gen(args) -> int:
    from .catalog import load_catalog
    from .fleet.scenarios import random_scenarios, write_scenario_file
    scenarios = random_scenarios(args.seed, args.n, load_catalog(args.catalog),
                                 flag_rate=args.flag_rate)
    write_scenario_file(scenarios, args.out)
    _print({"scenarios": len(scenarios), "file": args.out, "seed": args.seed})
    return EXIT_OK


def cmd_fleet_up(args) -> int:
    from .catalog import load_catalog
    from .fleet import load_scenario_file, spawn_fleet
    state = _fleet_dir(args)
    pidfile = state / "fleet.pid"
    if pidfile.exists():
        raise ConfigError(f"a fleet is already recorded in {state}; run `fleet down` first")
    scenarios = load_scenario_file(args.scenario_file)
    stop = threading.Event()
    for sig in (signal.SIGTERM, signal.SIGINT):
        signal.signal(sig, lambda *_: stop.set())
    with spawn_fleet(scenarios, load_catalog(args.catalog), workdir=state,
                     slow_delay=args.slow_delay) as fleet:
        fleet.write_state(state)
        pidfile.write_text(str(os.getpid()))
        _print({"servers": len(scenarios), "state_dir": str(state),
                "address_map": str(state / "address_map.json"),
                "dataset": str(state / "dataset.csv"), "trust_store": str(fleet.trust_dir),
                "crl": str(fleet.crl_path), "blocklist": str(fleet.blocklist_path)})
        sys.stdout.flush()
        try:
            while not stop.wait(0.5):
                pass
        finally:
            pidfile.unlink(missing_ok=True)
    return EXIT_OK


def cmd_fleet_down(args) -> int:
    pidfile = _fleet_dir(args) / "fleet.pid"
    if not pidfile.exists():
        raise ConfigError(f"no running fleet recorded in {pidfile.parent}")
    pid = int(pidfile.read_text().strip())
    try:
        os.kill(pid, signal.SIGTERM)
    except ProcessLookupError:
        pidfile.unlink(missing_ok=True)
        _print({"stopped": pid, "note": "process was already gone"})
        return EXIT_OK
    deadline = time.monotonic() + 10
    while pidfile.exists() and time.monotonic() < deadline:
        time.sleep(0.1)
    _print({"stopped": pid})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="posture-audit",
                                     description="Non-invasive security posture auditing.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("scan", parents=[common], help="full pipeline over a dataset")
    p.add_argument("--run-id")
    p.add_argument("--limit", type=int, help="stop after this many domains")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("resume", parents=[common], help="finish an interrupted run")
    p.add_argument("run_id")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("probe-tls", parents=[common], help="protocol and cipher support")
    p.add_argument("target", metavar="host:port")
    p.add_argument("--address", help="connect to ip:port instead of resolving the host")
    p.set_defaults(func=cmd_probe_tls)

    p = sub.add_parser("analyze-cert", parents=[common], help="validate a PEM file or live chain")
    p.add_argument("target", metavar="pem|host[:port]")
    p.add_argument("--hostname")
    p.add_argument("--address")
    p.set_defaults(func=cmd_analyze_cert)

    p = sub.add_parser("vuln", parents=[common], help="fingerprint services and match CVEs")
    p.add_argument("host")
    p.set_defaults(func=cmd_vuln)

    p = sub.add_parser("grade", parents=[common], help="server grade for one endpoint")
    p.add_argument("target", metavar="host[:port]")
    p.add_argument("--address")
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("aggregate", parents=[common], help="statistics over a run")
    p.add_argument("run_id")
    p.add_argument("--group-by", default="all",
                   choices=["region", "sub-region", "income", "global", "all"])
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--dest", help="where to write the figure tables")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("ingest-nvd", parents=[common], help="build a local NVD snapshot")
    p.add_argument("source", metavar="feed-url|file")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_ingest_nvd)

    fleet = sub.add_parser("fleet", help="mock server fleet")
    fsub = fleet.add_subparsers(dest="fleet_verb", required=True)
    p = fsub.add_parser("up", parents=[common], help="serve a scenario file until stopped")
    p.add_argument("scenario_file")
    p.add_argument("--state-dir")
    p.add_argument("--slow-delay", type=float, default=0.3)
    p.set_defaults(func=cmd_fleet_up)
    p = fsub.add_parser("down", parents=[common], help="stop the fleet started by `fleet up`")
    p.add_argument("--state-dir")
    p.set_defaults(func=cmd_fleet_down)
    p = fsub.add_parser("gen", parents=[common], help="write seeded random scenarios")
    p.add_argument("--seed", type=int, default=20230101)
    p.add_argument("-n", type=int, default=50)
    p.add_argument("--flag-rate", type=float, default=0.0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_fleet_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2) if hasattr(args, "verbose") \
        else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, UnknownRun, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PostureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
