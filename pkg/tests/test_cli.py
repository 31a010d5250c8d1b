import json
import socket
from pathlib import Path

import pytest

from posture_audit.certs.fixtures import FlawSpec
from posture_audit.cli import main
from posture_audit.fleet import ServerScenario, load_scenario_file
from posture_audit.versions import ProtocolVersion as V

SERVER = ServerScenario("web", {V.TLS1_2: (0x002F, 0xC02F), V.TLS1_0: (0x000A,)}, FlawSpec.of(),
                        banners={22: "SSH-2.0-OpenSSH_7.4", 80: "Apache/2.4.52 (Unix)"})


def output(capsys):
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def live(fleet_of, tmp_path):
    fleet = fleet_of([SERVER])
    amap = fleet.write_state(tmp_path / "state", extra_domains=["ghost.example.gov"])
    common = ["--trust-store", str(fleet.trust_dir), "--crl", str(fleet.crl_path),
              "--blocklist", str(fleet.blocklist_path), "--address-map", str(amap),
              "--per-host-delay", "0.005", "--timeout", "1", "--ports", "21,22,80,443",
              "--output", str(tmp_path / "out")]
    return fleet, common, tmp_path


def test_fleet_gen(tmp_path, capsys):
    out = tmp_path / "s.txt"
    assert main(["fleet", "gen", "--seed", "3", "-n", "5", "-o", str(out)]) == 0
    assert output(capsys)["scenarios"] == 5
    assert len(load_scenario_file(out)) == 5


def test_scan_resume_aggregate(live, capsys):
    fleet, common, tmp_path = live
    dataset = str(tmp_path / "state" / "dataset.csv")
    code = main(["scan", "--dataset", dataset, "--run-id", "cli", "--limit", "1", *common])
    assert code == 2
    assert output(capsys)["statuses"] == {"Complete": 1, "Skipped": 1}
    code = main(["resume", "cli", *common])
    assert code == 2                      # the ghost domain is Unreachable
    result = output(capsys)
    assert result["rescanned"] == 1
    assert result["statuses"] == {"Complete": 1, "Unreachable": 1}
    dest = tmp_path / "figs"
    assert main(["aggregate", "cli", "--dest", str(dest), *common]) == 0
    result = output(capsys)
    assert result["reports"] == 2 and result["written"]
    assert all(Path(p).exists() for p in result["written"])


def test_scan_all_complete_exits_zero(fleet_of, tmp_path, capsys):
    fleet = fleet_of([SERVER])
    amap = fleet.write_state(tmp_path / "state")
    code = main(["scan", "--dataset", str(tmp_path / "state" / "dataset.csv"),
                 "--trust-store", str(fleet.trust_dir), "--address-map", str(amap),
                 "--per-host-delay", "0", "--timeout", "1", "--ports", "22,443",
                 "--output", str(tmp_path / "out")])
    assert code == 0
    assert output(capsys)["statuses"] == {"Complete": 1}


def test_probe_tls(live, capsys):
    fleet, common, _ = live
    assert main(["probe-tls", f"{SERVER.domain}:443", *common]) == 0
    result = output(capsys)
    assert result["weak_count"] == 2                # 3DES and RSA-CBC
    assert result["insecure_count"] == 0
    supported = {v for v, s in result["matrix"]["versions"].items() if s["supported"]}
    assert supported == {"TLS1_0", "TLS1_2"}
    assert result["matrix"]["versions"]["TLS1_2"]["accepted_ciphers"] == ["0x002F", "0xC02F"]


def test_probe_tls_with_explicit_address(live, capsys):
    fleet, common, _ = live
    port = fleet.address_map()[SERVER.domain]["ports"]["443"]
    args = [a for a in common]
    i = args.index("--address-map")
    del args[i:i + 2]
    assert main(["probe-tls", f"{SERVER.domain}:443", "--address", f"127.0.0.1:{port}",
                 *args]) == 0
    assert output(capsys)["weak_count"] == 2


def test_analyze_cert_live_and_file(live, capsys):
    fleet, common, tmp_path = live
    assert main(["analyze-cert", SERVER.domain, *common]) == 0
    live_report = output(capsys)
    assert live_report["trusted"] is True and live_report["issues"] == []
    pem = fleet.workdir / f"{SERVER.id}.chain.pem"
    assert main(["analyze-cert", str(pem), "--hostname", SERVER.domain, *common]) == 0
    assert output(capsys)["trusted"] is True


def test_grade(live, capsys):
    fleet, common, _ = live
    assert main(["grade", SERVER.domain, *common]) == 0
    result = output(capsys)
    # TLS1.0 (90), RSA (80), 3DES (20)
    assert result["numeric_score"] == pytest.approx(59.0)
    assert result["letter"] == "C"


def test_vuln(live, capsys):
    fleet, common, _ = live
    assert main(["vuln", SERVER.domain, *common]) == 0
    result = output(capsys)
    by_port = {s["fingerprint"]["port"]: s for s in result["services"]}
    assert set(by_port) == {22, 80}
    assert "CVE-2022-22720" in {c["id"] for c in by_port[80]["cves"]}
    assert result["port_notes"]["21"] == "closed"


def test_ingest_nvd_file(tmp_path, capsys):
    doc = {"vulnerabilities": [{"cve": {
        "id": "CVE-2022-31813", "published": "2022-06-09T17:15:09.000",
        "metrics": {"cvssMetricV31": [{"cvssData": {"baseScore": 9.8,
                                                     "baseSeverity": "CRITICAL"}}]},
        "configurations": [{"nodes": [{"cpeMatch": [{
            "vulnerable": True, "criteria": "cpe:2.3:a:apache:http_server:*:*:*:*:*:*:*:*",
            "versionEndIncluding": "2.4.53"}]}]}]}}]}
    src = tmp_path / "feed.json"
    src.write_text(json.dumps(doc))
    snap = tmp_path / "snap.jsonl"
    assert main(["ingest-nvd", str(src), "-o", str(snap)]) == 0
    assert output(capsys)["records"] == 1
    assert len(snap.read_text().splitlines()) == 1
    src.write_text("not json")
    assert main(["ingest-nvd", str(src), "-o", str(snap)]) == 1


def test_config_errors_exit_one(tmp_path, capsys):
    assert main(["scan", "--output", str(tmp_path), "--trust-store", str(tmp_path)]) == 1
    assert main(["resume", "missing", "--output", str(tmp_path)]) == 1
    assert main(["aggregate", "missing", "--output", str(tmp_path)]) == 1
    assert main(["fleet", "down", "--state-dir", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_bad_arguments_exit_two():
    with pytest.raises(SystemExit) as err:
        main(["scan", "--ports", "0,99999"])
    assert err.value.code == 2


def test_unreachable_probe_exits_three(tmp_path, capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    code = main(["probe-tls", "nowhere.test:443", "--address", f"127.0.0.1:{port}",
                 "--timeout", "0.5", "--per-host-delay", "0"])
    assert code == 3
