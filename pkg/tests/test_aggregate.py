import csv
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posture_audit.aggregate import (Income, Region, aggregate,
                                     aggregate_all, emit_reports, load_dataset, load_emitted,
                                     load_reports, write_dataset)
from posture_audit.aggregate.report import DomainPostureReport, ScanStatus
from posture_audit.aggregate.stats import lower_quantile, rank_top_cves
from posture_audit.catalog import CipherCounts
from posture_audit.certs.validate import ChainIssue, ChainReport, IssueCode
from posture_audit.errors import DuplicateDomain, EmptyInput, RegionMismatch, SchemaError
from posture_audit.prober.probe import ProtocolSupportMatrix
from posture_audit.versions import ProtocolVersion as V
from posture_audit.vulns.cpe import make_cpe
from posture_audit.vulns.fingerprint import ServiceFingerprint

from agg_cases import oracle_mismatches, table1_mismatches, table1_reports
from synth import EPOCH, random_report_set, target

HEADER = "domain,port,region,sub_region,income\n"


# --- dataset ---------------------------------------------------------------------

def test_load_dataset_valid(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(HEADER + "a.gov.xx,443,Europe,Northern Europe,High\n"
                 "b.gov.xx,,Africa,Western Africa,Low\n"
                 "c.gov.xx,8443,Asia,Southern Asia,Lower-Middle\n"
                 "d.gov.xx,443,Americas,South America,UpperMiddle\n"
                 "e.gov.xx,443,Oceania,Melanesia,Upper Middle\n")
    targets = load_dataset(p)
    assert len(targets) == 5
    assert targets[1].port == 443 and targets[2].port == 8443
    assert targets[2].income is Income.LowerMiddle
    assert targets[4].income is Income.UpperMiddle


def test_income_middle_rejected(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(HEADER + "a.gov.xx,443,Europe,Northern Europe,middle\n")
    with pytest.raises(SchemaError) as exc:
        load_dataset(p)
    assert exc.value.row == 2


def test_duplicate_domain(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(HEADER + "a.gov.xx,443,Europe,Northern Europe,High\n"
                 "b.gov.xx,443,Europe,Northern Europe,High\n"
                 "A.gov.xx,443,Europe,Northern Europe,High\n")
    with pytest.raises(DuplicateDomain) as exc:
        load_dataset(p)
    assert exc.value.row == 4


def test_region_mismatch(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(HEADER + "a.gov.xx,443,Asia,Northern Europe,High\n")
    with pytest.raises(RegionMismatch) as exc:
        load_dataset(p)
    assert exc.value.row == 2


def test_bad_header_and_fqdn(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("domain,region\nx,Europe\n")
    with pytest.raises(SchemaError):
        load_dataset(p)
    p.write_text(HEADER + "bad_domain!,443,Europe,Northern Europe,High\n")
    with pytest.raises(SchemaError):
        load_dataset(p)


def test_dataset_roundtrip(tmp_path):
    targets = [target(i) for i in range(30)]
    write_dataset(targets, tmp_path / "d.csv")
    assert load_dataset(tmp_path / "d.csv") == targets


def test_geoscheme_has_22_subregions():
    from posture_audit.aggregate import geoscheme
    g = geoscheme()
    assert len(g) == 22
    assert set(g.values()) == set(Region)


# --- simple statistics -------------------------------------------------------------

def _report(i, *, insecure=0, weak=0, codes=(), cves=(), status=ScanStatus.COMPLETE):
    t = target(i)
    matrix = ProtocolSupportMatrix.from_acceptance({V.TLS1_2: (0x002F,)})
    counts = CipherCounts(weak, insecure, frozenset(range(weak)),
                          frozenset(range(50, 50 + insecure)))
    issues = frozenset(ChainIssue(IssueCode(c), 0) for c in codes)
    chain = ChainReport((), issues, not ({"UCA", "INC", "NAF"} & set(codes)), EPOCH)
    exposure = ()
    if cves:
        fp = ServiceFingerprint(22, "b", "acme", "srv", "1.0", make_cpe("acme", "srv", "1.0"))
        exposure = ((fp, tuple(cves)),)
    return DomainPostureReport(t, status, matrix, counts, chain, exposure,
                               {c: "High" for c in cves}, None, EPOCH)


def test_chain_issue_share_example():
    reports = [_report(i, codes=("SIG",) if i < 8 else ()) for i in range(10)]
    assert aggregate(reports).groups["Global"].chain_issue_share == 0.8


def test_insecure_median_example():
    reports = [_report(i, insecure=k) for i, k in enumerate([0, 1, 2, 2, 3])]
    dist = aggregate(reports).groups["Global"].insecure_count_distribution
    assert dist.median == 2 and dist.min == 0 and dist.max == 3


def test_lower_interpolation():
    vals = [1, 2, 3, 4]
    assert [lower_quantile(vals, k) for k in range(5)] == [1, 1, 2, 3, 4]


def test_empty_input():
    with pytest.raises(EmptyInput):
        aggregate([])


def test_unreachable_excluded_from_denominators():
    reports = [_report(0, weak=1), _report(1),
               DomainPostureReport(target(2), ScanStatus.UNREACHABLE, scanned_at=EPOCH)]
    g = aggregate(reports).groups["Global"]
    assert g.n == 3 and g.unreachable == 1 and g.n_tls == 2
    assert g.share_with_weak == 0.5


def test_rank_top_cves_examples():
    reports = [_report(0, cves=("CVE-2020-0001", "CVE-2020-0002")),
               _report(1, cves=("CVE-2020-0001", "CVE-2020-0002")),
               _report(2, cves=("CVE-2020-0001",))]
    rows = rank_top_cves(reports, 5)
    assert [(r.id, r.domains_exposed) for r in rows] == [("CVE-2020-0001", 3),
                                                        ("CVE-2020-0002", 2)]
    tie = [_report(i, cves=("CVE-2021-0009", "CVE-2021-0003")) for i in range(5)]
    assert [r.id for r in rank_top_cves(tie, 5)] == ["CVE-2021-0003", "CVE-2021-0009"]


def test_table2_seeded_top_rank():
    # 252 domains exposed to the top entry, fewer to the others, verified by recount
    reports = []
    for i in range(300):
        cves = []
        if i < 252:
            cves.append("CVE-2020-14145")
        if i < 240:
            cves.append("CVE-2021-41617")
        if 100 <= i < 290:
            cves.append("CVE-2016-20012")
        reports.append(_report(i, cves=tuple(cves)))
    rows = rank_top_cves(reports, 20)
    assert (rows[0].id, rows[0].domains_exposed) == ("CVE-2020-14145", 252)
    assert sum(1 for r in reports if "CVE-2020-14145" in r.cve_ids()) == 252


def test_table1_marginal_identity():
    reports = table1_reports()
    assert len(reports) == 3068
    assert table1_mismatches(reports) == []


@pytest.mark.parametrize("seed", range(100))
def test_oracle_equivalence(seed):
    n = random.Random(seed).randint(1, 200)
    reports, facts = random_report_set(seed, n)
    assert oracle_mismatches(reports, facts, top_n=random.Random(seed).choice([1, 5, 20])) == []


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 60), st.randoms(use_true_random=False))
def test_permutation_invariance(seed, n, rnd):
    reports, _ = random_report_set(seed, n)
    shuffled = list(reports)
    rnd.shuffle(shuffled)
    assert aggregate_all(reports) == aggregate_all(shuffled)


# --- emission ------------------------------------------------------------------------

FIGURE_FILES = ["fig_protocols.csv", "fig_cipher_dist.csv", "fig_chain_issues.csv",
                "fig_vuln_dist.csv", "table_top_cves.csv"]


@pytest.mark.parametrize("seed", range(5))
def test_emit_roundtrip(tmp_path, seed):
    reports, _ = random_report_set(seed, 80)
    stats = aggregate_all(reports, top_n=7)
    emit_reports(stats, reports, tmp_path)
    for name in FIGURE_FILES + ["reports.jsonl", "agg_groups.csv"]:
        assert (tmp_path / name).exists()
    assert load_emitted(tmp_path) == stats
    assert [r.to_dict() for r in load_reports(tmp_path / "reports.jsonl")] == \
        [r.to_dict() for r in reports]


def test_top_cves_row_count(tmp_path):
    reports, facts = random_report_set(3, 50)
    distinct = {c for f in facts for c in f.get("cves", ())}
    for n in (3, 500):
        emit_reports(aggregate(reports, top_n=n), reports, tmp_path / str(n))
        with open(tmp_path / str(n) / "table_top_cves.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == min(n, len(distinct))


def test_emit_empty_writes_nothing(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(EmptyInput):
        emit_reports(aggregate([]), [], out)
    with pytest.raises(EmptyInput):
        emit_reports([], [], out)
    assert not out.exists() or not any(out.iterdir())


def test_fractions_in_unit_interval():
    reports, _ = random_report_set(11, 150)
    for stats in aggregate_all(reports):
        for g in stats.groups.values():
            values = [g.share_with_weak, g.share_with_insecure, g.chain_issue_share,
                      g.share_untrusted, g.share_exposed, *g.protocol_support_share.values(),
                      *g.chain_issue_share_by_code.values(), *g.grade_share.values()]
            assert all(v is None or 0 <= v <= 1 for v in values)
