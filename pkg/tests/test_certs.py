import datetime as dt
import hashlib
import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from posture_audit.certs import validate as v
from posture_audit.certs.fixtures import (FixtureAuthority, FlawSpec, check_spec,
                                          default_authority, flaw_corpus, generate_fixture_chain)
from posture_audit.certs.model import SignatureAlgorithm, load_pem_chain, parse_chain
from posture_audit.certs.validate import (TRUST_BREAKING, ChainIssue, ChainReport, IssueCode,
                                          RevocationData, RevocationStatus, check_hostname,
                                          check_revocation, load_revocations, load_trust_store,
                                          validate_chain)
from posture_audit.errors import DerSyntaxError, EmptyChain, SchemaError, UnsatisfiableSpec

from cert_cases import HOST, corpus_mismatches

C = IssueCode


def make(*codes, depth=None, host=HOST):
    return generate_fixture_chain(FlawSpec.of(*codes, depth=depth), host)


def run(fc, host=HOST, roots=None):
    roots = roots if roots is not None else [default_authority().record]
    return validate_chain(parse_chain(fc.der_chain), host, roots, fc.revocations, at=fc.at)


# --- parsing --------------------------------------------------------------------

def test_parse_three_blob_chain():
    fc = make(depth=3)
    records = parse_chain(fc.der_chain)
    assert len(records) == 3
    assert records[0].subject_alt_names == (HOST,)
    assert records[-1].subject == default_authority().record.subject
    assert [r.der_digest for r in records] == [hashlib.sha256(d).digest() for d in fc.der_chain]
    for r in records:
        assert r.not_before < r.not_after and r.key_bits > 0 and r.serial >= 0


def test_truncated_blob_keeps_prefix():
    ders = make(depth=3).der_chain
    with pytest.raises(DerSyntaxError) as err:
        parse_chain([ders[0], ders[1][:40], ders[2]])
    assert err.value.position == 1
    assert len(err.value.records) == 1


def test_self_signed_single():
    records = parse_chain(make(C.SLF).der_chain)
    assert len(records) == 1 and records[0].subject == records[0].issuer


def test_pem_loader_round_trip():
    fc = make(depth=3)
    assert [r.der for r in load_pem_chain(fc.pem_chain)] == fc.der_chain


# --- validation examples --------------------------------------------------------

def test_sha1_leaf_is_sig_only_and_trusted():
    report = run(make(C.SIG))
    assert report.codes == {C.SIG} and report.trusted
    assert report.chain[0].signature_algorithm is SignatureAlgorithm.SHA1_RSA or \
        report.chain[0].signature_algorithm is SignatureAlgorithm.SHA1_ECDSA


def test_expired_leaf():
    report = run(make(C.NAF))
    assert C.NAF in report.codes and not report.trusted


def test_hostname_mismatch():
    fc = make(host="a.test")
    assert C.HNM in run(fc, host="b.test").codes


def test_untrusted_root():
    report = run(make(C.UCA))
    assert C.UCA in report.codes and not report.trusted


def test_pristine_chain():
    report = run(make())
    assert report.codes == frozenset() and report.trusted
    assert report.trust_anchor == default_authority().record.subject


def test_empty_store_means_uca():
    report = run(make(), roots=[])
    assert report.codes == {C.UCA} and not report.trusted


def test_other_authority_is_untrusted():
    stranger = FixtureAuthority(cn="Another Root")
    report = run(make(), roots=[stranger.record])
    assert C.UCA in report.codes


def test_empty_chain():
    with pytest.raises(EmptyChain):
        validate_chain([], HOST, [])


@pytest.mark.parametrize("pattern,host,ok", [
    ("*.example.gov", "portal.example.gov", True),
    ("*.example.gov", "a.b.example.gov", False),
    ("*.example.gov", "example.gov", False),
    ("Portal.Example.gov.", "portal.example.gov", True),
])
def test_wildcards(pattern, host, ok):
    assert v._hostname_matches(pattern, host) is ok


def test_cn_used_only_without_sans():
    leaf = parse_chain(make().der_chain)[0]
    assert check_hostname(leaf, HOST)
    import dataclasses
    no_san = dataclasses.replace(leaf, subject_alt_names=(), subject_cn=HOST)
    assert check_hostname(no_san, HOST)
    other = dataclasses.replace(leaf, subject_cn="elsewhere.gov")
    assert not check_hostname(other, "elsewhere.gov")


# --- revocation -----------------------------------------------------------------

def test_revocation_statuses():
    leaf = parse_chain(make().der_chain)[0]
    assert check_revocation(leaf, RevocationData()) is RevocationStatus.UNKNOWN
    assert check_revocation(leaf, RevocationData({leaf.issuer_dn_hash: set()})) \
        is RevocationStatus.GOOD
    assert check_revocation(leaf, RevocationData({leaf.issuer_dn_hash: {leaf.serial}})) \
        is RevocationStatus.REVOKED
    assert check_revocation(leaf, RevocationData(blocklist={leaf.spki_digest.hex()})) \
        is RevocationStatus.BLOCKLISTED


def test_revocation_files_round_trip(tmp_path):
    fc = make(C.RVK, C.BLK)
    fc.revocations.write(tmp_path / "crl.csv", tmp_path / "block.txt")
    loaded = load_revocations(tmp_path / "crl.csv", tmp_path / "block.txt")
    assert loaded.crl == fc.revocations.crl and loaded.blocklist == fc.revocations.blocklist


def test_revocation_file_errors(tmp_path):
    (tmp_path / "crl.csv").write_text("issuer,serial\n")
    with pytest.raises(SchemaError):
        load_revocations(tmp_path / "crl.csv")
    (tmp_path / "crl.csv").write_text("issuer_dn_hash,serial_hex\nabc,zz\n")
    with pytest.raises(SchemaError) as err:
        load_revocations(tmp_path / "crl.csv")
    assert err.value.row == 2
    (tmp_path / "b.txt").write_text("# comment\nnothex\n")
    with pytest.raises(SchemaError):
        load_revocations(None, tmp_path / "b.txt")


def test_trust_store_dir_and_bundle(tmp_path):
    auth = default_authority()
    path = auth.write_trust_store(tmp_path / "store")
    (tmp_path / "store" / "copy.crt").write_bytes(auth.pem)
    assert [r.der for r in load_trust_store(tmp_path / "store")] == [auth.record.der]
    assert [r.der for r in load_trust_store(path)] == [auth.record.der]


# --- generator ------------------------------------------------------------------

def test_generator_examples():
    fc = make(C.NAF, depth=2)
    assert fc.expected == {C.NAF} and len(fc.certificates) == 2
    fc = make(C.SIG, C.HNM, depth=3)
    assert fc.expected == {C.SIG, C.HNM} and len(fc.certificates) == 3


@pytest.mark.parametrize("spec", [
    FlawSpec(frozenset({C.SLF}), 3), FlawSpec(frozenset({C.INC}), 2),
    FlawSpec(frozenset({C.NAF, C.NBF}), 2), FlawSpec(frozenset(), 1), FlawSpec(frozenset(), 5),
])
def test_unsatisfiable_specs(spec):
    with pytest.raises(UnsatisfiableSpec):
        generate_fixture_chain(spec)


def test_spec_text_forms():
    spec = FlawSpec.of("NAF", "SIG", depth=3)
    assert FlawSpec.parse(spec.to_text()) == spec
    assert FlawSpec.parse(spec.inline()) == spec
    with pytest.raises(UnsatisfiableSpec):
        FlawSpec.parse("flaws=XYZ")


def test_corpus_shape():
    corpus = flaw_corpus()
    singles = [s for s in corpus if len(s.flaws) == 1]
    pairs = [s for s in corpus if len(s.flaws) == 2]
    assert len(singles) == 10
    assert len(pairs) == 45 - 4
    for spec in corpus:
        check_spec(spec)


def test_oracle_closure():
    checked, problems = corpus_mismatches()
    assert checked == 51
    assert problems == []


# --- properties -----------------------------------------------------------------

def test_check_order_independence():
    rng = random.Random(7)
    for spec in rng.sample(flaw_corpus(), 12):
        fc = generate_fixture_chain(spec, HOST)
        chain = tuple(parse_chain(fc.der_chain))
        checks = [lambda: v._signature_issues(chain, v.CertPolicy()),
                  lambda: v._hostname_issues(chain, HOST, v.CertPolicy()),
                  lambda: v._validity_issues(chain, fc.at),
                  lambda: v._revocation_issues(chain, fc.revocations),
                  lambda: v._key_issues(chain, v.CertPolicy())]
        results = set()
        for order in itertools.islice(itertools.permutations(checks), 0, 120, 17):
            found = set()
            for check in order:
                found.update(check())
            results.add(frozenset(found))
        assert len(results) == 1


def test_time_determinism():
    fc = make(C.WKY, C.RVK)
    a, b = run(fc), run(fc)
    assert a.issues == b.issues and a.trusted == b.trusted and a.to_dict() == b.to_dict()


def test_report_round_trip():
    report = run(make(C.HNM, depth=3))
    again = ChainReport.from_dict(report.to_dict())
    assert again.codes == report.codes and again.trusted == report.trusted


AT = dt.datetime(2023, 1, 1, tzinfo=dt.timezone.utc)


@given(st.sets(st.sampled_from(list(IssueCode))), st.booleans())
def test_trusted_invariant(codes, anchored):
    trusted = v.derive_trusted(codes, anchored)
    issues = frozenset(ChainIssue(c, 0) for c in codes)
    if not codes and not anchored:
        return
    report = ChainReport((), issues, trusted, AT)
    if report.trusted:
        assert not report.codes & TRUST_BREAKING
    if not report.issues:
        assert report.trusted


def test_invariant_rejects_contradiction():
    with pytest.raises(ValueError):
        ChainReport((), frozenset({ChainIssue(C.UCA, 0)}), True, AT)
    with pytest.raises(ValueError):
        ChainReport((), frozenset(), False, AT)
