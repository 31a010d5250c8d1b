"""Fixture-corpus closure shared by the certificate and acceptance tests."""
from posture_audit.certs.fixtures import default_authority, flaw_corpus, generate_fixture_chain
from posture_audit.certs.model import parse_chain
from posture_audit.certs.validate import IssueCode, validate_chain

HOST = "portal.example.gov"
# anything that stops a verifier from reaching a trusted root
UNTRUSTING = {IssueCode.UCA, IssueCode.INC, IssueCode.RVK, IssueCode.BLK, IssueCode.NAF,
              IssueCode.NBF, IssueCode.SLF}


def corpus_results():
    """Yield (spec, report) for every spec of the corpus."""
    authority = default_authority()
    roots = [authority.record]
    for spec in flaw_corpus():
        fc = generate_fixture_chain(spec, HOST, authority=authority)
        report = validate_chain(parse_chain(fc.der_chain), HOST, roots, fc.revocations, at=fc.at)
        yield spec, report


def corpus_mismatches() -> tuple[int, list]:
    checked, problems = 0, []
    for spec, report in corpus_results():
        checked += 1
        if report.codes != spec.flaws:
            extra = sorted(c.value for c in report.codes - spec.flaws)
            missing = sorted(c.value for c in spec.flaws - report.codes)
            problems.append(f"{spec.inline()}: extra={extra} missing={missing}")
        elif report.trusted != (not spec.flaws & UNTRUSTING):
            problems.append(f"{spec.inline()}: trusted={report.trusted}")
    return checked, problems
