from .model import (CertificateRecord, KeyAlgorithm, SignatureAlgorithm, load_pem_chain,
                    name_hash, parse_certificate, parse_chain, record_from_x509,
                    verify_signature)
from .validate import (TRUST_BREAKING, CertPolicy, ChainIssue, ChainReport, IssueCode,
                       RevocationData, RevocationStatus, check_hostname, check_revocation,
                       load_revocations, load_trust_store, validate_chain)
from .fixtures import (FixtureAuthority, FixtureChain, FlawSpec, check_spec, default_authority,
                       flaw_corpus, generate_fixture_chain)

__all__ = [
    "CertificateRecord", "KeyAlgorithm", "SignatureAlgorithm", "load_pem_chain", "name_hash",
    "parse_certificate", "parse_chain", "record_from_x509", "verify_signature",
    "TRUST_BREAKING", "CertPolicy", "ChainIssue", "ChainReport", "IssueCode", "RevocationData",
    "RevocationStatus", "check_hostname", "check_revocation", "load_revocations",
    "load_trust_store", "validate_chain",
    "FixtureAuthority", "FixtureChain", "FlawSpec", "check_spec", "default_authority",
    "flaw_corpus", "generate_fixture_chain",
]
