"""Chain validation against an offline trust store and revocation data."""
from __future__ import annotations

import base64
import csv
import dataclasses
import datetime as dt
import enum
from pathlib import Path

from cryptography.exceptions import UnsupportedAlgorithm

from ..errors import EmptyChain, SchemaError
from .model import (CertificateRecord, KeyAlgorithm, SignatureAlgorithm, load_pem_chain,
                    parse_certificate, verify_signature)


class IssueCode(enum.Enum):
    SIG = "SIG"   # insecure signature algorithm
    HNM = "HNM"   # hostname mismatch
    NAF = "NAF"   # expired
    NBF = "NBF"   # not yet valid
    RVK = "RVK"   # revoked
    BLK = "BLK"   # blocklisted key
    UCA = "UCA"   # untrusted root
    INC = "INC"   # incomplete / unverifiable chain
    SLF = "SLF"   # self-signed leaf
    WKY = "WKY"   # weak key size


TRUST_BREAKING = frozenset({IssueCode.UCA, IssueCode.INC, IssueCode.RVK,
                            IssueCode.BLK, IssueCode.NAF, IssueCode.NBF})

WEAK_SIGNATURES = frozenset({SignatureAlgorithm.MD5_RSA, SignatureAlgorithm.SHA1_RSA,
                             SignatureAlgorithm.SHA1_ECDSA, SignatureAlgorithm.SHA1_DSA})


@dataclasses.dataclass(frozen=True)
class ChainIssue:
    code: IssueCode
    certificate_index: int
    detail: str = ""

    def sort_key(self):
        return (self.code.value, self.certificate_index, self.detail)


@dataclasses.dataclass(frozen=True)
class CertPolicy:
    min_rsa_bits: int = 2048
    min_ec_bits: int = 224
    weak_signatures: frozenset = WEAK_SIGNATURES


class RevocationStatus(enum.Enum):
    GOOD = "Good"
    REVOKED = "Revoked"
    BLOCKLISTED = "Blocklisted"
    UNKNOWN = "Unknown"


@dataclasses.dataclass
class RevocationData:
    """Offline CRL entries keyed by issuer DN hash, plus an SPKI deny list.

    An issuer appears in ``crl`` (possibly with an empty set) when its CRL
    was available; issuers absent from it have unknown status.
    """
    crl: dict = dataclasses.field(default_factory=dict)
    blocklist: set = dataclasses.field(default_factory=set)

    def merge(self, other: "RevocationData") -> "RevocationData":
        crl = {k: set(v) for k, v in self.crl.items()}
        for issuer, serials in other.crl.items():
            crl.setdefault(issuer, set()).update(serials)
        return RevocationData(crl, set(self.blocklist) | set(other.blocklist))

    def write(self, crl_path: str | Path, blocklist_path: str | Path) -> None:
        with open(crl_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["issuer_dn_hash", "serial_hex"])
            for issuer in sorted(self.crl):
                serials = sorted(self.crl[issuer])
                if not serials:
                    w.writerow([issuer, ""])
                for s in serials:
                    w.writerow([issuer, format(s, "x")])
        Path(blocklist_path).write_text("".join(f"{d}\n" for d in sorted(self.blocklist)))


def load_revocations(crl_path: str | Path | None = None,
                     blocklist_path: str | Path | None = None) -> RevocationData:
    data = RevocationData()
    if crl_path:
        with open(crl_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["issuer_dn_hash", "serial_hex"]:
                raise SchemaError("CRL file header must be issuer_dn_hash,serial_hex", row=1)
            for line, row in enumerate(reader, start=2):
                issuer = row["issuer_dn_hash"].strip().lower()
                if not issuer:
                    raise SchemaError("missing issuer_dn_hash", row=line)
                serials = data.crl.setdefault(issuer, set())
                if row["serial_hex"].strip():
                    try:
                        serials.add(int(row["serial_hex"], 16))
                    except ValueError as exc:
                        raise SchemaError(f"bad serial {row['serial_hex']!r}", row=line) from exc
    if blocklist_path:
        for line, text in enumerate(Path(blocklist_path).read_text().splitlines(), start=1):
            text = text.strip().lower()
            if not text or text.startswith("#"):
                continue
            try:
                if len(bytes.fromhex(text)) != 32:
                    raise ValueError
            except ValueError as exc:
                raise SchemaError(f"not a 32-byte hex digest: {text!r}", row=line) from exc
            data.blocklist.add(text)
    return data


def check_revocation(cert: CertificateRecord, revocations: RevocationData) -> RevocationStatus:
    if cert.spki_digest.hex() in revocations.blocklist:
        return RevocationStatus.BLOCKLISTED
    serials = revocations.crl.get(cert.issuer_dn_hash)
    if serials is None:
        return RevocationStatus.UNKNOWN
    return RevocationStatus.REVOKED if cert.serial in serials else RevocationStatus.GOOD


def load_trust_store(directory: str | Path) -> list[CertificateRecord]:
    """Every certificate in every ``*.pem``/``*.crt`` file under ``directory``.

    A single PEM bundle file is accepted as well.
    """
    directory = Path(directory)
    if directory.is_file():
        return load_pem_chain(directory.read_bytes())
    roots: list[CertificateRecord] = []
    seen: set = set()
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() in (".pem", ".crt") and path.is_file():
            for record in load_pem_chain(path.read_bytes()):
                if record.der not in seen:
                    seen.add(record.der)
                    roots.append(record)
    return roots


@dataclasses.dataclass(frozen=True)
class ChainReport:
    chain: tuple
    issues: frozenset
    trusted: bool
    evaluated_at: dt.datetime
    trust_anchor: str | None = None

    def __post_init__(self):
        codes = self.codes
        if self.trusted and codes & TRUST_BREAKING:
            raise ValueError("a trusted chain cannot carry trust-breaking issues")
        if not self.issues and not self.trusted:
            raise ValueError("an issue-free chain must be trusted")

    @property
    def codes(self) -> frozenset:
        return frozenset(i.code for i in self.issues)

    def to_dict(self) -> dict:
        return {
            "chain": [c.to_dict() for c in self.chain],
            "issues": [{"code": i.code.value, "certificate_index": i.certificate_index,
                        "detail": i.detail} for i in sorted(self.issues, key=ChainIssue.sort_key)],
            "trusted": self.trusted,
            "evaluated_at": self.evaluated_at.isoformat(),
            "trust_anchor": self.trust_anchor,
            "der_chain": [base64.b64encode(c.der).decode("ascii") for c in self.chain],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainReport":
        chain = tuple(parse_certificate(base64.b64decode(b)) for b in data["der_chain"])
        issues = frozenset(ChainIssue(IssueCode(i["code"]), i["certificate_index"], i["detail"])
                           for i in data["issues"])
        return cls(chain, issues, data["trusted"], dt.datetime.fromisoformat(data["evaluated_at"]),
                   data.get("trust_anchor"))


def derive_trusted(codes, anchored: bool) -> bool:
    return anchored and not (set(codes) & TRUST_BREAKING)


# --- individual checks ------------------------------------------------------

def _hostname_matches(pattern: str, hostname: str) -> bool:
    pattern = pattern.lower().rstrip(".")
    hostname = hostname.lower().rstrip(".")
    if pattern.startswith("*."):
        suffix = pattern[2:]
        head, dot, rest = hostname.partition(".")
        return bool(dot) and bool(head) and rest == suffix and "*" not in suffix
    return pattern == hostname


def check_hostname(leaf: CertificateRecord, hostname: str) -> bool:
    names = leaf.subject_alt_names or ((leaf.subject_cn,) if leaf.subject_cn else ())
    return any(_hostname_matches(n, hostname) for n in names)


def _signature_issues(chain, policy):
    for i, cert in enumerate(chain):
        exempt_root = i > 0 and cert.self_issued
        if not exempt_root and cert.signature_algorithm in policy.weak_signatures:
            yield ChainIssue(IssueCode.SIG, i, cert.signature_algorithm.name)


def _hostname_issues(chain, hostname, policy):
    if not check_hostname(chain[0], hostname):
        yield ChainIssue(IssueCode.HNM, 0, f"{hostname} not in certificate names")


def _validity_issues(chain, at):
    for i, cert in enumerate(chain):
        if cert.not_after < at:
            yield ChainIssue(IssueCode.NAF, i, f"expired {cert.not_after.isoformat()}")
        if cert.not_before > at:
            yield ChainIssue(IssueCode.NBF, i, f"valid from {cert.not_before.isoformat()}")


def _revocation_issues(chain, revocations):
    # the two sources are independent: a revoked cert may also have a blocked key
    for i, cert in enumerate(chain):
        if cert.serial in revocations.crl.get(cert.issuer_dn_hash, ()):
            yield ChainIssue(IssueCode.RVK, i, f"serial {cert.serial:x} revoked")
        if cert.spki_digest.hex() in revocations.blocklist:
            yield ChainIssue(IssueCode.BLK, i, "public key on deny list")


def _key_issues(chain, policy):
    for i, cert in enumerate(chain):
        if cert.key_algorithm in (KeyAlgorithm.RSA, KeyAlgorithm.DSA):
            weak = cert.key_bits < policy.min_rsa_bits
        elif cert.key_algorithm is KeyAlgorithm.EC:
            weak = cert.key_bits < policy.min_ec_bits
        else:
            weak = False
        if weak:
            yield ChainIssue(IssueCode.WKY, i, f"{cert.key_algorithm.value} {cert.key_bits} bits")


def _signed_by(cert, issuer) -> tuple[bool, str]:
    if cert.issuer_dn_hash != issuer.subject_dn_hash:
        return False, "name mismatch"
    try:
        ok = verify_signature(cert, issuer)
    except UnsupportedAlgorithm as exc:
        return False, f"unverifiable signature: {exc}"
    return ok, "" if ok else "bad signature"


def _is_anchor(cert, trust_store) -> CertificateRecord | None:
    for root in trust_store:
        if root.der_digest == cert.der_digest or (
                root.subject_dn_hash == cert.subject_dn_hash
                and root.spki_digest == cert.spki_digest):
            return root
    return None


def _build_path(chain, trust_store):
    """Walk from the leaf towards a trust anchor.

    Returns (anchor, issue) where exactly one is None unless the leaf
    itself is an unanchored self-signed certificate (both None).
    """
    used = {0}
    current_index = 0
    while True:
        current = chain[current_index]
        anchor = _is_anchor(current, trust_store)
        if anchor is not None:
            return anchor, None
        unverifiable = ""
        for root in trust_store:
            ok, why = _signed_by(current, root)
            if ok:
                return root, None
            if why.startswith("unverifiable") or why == "bad signature":
                unverifiable = why
        next_index = None
        for j, candidate in enumerate(chain):
            if j in used or j == current_index:
                continue
            ok, why = _signed_by(current, candidate)
            if ok:
                next_index = j
                break
            if why != "name mismatch":
                unverifiable = why
        if next_index is not None:
            used.add(next_index)
            current_index = next_index
            continue
        if current.self_issued:
            ok, why = _signed_by(current, current)
            if ok:
                if current_index == 0:
                    return None, None
                return None, ChainIssue(IssueCode.UCA, current_index,
                                        f"root {current.subject} not in trust store")
            unverifiable = unverifiable or why
        detail = unverifiable or f"issuer {current.issuer} not presented"
        return None, ChainIssue(IssueCode.INC, current_index, detail)


def validate_chain(chain, hostname: str, trust_store, revocations: RevocationData | None = None,
                   at: dt.datetime | None = None, policy: CertPolicy | None = None) -> ChainReport:
    """Run every check independently and derive the trust verdict."""
    chain = tuple(chain)
    if not chain:
        raise EmptyChain("no certificates to validate")
    revocations = revocations or RevocationData()
    policy = policy or CertPolicy()
    at = at or dt.datetime.now(dt.timezone.utc)

    issues: set[ChainIssue] = set()
    issues.update(_signature_issues(chain, policy))
    issues.update(_hostname_issues(chain, hostname, policy))
    issues.update(_validity_issues(chain, at))
    issues.update(_revocation_issues(chain, revocations))
    issues.update(_key_issues(chain, policy))

    anchor, path_issue = _build_path(chain, trust_store)
    if path_issue is not None:
        issues.add(path_issue)
    leaf = chain[0]
    if leaf.self_issued and anchor is None and path_issue is None:
        issues.add(ChainIssue(IssueCode.SLF, 0, "self-signed leaf"))
    elif leaf.self_issued and anchor is not None and len(chain) == 1 and not leaf.is_ca:
        issues.add(ChainIssue(IssueCode.SLF, 0, "pinned self-signed leaf"))

    codes = {i.code for i in issues}
    trusted = derive_trusted(codes, anchor is not None)
    return ChainReport(chain, frozenset(issues), trusted, at,
                       anchor.subject if anchor is not None else None)
