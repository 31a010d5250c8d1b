"""Synthetic certificate chains with a chosen set of flaws.

Every chain comes with the issue set it must validate to, which makes the
generator an oracle for :func:`validate_chain`.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import itertools
import threading
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.x509.oid import NameOID

from ..errors import UnsatisfiableSpec
from . import der
from .model import CertificateRecord, name_hash, record_from_x509
from .validate import IssueCode, RevocationData

ALL_FLAWS = tuple(IssueCode)

# Pairs that cannot co-exist in one chain where every flaw sits on the leaf.
INCOMPATIBLE = frozenset({
    frozenset({IssueCode.SLF, IssueCode.UCA}),
    frozenset({IssueCode.SLF, IssueCode.INC}),
    frozenset({IssueCode.UCA, IssueCode.INC}),
    frozenset({IssueCode.NAF, IssueCode.NBF}),
})


@dataclasses.dataclass(frozen=True)
class FlawSpec:
    flaws: frozenset
    depth: int

    @classmethod
    def of(cls, *codes, depth: int | None = None) -> "FlawSpec":
        flaws = frozenset(IssueCode(c) if isinstance(c, str) else c for c in codes)
        if depth is None:
            depth = default_depth(flaws)
        return cls(flaws, depth)

    @classmethod
    def parse(cls, text: str) -> "FlawSpec":
        """Accepts ``flaws=NAF,SIG`` / ``depth=2`` lines or the inline ``flaws:NAF,depth:2`` form."""
        fields = {}
        if "\n" in text.strip() or "=" in text:
            for line in text.splitlines():
                line = line.strip()
                if line and not line.startswith("#"):
                    key, _, value = line.partition("=")
                    fields[key.strip()] = value.strip()
        else:
            # inline: the flaw list itself contains commas, so split on the keys
            flaws_part, _, depth_part = text.partition("depth:")
            fields["flaws"] = flaws_part.removeprefix("flaws:").strip().rstrip(",")
            if depth_part:
                fields["depth"] = depth_part.strip()
        codes = [c.strip() for c in fields.get("flaws", "").split(",") if c.strip()]
        try:
            flaws = frozenset(IssueCode(c) for c in codes)
        except ValueError as exc:
            raise UnsatisfiableSpec(f"unknown flaw code in {codes}") from exc
        depth = int(fields["depth"]) if fields.get("depth") else default_depth(flaws)
        return cls(flaws, depth)

    def to_text(self) -> str:
        return f"flaws={','.join(sorted(c.value for c in self.flaws))}\ndepth={self.depth}\n"

    def inline(self) -> str:
        return f"flaws:{','.join(sorted(c.value for c in self.flaws))},depth:{self.depth}"


def default_depth(flaws) -> int:
    if IssueCode.SLF in flaws:
        return 1
    if IssueCode.INC in flaws:
        return 3
    return 2


def check_spec(spec: FlawSpec) -> None:
    if not 1 <= spec.depth <= 4:
        raise UnsatisfiableSpec(f"depth {spec.depth} outside 1-4")
    for pair in INCOMPATIBLE:
        if pair <= spec.flaws:
            raise UnsatisfiableSpec(" and ".join(sorted(c.value for c in pair))
                                    + " cannot both be present")
    if IssueCode.SLF in spec.flaws and spec.depth != 1:
        raise UnsatisfiableSpec("a self-signed leaf implies a chain of depth 1")
    if IssueCode.SLF not in spec.flaws and spec.depth == 1:
        raise UnsatisfiableSpec("depth 1 is only a self-signed leaf")
    if IssueCode.INC in spec.flaws and spec.depth < 3:
        raise UnsatisfiableSpec("an incomplete chain needs an intermediate to omit (depth >= 3)")


def flaw_corpus() -> list[FlawSpec]:
    """All single flaws plus every compatible pair, at their default depths."""
    specs = [FlawSpec.of(code) for code in ALL_FLAWS]
    for a, b in itertools.combinations(ALL_FLAWS, 2):
        if frozenset({a, b}) in INCOMPATIBLE:
            continue
        specs.append(FlawSpec.of(a, b))
    return specs


# --- signing ----------------------------------------------------------------

_LEGACY_SHA1 = {
    "rsa": ("1.2.840.113549.1.1.5", True),
    "ec": ("1.2.840.10045.4.1", False),
}


def _sign(builder: x509.CertificateBuilder, key, *, sha1: bool) -> x509.Certificate:
    cert = builder.sign(key, hashes.SHA256())
    if not sha1:
        return cert
    family = "rsa" if isinstance(key, rsa.RSAPrivateKey) else "ec"
    oid, null_params = _LEGACY_SHA1[family]
    alg = der.algorithm_identifier(oid, null_params)
    parts = der.children(cert.tbs_certificate_bytes)
    parts[2] = alg  # TBSCertificate.signature
    tbs = der.tlv(der.SEQUENCE, b"".join(parts))
    if family == "rsa":
        sig = key.sign(tbs, padding.PKCS1v15(), hashes.SHA1())
    else:
        sig = key.sign(tbs, ec.ECDSA(hashes.SHA1()))
    return x509.load_der_x509_certificate(der.certificate(tbs, alg, sig))


def _name(cn: str, org: str = "posture-audit fixtures") -> x509.Name:
    return x509.Name([x509.NameAttribute(NameOID.ORGANIZATION_NAME, org),
                      x509.NameAttribute(NameOID.COMMON_NAME, cn)])


def _ec_key():
    return ec.generate_private_key(ec.SECP256R1())


def _ca_cert(subject: x509.Name, issuer: x509.Name, key, issuer_key, at: dt.datetime,
             *, path_len: int | None = None) -> x509.Certificate:
    builder = (x509.CertificateBuilder()
               .subject_name(subject).issuer_name(issuer)
               .public_key(key.public_key())
               .serial_number(x509.random_serial_number())
               .not_valid_before(at - dt.timedelta(days=365))
               .not_valid_after(at + dt.timedelta(days=3650))
               .add_extension(x509.BasicConstraints(ca=True, path_length=path_len), critical=True)
               .add_extension(x509.KeyUsage(False, False, False, False, False, True, True,
                                            False, False), critical=True))
    return _sign(builder, issuer_key, sha1=False)


class FixtureAuthority:
    """A trusted root CA shared by the fixture chains of one process."""

    def __init__(self, at: dt.datetime | None = None, cn: str = "Posture Fixture Root CA"):
        at = at or _now()
        self.key = _ec_key()
        self.name = _name(cn)
        self.cert = _ca_cert(self.name, self.name, self.key, self.key, at)
        self.record = record_from_x509(self.cert)

    @property
    def pem(self) -> bytes:
        return self.cert.public_bytes(serialization.Encoding.PEM)

    def write_trust_store(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "fixture-root.pem"
        path.write_bytes(self.pem)
        return path


_default_authority: FixtureAuthority | None = None
_authority_lock = threading.Lock()


def default_authority() -> FixtureAuthority:
    global _default_authority
    with _authority_lock:
        if _default_authority is None:
            _default_authority = FixtureAuthority()
        return _default_authority


def _now() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0)


@dataclasses.dataclass
class FixtureChain:
    spec: FlawSpec
    hostname: str
    certificates: list            # x509.Certificate, leaf first, as presented
    leaf_key: object
    expected: frozenset
    revocations: RevocationData
    at: dt.datetime

    @property
    def pem_chain(self) -> bytes:
        return b"".join(c.public_bytes(serialization.Encoding.PEM) for c in self.certificates)

    @property
    def der_chain(self) -> list[bytes]:
        return [c.public_bytes(serialization.Encoding.DER) for c in self.certificates]

    @property
    def leaf_key_pem(self) -> bytes:
        return self.leaf_key.private_bytes(serialization.Encoding.PEM,
                                           serialization.PrivateFormat.PKCS8,
                                           serialization.NoEncryption())

    def records(self) -> list[CertificateRecord]:
        return [record_from_x509(c) for c in self.certificates]


def generate_fixture_chain(spec: FlawSpec, hostname: str = "fixture.test", *,
                           at: dt.datetime | None = None,
                           authority: FixtureAuthority | None = None) -> FixtureChain:
    """Build a chain for ``hostname`` exhibiting exactly ``spec.flaws``."""
    check_spec(spec)
    at = at or _now()
    authority = authority or default_authority()
    flaws = spec.flaws

    if IssueCode.UCA in flaws:
        root_key = _ec_key()
        root_name = _name("Untrusted Fixture Root", org="elsewhere")
        root_cert = _ca_cert(root_name, root_name, root_key, root_key, at)
    else:
        root_key, root_name, root_cert = authority.key, authority.name, authority.cert

    # chain above the leaf, root last
    cas = [(root_name, root_key, root_cert)]
    for level in range(spec.depth - 2):
        name = _name(f"Fixture Intermediate {level + 1} for {hostname}")
        key = _ec_key()
        parent_name, parent_key, _ = cas[-1]
        cert = _ca_cert(name, parent_name, key, parent_key, at, path_len=None)
        cas.append((name, key, cert))

    leaf_key = rsa.generate_private_key(65537, 1024) if IssueCode.WKY in flaws else _ec_key()
    if IssueCode.NAF in flaws:
        nb, na = at - dt.timedelta(days=400), at - dt.timedelta(days=1)
    elif IssueCode.NBF in flaws:
        nb, na = at + dt.timedelta(days=1), at + dt.timedelta(days=400)
    else:
        nb, na = at - dt.timedelta(days=30), at + dt.timedelta(days=365)
    presented_name = f"mismatch.{hostname}.invalid" if IssueCode.HNM in flaws else hostname
    leaf_name = _name(presented_name, org="fixture leaf")
    if IssueCode.SLF in flaws:
        issuer_name, issuer_key = leaf_name, leaf_key
    else:
        issuer_name, issuer_key, _ = cas[-1]
    builder = (x509.CertificateBuilder()
               .subject_name(leaf_name).issuer_name(issuer_name)
               .public_key(leaf_key.public_key())
               .serial_number(x509.random_serial_number())
               .not_valid_before(nb).not_valid_after(na)
               .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
               .add_extension(x509.SubjectAlternativeName([x509.DNSName(presented_name)]),
                              critical=False))
    leaf = _sign(builder, issuer_key, sha1=IssueCode.SIG in flaws)

    if IssueCode.SLF in flaws:
        presented = [leaf]
    else:
        upper = [c for _, _, c in reversed(cas)]     # nearest issuer first, root last
        if IssueCode.INC in flaws:
            upper = upper[1:]
        presented = [leaf] + upper

    revocations = RevocationData()
    if IssueCode.RVK in flaws:
        revocations.crl[name_hash(leaf.issuer)] = {leaf.serial_number}
    if IssueCode.BLK in flaws:
        revocations.blocklist.add(record_from_x509(leaf).spki_digest.hex())
    return FixtureChain(spec, hostname, presented, leaf_key, frozenset(flaws), revocations, at)
