"""Certificate records and DER chain parsing."""
from __future__ import annotations

import dataclasses
import datetime as dt
import enum
import hashlib

from cryptography import x509
from cryptography.exceptions import InvalidSignature, UnsupportedAlgorithm
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import dsa, ec, ed448, ed25519, padding, rsa
from cryptography.x509.oid import ExtensionOID, NameOID

from ..errors import DerSyntaxError


class KeyAlgorithm(enum.Enum):
    RSA = "RSA"
    EC = "EC"
    DSA = "DSA"
    ED25519 = "ED25519"
    ED448 = "ED448"


class SignatureAlgorithm(enum.Enum):
    MD5_RSA = ("1.2.840.113549.1.1.4", "rsa", "md5")
    SHA1_RSA = ("1.2.840.113549.1.1.5", "rsa", "sha1")
    SHA224_RSA = ("1.2.840.113549.1.1.14", "rsa", "sha224")
    SHA256_RSA = ("1.2.840.113549.1.1.11", "rsa", "sha256")
    SHA384_RSA = ("1.2.840.113549.1.1.12", "rsa", "sha384")
    SHA512_RSA = ("1.2.840.113549.1.1.13", "rsa", "sha512")
    RSA_PSS = ("1.2.840.113549.1.1.10", "pss", None)
    SHA1_ECDSA = ("1.2.840.10045.4.1", "ecdsa", "sha1")
    SHA224_ECDSA = ("1.2.840.10045.4.3.1", "ecdsa", "sha224")
    SHA256_ECDSA = ("1.2.840.10045.4.3.2", "ecdsa", "sha256")
    SHA384_ECDSA = ("1.2.840.10045.4.3.3", "ecdsa", "sha384")
    SHA512_ECDSA = ("1.2.840.10045.4.3.4", "ecdsa", "sha512")
    SHA1_DSA = ("1.2.840.10040.4.3", "dsa", "sha1")
    SHA256_DSA = ("2.16.840.1.101.3.4.3.2", "dsa", "sha256")
    ED25519 = ("1.3.101.112", "eddsa", None)
    ED448 = ("1.3.101.113", "eddsa", None)
    UNKNOWN = ("", None, None)

    @property
    def oid(self) -> str:
        return self.value[0]

    @property
    def scheme(self):
        return self.value[1]

    @property
    def hash_name(self):
        return self.value[2]

    @classmethod
    def from_oid(cls, dotted: str) -> "SignatureAlgorithm":
        for member in cls:
            if member.oid == dotted:
                return member
        return cls.UNKNOWN


HASHES = {"md5": hashes.MD5, "sha1": hashes.SHA1, "sha224": hashes.SHA224,
          "sha256": hashes.SHA256, "sha384": hashes.SHA384, "sha512": hashes.SHA512}


@dataclasses.dataclass(frozen=True)
class CertificateRecord:
    subject_cn: str
    subject_alt_names: tuple
    issuer: str
    subject: str
    serial: int
    not_before: dt.datetime
    not_after: dt.datetime
    key_algorithm: KeyAlgorithm
    key_bits: int
    signature_algorithm: SignatureAlgorithm
    is_ca: bool
    spki_digest: bytes
    der_digest: bytes
    issuer_dn_hash: str
    subject_dn_hash: str
    der: bytes = dataclasses.field(repr=False, compare=False)

    @property
    def self_issued(self) -> bool:
        return self.subject_dn_hash == self.issuer_dn_hash

    @property
    def fingerprint(self) -> str:
        return self.der_digest.hex()

    def x509(self) -> x509.Certificate:
        return x509.load_der_x509_certificate(self.der)

    def to_dict(self) -> dict:
        return {
            "subject_cn": self.subject_cn,
            "subject_alt_names": list(self.subject_alt_names),
            "issuer": self.issuer,
            "subject": self.subject,
            "serial": format(self.serial, "x"),
            "not_before": self.not_before.isoformat(),
            "not_after": self.not_after.isoformat(),
            "key_algorithm": self.key_algorithm.value,
            "key_bits": self.key_bits,
            "signature_algorithm": self.signature_algorithm.name,
            "is_ca": self.is_ca,
            "spki_digest": self.spki_digest.hex(),
            "der_digest": self.der_digest.hex(),
        }


def name_hash(name: x509.Name) -> str:
    return hashlib.sha256(name.public_bytes()).hexdigest()


def _key_info(key) -> tuple[KeyAlgorithm, int]:
    if isinstance(key, rsa.RSAPublicKey):
        return KeyAlgorithm.RSA, key.key_size
    if isinstance(key, ec.EllipticCurvePublicKey):
        return KeyAlgorithm.EC, key.curve.key_size
    if isinstance(key, dsa.DSAPublicKey):
        return KeyAlgorithm.DSA, key.key_size
    if isinstance(key, ed25519.Ed25519PublicKey):
        return KeyAlgorithm.ED25519, 256
    if isinstance(key, ed448.Ed448PublicKey):
        return KeyAlgorithm.ED448, 456
    raise UnsupportedAlgorithm(f"unsupported public key type {type(key).__name__}")


def record_from_x509(cert: x509.Certificate) -> CertificateRecord:
    der = cert.public_bytes(serialization.Encoding.DER)
    key = cert.public_key()
    key_alg, key_bits = _key_info(key)
    spki = key.public_bytes(serialization.Encoding.DER,
                            serialization.PublicFormat.SubjectPublicKeyInfo)
    try:
        san = cert.extensions.get_extension_for_oid(ExtensionOID.SUBJECT_ALTERNATIVE_NAME)
        sans = tuple(san.value.get_values_for_type(x509.DNSName))
    except x509.ExtensionNotFound:
        sans = ()
    try:
        bc = cert.extensions.get_extension_for_oid(ExtensionOID.BASIC_CONSTRAINTS)
        is_ca = bool(bc.value.ca)
    except x509.ExtensionNotFound:
        is_ca = False
    cns = cert.subject.get_attributes_for_oid(NameOID.COMMON_NAME)
    return CertificateRecord(
        subject_cn=str(cns[0].value) if cns else "",
        subject_alt_names=sans,
        issuer=cert.issuer.rfc4514_string(),
        subject=cert.subject.rfc4514_string(),
        serial=cert.serial_number,
        not_before=cert.not_valid_before_utc,
        not_after=cert.not_valid_after_utc,
        key_algorithm=key_alg,
        key_bits=key_bits,
        signature_algorithm=SignatureAlgorithm.from_oid(cert.signature_algorithm_oid.dotted_string),
        is_ca=is_ca,
        spki_digest=hashlib.sha256(spki).digest(),
        der_digest=hashlib.sha256(der).digest(),
        issuer_dn_hash=name_hash(cert.issuer),
        subject_dn_hash=name_hash(cert.subject),
        der=der,
    )


def parse_certificate(der: bytes) -> CertificateRecord:
    return record_from_x509(x509.load_der_x509_certificate(der))


def parse_chain(raw) -> list[CertificateRecord]:
    """Parse a :class:`RawChain` (or a plain list of DER blobs), leaf first.

    On the first unparseable blob a :class:`DerSyntaxError` is raised that
    carries the records parsed so far.
    """
    blobs = getattr(raw, "der_certificates", raw)
    records: list[CertificateRecord] = []
    for position, blob in enumerate(blobs):
        try:
            records.append(parse_certificate(bytes(blob)))
        except (ValueError, UnsupportedAlgorithm) as exc:
            raise DerSyntaxError(position, records, str(exc)) from exc
    return records


def load_pem_chain(data: bytes) -> list[CertificateRecord]:
    return [record_from_x509(c) for c in x509.load_pem_x509_certificates(data)]


def verify_signature(cert: CertificateRecord, issuer: CertificateRecord) -> bool:
    """Check that ``issuer``'s key produced ``cert``'s signature.

    Supports legacy MD5/SHA-1 signatures, which the high-level X.509 API in
    recent ``cryptography`` releases refuses.  Raises UnsupportedAlgorithm
    for schemes it cannot check.
    """
    c = cert.x509()
    key = issuer.x509().public_key()
    alg = cert.signature_algorithm
    data, sig = c.tbs_certificate_bytes, c.signature
    try:
        if alg.scheme == "rsa" and isinstance(key, rsa.RSAPublicKey):
            key.verify(sig, data, padding.PKCS1v15(), HASHES[alg.hash_name]())
        elif alg.scheme == "ecdsa" and isinstance(key, ec.EllipticCurvePublicKey):
            key.verify(sig, data, ec.ECDSA(HASHES[alg.hash_name]()))
        elif alg.scheme == "dsa" and isinstance(key, dsa.DSAPublicKey):
            key.verify(sig, data, HASHES[alg.hash_name]())
        elif alg.scheme == "eddsa" and isinstance(key, (ed25519.Ed25519PublicKey,
                                                         ed448.Ed448PublicKey)):
            key.verify(sig, data)
        elif alg.scheme == "pss" and isinstance(key, rsa.RSAPublicKey):
            c.verify_directly_issued_by(issuer.x509())
        else:
            raise UnsupportedAlgorithm(f"cannot verify {alg.name} with {type(key).__name__}")
    except InvalidSignature:
        return False
    except (ValueError, TypeError) as exc:
        if alg.scheme == "pss":
            return False
        raise UnsupportedAlgorithm(str(exc)) from exc
    return True
