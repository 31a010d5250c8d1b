"""Cipher suite registry with strength metadata and weak/insecure classification."""
from __future__ import annotations

import csv
import dataclasses
import enum
from collections.abc import Iterable, Mapping
from pathlib import Path

from .datafiles import data_path
from .errors import InvariantViolation, SchemaError, UnknownCipher
from .versions import ProtocolVersion


class KeyExchange(enum.Enum):
    RSA = "RSA"
    DHE = "DHE"
    ECDHE = "ECDHE"
    DH_anon = "DH_anon"
    ECDH_anon = "ECDH_anon"
    PSK = "PSK"
    NULL_KX = "NULL_KX"
    # static (non-ephemeral) Diffie-Hellman and the registry's rarer families
    DH = "DH"
    ECDH = "ECDH"
    KRB5 = "KRB5"
    SRP = "SRP"
    ECCPWD = "ECCPWD"
    GOST = "GOST"

    @property
    def anonymous(self) -> bool:
        return self in (KeyExchange.DH_anon, KeyExchange.ECDH_anon, KeyExchange.NULL_KX)

    @property
    def forward_secret(self) -> bool:
        return self in (KeyExchange.DHE, KeyExchange.ECDHE, KeyExchange.SRP,
                        KeyExchange.ECCPWD, KeyExchange.GOST)


class Bulk(enum.Enum):
    NULL_ENC = "NULL_ENC"
    RC4 = "RC4"
    DES = "DES"
    TripleDES = "TripleDES"
    AES_CBC = "AES_CBC"
    AES_GCM = "AES_GCM"
    AES_CCM = "AES_CCM"
    CHACHA20 = "CHACHA20"
    CAMELLIA = "CAMELLIA"
    ARIA = "ARIA"
    SEED = "SEED"
    IDEA = "IDEA"
    RC2 = "RC2"
    SM4 = "SM4"
    GOST = "GOST"
    EXPORT_grade = "EXPORT_grade"


class Mac(enum.Enum):
    NULL = "NULL"
    MD5 = "MD5"
    SHA1 = "SHA1"
    SHA256 = "SHA256"
    SHA384 = "SHA384"
    AEAD = "AEAD"


class Classification(enum.Enum):
    Strong = "Strong"
    Weak = "Weak"
    Insecure = "Insecure"


# Default policy.  Insecure: practical attacks exist.  Weak: no practical break,
# but short keys, 64-bit blocks, CBC+SHA1 or no forward secrecy.
INSECURE_BULK = frozenset({Bulk.NULL_ENC, Bulk.RC4, Bulk.DES, Bulk.EXPORT_grade})
NEVER_STRONG_BULK = INSECURE_BULK
BLOCK_BULK = frozenset({Bulk.TripleDES, Bulk.AES_CBC, Bulk.CAMELLIA, Bulk.ARIA,
                        Bulk.SEED, Bulk.IDEA, Bulk.RC2, Bulk.SM4, Bulk.GOST})


@dataclasses.dataclass(frozen=True)
class CipherSuite:
    code_point: int
    iana_name: str
    kx: KeyExchange
    bulk: Bulk
    effective_bits: int
    mac_or_hash: Mac
    version_families: frozenset
    classification: Classification | None

    def with_classification(self, value: Classification) -> "CipherSuite":
        return dataclasses.replace(self, classification=value)

    @property
    def is_ssl2(self) -> bool:
        return self.code_point > 0xFFFF


def classify_cipher(suite: CipherSuite) -> Classification:
    """Rule-based classification; identical inputs always classify identically."""
    if (suite.bulk in INSECURE_BULK or suite.kx.anonymous
            or suite.effective_bits < 112):
        return Classification.Insecure
    cbc_legacy_mac = (suite.bulk in BLOCK_BULK
                      and suite.mac_or_hash in (Mac.SHA1, Mac.MD5))
    if (suite.bulk is Bulk.TripleDES or suite.effective_bits < 128
            or cbc_legacy_mac or suite.mac_or_hash is Mac.MD5
            or not suite.kx.forward_secret):
        return Classification.Weak
    return Classification.Strong


def check_invariants(suite: CipherSuite) -> None:
    """Guardrails applied to every catalog row regardless of its declared class."""
    cls = suite.classification
    if cls is None:
        raise InvariantViolation(f"{suite.iana_name}: missing classification")
    must_be_insecure = (suite.bulk is Bulk.NULL_ENC or suite.kx.anonymous
                        or suite.effective_bits < 112)
    if must_be_insecure and cls is not Classification.Insecure:
        raise InvariantViolation(
            f"{suite.iana_name}: NULL/anonymous/<112-bit suite must be Insecure, not {cls.value}")
    if 112 <= suite.effective_bits < 128 and cls is Classification.Strong:
        raise InvariantViolation(f"{suite.iana_name}: {suite.effective_bits}-bit suite cannot be Strong")
    if cls is Classification.Strong and (suite.effective_bits < 128
                                         or suite.bulk in NEVER_STRONG_BULK):
        raise InvariantViolation(f"{suite.iana_name}: Strong requires >=128 bits and a sound bulk cipher")
    if suite.bulk is Bulk.NULL_ENC and suite.effective_bits != 0:
        raise InvariantViolation(f"{suite.iana_name}: NULL encryption has 0 effective bits")
    if suite.bulk is Bulk.EXPORT_grade and suite.effective_bits != 40:
        raise InvariantViolation(f"{suite.iana_name}: export suites have 40 effective bits")
    if suite.bulk is Bulk.TripleDES and suite.effective_bits != 112:
        raise InvariantViolation(f"{suite.iana_name}: 3DES has 112 effective bits")


class CipherCatalog(Mapping):
    """Immutable code point -> :class:`CipherSuite` registry."""

    def __init__(self, suites: Iterable[CipherSuite]):
        by_code: dict[int, CipherSuite] = {}
        for suite in suites:
            if suite.code_point in by_code:
                raise SchemaError(f"duplicate code point 0x{suite.code_point:04X}")
            by_code[suite.code_point] = suite
        self._by_code = dict(sorted(by_code.items()))
        self._by_version = {
            v: tuple(c for c, s in self._by_code.items() if v in s.version_families)
            for v in ProtocolVersion
        }
        self._by_name = {s.iana_name: s for s in self._by_code.values()}

    def __getitem__(self, code: int) -> CipherSuite:
        return self._by_code[code]

    def __iter__(self):
        return iter(self._by_code)

    def __len__(self) -> int:
        return len(self._by_code)

    def by_name(self, name: str) -> CipherSuite:
        return self._by_name[name]

    def for_version(self, version: ProtocolVersion) -> tuple[int, ...]:
        """Code points valid for ``version``, in catalog (code point) order."""
        return self._by_version[version]

    def valid_for(self, code: int, version: ProtocolVersion) -> bool:
        suite = self._by_code.get(code)
        return suite is not None and version in suite.version_families


CSV_HEADER = ["code_point", "iana_name", "kx", "bulk", "effective_bits", "mac",
              "versions", "classification"]


def _format_code(code: int) -> str:
    return f"0x{code:06X}" if code > 0xFFFF else f"0x{code:04X}"


def write_catalog(suites: Iterable[CipherSuite], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for s in sorted(suites, key=lambda s: s.code_point):
            versions = "+".join(v.name for v in sorted(s.version_families))
            writer.writerow([_format_code(s.code_point), s.iana_name, s.kx.value,
                             s.bulk.value, s.effective_bits, s.mac_or_hash.value,
                             versions, s.classification.value])


def _parse_row(row: dict, line: int) -> CipherSuite:
    try:
        code = int(row["code_point"], 16)
        versions = frozenset(ProtocolVersion[v] for v in row["versions"].split("+"))
        return CipherSuite(
            code_point=code,
            iana_name=row["iana_name"],
            kx=KeyExchange(row["kx"]),
            bulk=Bulk(row["bulk"]),
            effective_bits=int(row["effective_bits"]),
            mac_or_hash=Mac(row["mac"]),
            version_families=versions,
            classification=Classification(row["classification"]),
        )
    except (KeyError, ValueError, TypeError, AttributeError) as exc:
        raise SchemaError(f"bad catalog row: {exc}", row=line) from exc


def load_catalog(path: str | Path | None = None) -> CipherCatalog:
    """Load and validate a catalog CSV (the shipped one by default)."""
    path = Path(path) if path is not None else data_path("ciphers.csv")
    suites: list[CipherSuite] = []
    seen: dict[int, int] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise SchemaError(f"expected header {','.join(CSV_HEADER)}", row=1)
        for line, row in enumerate(reader, start=2):
            suite = _parse_row(row, line)
            if suite.code_point in seen:
                raise SchemaError(
                    f"duplicate code point {_format_code(suite.code_point)} "
                    f"(first at row {seen[suite.code_point]})", row=line)
            seen[suite.code_point] = line
            check_invariants(suite)
            suites.append(suite)
    return CipherCatalog(suites)


@dataclasses.dataclass(frozen=True)
class CipherCounts:
    weak_count: int
    insecure_count: int
    weak_set: frozenset
    insecure_set: frozenset
    unknown: frozenset = frozenset()


def count_weak_insecure(matrix, catalog: CipherCatalog, *, strict: bool = True) -> CipherCounts:
    """Count weak and insecure suites over the union of accepted ciphers.

    Code points missing from the catalog raise :class:`UnknownCipher` when
    ``strict``; otherwise they are returned in ``unknown`` and left out of
    both counts.
    """
    accepted = matrix.accepted_union()
    unknown = frozenset(c for c in accepted if c not in catalog)
    if unknown and strict:
        raise UnknownCipher(unknown)
    weak = frozenset(c for c in accepted if c in catalog
                     and catalog[c].classification is Classification.Weak)
    insecure = frozenset(c for c in accepted if c in catalog
                         and catalog[c].classification is Classification.Insecure)
    return CipherCounts(len(weak), len(insecure), weak, insecure, unknown)
