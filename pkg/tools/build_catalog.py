"""Compile the shipped cipher catalog from the IANA TLS cipher suite registry.

Reads ``tools/iana_cipher_suites.csv`` (value,description as published in the
registry), derives algorithm metadata from each suite name and writes
``src/posture_audit/data/ciphers.csv``.  Classification comes from
:func:`posture_audit.catalog.classify_cipher` so the shipped column and the
rule engine can never drift apart.

    python tools/build_catalog.py
"""
from __future__ import annotations

import csv
import re
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from posture_audit.catalog import (  # noqa: E402
    Bulk,
    CipherSuite,
    KeyExchange,
    Mac,
    classify_cipher,
    write_catalog,
)
from posture_audit.versions import ProtocolVersion as V  # noqa: E402

REGISTRY = ROOT / "tools" / "iana_cipher_suites.csv"
OUT = ROOT / "src" / "posture_audit" / "data" / "ciphers.csv"

SSL2_KINDS = [
    (0x010080, "SSL_CK_RC4_128_WITH_MD5", Bulk.RC4, 128),
    (0x020080, "SSL_CK_RC4_128_EXPORT40_WITH_MD5", Bulk.EXPORT_grade, 40),
    (0x030080, "SSL_CK_RC2_128_CBC_WITH_MD5", Bulk.RC2, 128),
    (0x040080, "SSL_CK_RC2_128_CBC_EXPORT40_WITH_MD5", Bulk.EXPORT_grade, 40),
    (0x050080, "SSL_CK_IDEA_128_CBC_WITH_MD5", Bulk.IDEA, 128),
    (0x060040, "SSL_CK_DES_64_CBC_WITH_MD5", Bulk.DES, 56),
    (0x0700C0, "SSL_CK_DES_192_EDE3_CBC_WITH_MD5", Bulk.TripleDES, 112),
]

# Draft-only assignments and signalling values are not negotiable suites.
SKIP = re.compile(r"AEGIS|SCSV")

KX_PREFIXES = [
    ("ECDHE_ECDSA", KeyExchange.ECDHE),
    ("ECDHE_RSA", KeyExchange.ECDHE),
    ("ECDHE_PSK", KeyExchange.ECDHE),
    ("ECDH_ECDSA", KeyExchange.ECDH),
    ("ECDH_RSA", KeyExchange.ECDH),
    ("ECDH_anon", KeyExchange.ECDH_anon),
    ("DHE_DSS", KeyExchange.DHE),
    ("DHE_RSA", KeyExchange.DHE),
    ("DHE_PSK", KeyExchange.DHE),
    ("PSK_DHE", KeyExchange.DHE),
    ("DH_DSS", KeyExchange.DH),
    ("DH_RSA", KeyExchange.DH),
    ("DH_anon", KeyExchange.DH_anon),
    ("RSA_PSK", KeyExchange.PSK),
    ("RSA", KeyExchange.RSA),
    ("PSK", KeyExchange.PSK),
    ("KRB5", KeyExchange.KRB5),
    ("SRP_SHA_DSS", KeyExchange.SRP),
    ("SRP_SHA_RSA", KeyExchange.SRP),
    ("SRP_SHA", KeyExchange.SRP),
    ("ECCPWD", KeyExchange.ECCPWD),
    ("GOSTR341112_256", KeyExchange.GOST),
    ("NULL", KeyExchange.NULL_KX),
]

LEGACY = frozenset({V.SSL3, V.TLS1_0, V.TLS1_1, V.TLS1_2})
TLS_10_12 = frozenset({V.TLS1_0, V.TLS1_1, V.TLS1_2})


def parse_bulk(enc: str) -> tuple[Bulk, int]:
    if enc == "NULL":
        return Bulk.NULL_ENC, 0
    if enc.startswith("3DES"):
        return Bulk.TripleDES, 112
    if enc in ("DES_CBC", "DES_CBC_40", "DES40_CBC"):
        return Bulk.DES, 56
    m = re.match(r"(AES|CAMELLIA|ARIA)_(128|256)_(CBC|GCM|CCM_8|CCM)$", enc)
    if m:
        family, bits, mode = m.groups()
        if family == "AES":
            bulk = {"CBC": Bulk.AES_CBC, "GCM": Bulk.AES_GCM}.get(mode, Bulk.AES_CCM)
        else:
            bulk = Bulk[family]
        return bulk, int(bits)
    m = re.match(r"RC4_(\d+)$", enc)
    if m:
        return Bulk.RC4, int(m.group(1))
    if enc.startswith("CHACHA20"):
        return Bulk.CHACHA20, 256
    if enc.startswith("IDEA"):
        return Bulk.IDEA, 128
    if enc.startswith("SEED"):
        return Bulk.SEED, 128
    if enc.startswith("RC2"):
        return Bulk.RC2, 128
    if enc.startswith("SM4"):
        return Bulk.SM4, 128
    if enc.startswith(("KUZNYECHIK", "MAGMA", "28147")):
        return Bulk.GOST, 256
    raise ValueError(f"unrecognised bulk cipher {enc!r}")


def parse_mac(tail: str) -> Mac:
    if tail == "NULL_NULL":
        return Mac.NULL
    if tail.endswith(("GCM", "CCM", "CCM_8", "POLY1305")) or "MGM" in tail:
        return Mac.AEAD
    if tail.endswith(("OMAC", "IMIT")):
        return Mac.AEAD
    for suffix, mac in (("_SHA384", Mac.SHA384), ("_SHA256", Mac.SHA256),
                        ("_SHA", Mac.SHA1), ("_MD5", Mac.MD5)):
        if tail.endswith(suffix):
            return mac
    raise ValueError(f"unrecognised MAC in {tail!r}")


def tls13_suite(code: int, name: str) -> CipherSuite:
    body = name[len("TLS_"):]
    if body in ("SHA256_SHA256", "SHA384_SHA384"):
        bulk, bits = Bulk.NULL_ENC, 0
        mac = Mac.SHA256 if body.startswith("SHA256") else Mac.SHA384
    else:
        enc = re.sub(r"_(SHA256|SHA384|SM3)$", "", body)
        bulk, bits = parse_bulk(enc)
        mac = Mac.AEAD
    return CipherSuite(code, name, KeyExchange.ECDHE, bulk, bits, mac,
                       frozenset({V.TLS1_3}), classification=None)


def legacy_suite(code: int, name: str) -> CipherSuite:
    kx_part, enc_part = name[len("TLS_"):].split("_WITH_")
    export = "EXPORT" in kx_part
    kx_part = kx_part.replace("_EXPORT1024", "").replace("_EXPORT", "")
    for prefix, kx in KX_PREFIXES:
        if kx_part == prefix:
            break
    else:
        raise ValueError(f"unrecognised key exchange in {name}")

    mac = parse_mac(enc_part)
    enc = re.sub(r"_(SHA384|SHA256|SHA|MD5|NULL)$", "", enc_part) if mac is not Mac.AEAD else enc_part
    bulk, bits = parse_bulk(enc)
    if export:
        bulk, bits = Bulk.EXPORT_grade, 40

    gost_13 = kx is KeyExchange.GOST and "MGM" in enc_part
    if gost_13:
        versions = frozenset({V.TLS1_3})
    elif mac in (Mac.SHA256, Mac.SHA384, Mac.AEAD):
        versions = frozenset({V.TLS1_2})
    elif export:
        versions = frozenset({V.SSL3, V.TLS1_0})
    elif bulk in (Bulk.DES, Bulk.IDEA):
        versions = frozenset({V.SSL3, V.TLS1_0, V.TLS1_1})
    elif kx in (KeyExchange.RSA, KeyExchange.DH, KeyExchange.DHE,
                KeyExchange.DH_anon, KeyExchange.NULL_KX) and bulk in (
            Bulk.NULL_ENC, Bulk.RC4, Bulk.TripleDES, Bulk.AES_CBC):
        versions = LEGACY
    else:
        versions = TLS_10_12
    return CipherSuite(code, name, kx, bulk, bits, mac, versions, classification=None)


def build() -> list[CipherSuite]:
    suites = []
    with REGISTRY.open(newline="") as fh:
        for row in csv.DictReader(fh):
            name = row["description"]
            if SKIP.search(name):
                continue
            code = int(row["value"], 16)
            if "_WITH_" in name:
                suite = legacy_suite(code, name)
            else:
                suite = tls13_suite(code, name)
            suites.append(suite)
    for code, name, bulk, bits in SSL2_KINDS:
        suites.append(CipherSuite(code, name, KeyExchange.RSA, bulk, bits, Mac.MD5,
                                  frozenset({V.SSL2}), classification=None))
    return [s.with_classification(classify_cipher(s)) for s in suites]


def main() -> None:
    suites = build()
    write_catalog(suites, OUT)
    print(f"wrote {len(suites)} suites to {OUT.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
