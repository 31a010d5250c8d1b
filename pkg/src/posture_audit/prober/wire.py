"""ClientHello construction and server response classification.

Only the plaintext part of the handshake is handled: ServerHello, Certificate,
ServerHelloDone and alerts for SSLv3 to TLS 1.2, the HelloRetryRequest /
ServerHello of TLS 1.3, and the SSLv2 SERVER-HELLO / ERROR messages.
"""
from __future__ import annotations

import dataclasses
import enum
import ipaddress
import os
import struct
from collections.abc import Iterable, Sequence

from ..errors import UnsupportedCombination
from ..versions import ProtocolVersion

CONTENT_ALERT = 0x15
CONTENT_HANDSHAKE = 0x16

HS_CLIENT_HELLO = 1
HS_SERVER_HELLO = 2
HS_CERTIFICATE = 11
HS_SERVER_KEY_EXCHANGE = 12
HS_SERVER_HELLO_DONE = 14

EXT_SERVER_NAME = 0x0000
EXT_SUPPORTED_GROUPS = 0x000A
EXT_EC_POINT_FORMATS = 0x000B
EXT_SIGNATURE_ALGORITHMS = 0x000D
EXT_SUPPORTED_VERSIONS = 0x002B
EXT_KEY_SHARE = 0x0033

COMPRESSION_NULL = 0
COMPRESSION_DEFLATE = 1

SSL2_CLIENT_HELLO = 1
SSL2_SERVER_HELLO = 4
SSL2_ERROR = 0

ALERT_HANDSHAKE_FAILURE = 40
ALERT_PROTOCOL_VERSION = 70

# x25519, secp256r1, secp384r1, secp521r1, ffdhe2048, ffdhe3072
SUPPORTED_GROUPS = (0x001D, 0x0017, 0x0018, 0x0019, 0x0100, 0x0101)
SIGNATURE_ALGORITHMS = (0x0403, 0x0503, 0x0603, 0x0804, 0x0805, 0x0806,
                        0x0401, 0x0501, 0x0601, 0x0203, 0x0201, 0x0402, 0x0202)

HRR_RANDOM = bytes.fromhex(
    "CF21AD74E59A6111BE1D8C021E65B891C2A211167ABB8C5E079E09E2C8A8339C")


def _u8(n: int) -> bytes:
    return struct.pack("!B", n)


def _u16(n: int) -> bytes:
    return struct.pack("!H", n)


def _u24(n: int) -> bytes:
    return struct.pack("!I", n)[1:]


def _vec8(data: bytes) -> bytes:
    return _u8(len(data)) + data


def _vec16(data: bytes) -> bytes:
    return _u16(len(data)) + data


def _extension(ext_type: int, body: bytes) -> bytes:
    return _u16(ext_type) + _vec16(body)


def _is_ip_literal(name: str) -> bool:
    try:
        ipaddress.ip_address(name)
    except ValueError:
        return False
    return True


def record_version_for(version: ProtocolVersion) -> int:
    """Record-layer version used in probes: SSLv3 keeps 0x0300, all TLS use 0x0301."""
    return 0x0300 if version is ProtocolVersion.SSL3 else 0x0301


def _check_ciphers(version: ProtocolVersion, ciphers: Sequence[int], catalog) -> None:
    if not ciphers:
        raise UnsupportedCombination(f"{version.name}: empty cipher offer")
    for code in ciphers:
        if version is ProtocolVersion.SSL2:
            ok = 0xFFFF < code <= 0xFFFFFF
        else:
            ok = 0 <= code <= 0xFFFF
        if ok and catalog is not None:
            ok = catalog.valid_for(code, version)
        if not ok:
            raise UnsupportedCombination(
                f"cipher 0x{code:04X} is not defined for {version.name}")


def build_client_hello(version: ProtocolVersion, ciphers: Sequence[int],
                       server_name: str | None, *, catalog=None,
                       compression: Sequence[int] = (COMPRESSION_NULL,),
                       random: bytes | None = None,
                       key_shares: Sequence[tuple[int, bytes]] = ()) -> bytes:
    """Serialize a ClientHello record for ``version`` offering ``ciphers`` in order.

    ``key_shares`` is only meaningful for TLS 1.3; probes send an empty
    key_share list so that servers answer with a HelloRetryRequest naming
    their chosen suite without any key agreement taking place.
    """
    _check_ciphers(version, ciphers, catalog)
    if version is ProtocolVersion.SSL2:
        return _build_ssl2_hello(ciphers, random)
    if not server_name:
        raise UnsupportedCombination("SNI host name required for SSLv3 and later")

    random = random if random is not None else os.urandom(32)
    if len(random) != 32:
        raise ValueError("ClientHello random must be 32 bytes")
    legacy_version = min(version.wire_code, 0x0303)
    session_id = os.urandom(32) if version is ProtocolVersion.TLS1_3 else b""

    extensions = []
    if not _is_ip_literal(server_name):
        name = server_name.encode("idna")
        entry = _u8(0) + _vec16(name)
        extensions.append(_extension(EXT_SERVER_NAME, _vec16(entry)))
    if version is not ProtocolVersion.SSL3:
        groups = b"".join(_u16(g) for g in SUPPORTED_GROUPS)
        extensions.append(_extension(EXT_SUPPORTED_GROUPS, _vec16(groups)))
        extensions.append(_extension(EXT_EC_POINT_FORMATS, _vec8(b"\x00")))
    if version in (ProtocolVersion.TLS1_2, ProtocolVersion.TLS1_3):
        sigs = b"".join(_u16(s) for s in SIGNATURE_ALGORITHMS)
        extensions.append(_extension(EXT_SIGNATURE_ALGORITHMS, _vec16(sigs)))
    if version is ProtocolVersion.TLS1_3:
        extensions.append(_extension(EXT_SUPPORTED_VERSIONS, _vec8(_u16(0x0304))))
        shares = b"".join(_u16(g) + _vec16(k) for g, k in key_shares)
        extensions.append(_extension(EXT_KEY_SHARE, _vec16(shares)))

    body = (_u16(legacy_version) + random + _vec8(session_id)
            + _vec16(b"".join(_u16(c) for c in ciphers))
            + _vec8(bytes(compression))
            + _vec16(b"".join(extensions)))
    handshake = _u8(HS_CLIENT_HELLO) + _u24(len(body)) + body
    return (_u8(CONTENT_HANDSHAKE) + _u16(record_version_for(version))
            + _vec16(handshake))


def _build_ssl2_hello(kinds: Sequence[int], challenge: bytes | None) -> bytes:
    challenge = challenge[:16] if challenge else os.urandom(16)
    specs = b"".join(struct.pack("!I", k)[1:] for k in kinds)
    body = (_u8(SSL2_CLIENT_HELLO) + _u16(0x0002) + _u16(len(specs)) + _u16(0)
            + _u16(len(challenge)) + specs + challenge)
    return _u16(0x8000 | len(body)) + body


# --------------------------------------------------------------------------
# Response side
# --------------------------------------------------------------------------

class Outcome(enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED_ALERT = "RejectedAlert"
    REJECTED_CLOSE = "RejectedClose"
    TIMEOUT = "Timeout"
    MALFORMED = "MalformedResponse"
    # the server answered with a different protocol version than probed
    NEGOTIATED_OTHER = "NegotiatedOther"


@dataclasses.dataclass(frozen=True)
class ProbeResult:
    version: ProtocolVersion
    offered: tuple
    outcome: Outcome
    chosen: int | None = None
    alert: int | None = None
    accepted: tuple = ()
    compression: int | None = None
    negotiated: int | None = None
    note: str = ""

    @property
    def is_accepted(self) -> bool:
        return self.outcome is Outcome.ACCEPTED


class Incomplete(Exception):
    """More bytes are needed to decode the next unit."""


class Garbage(Exception):
    """Bytes cannot be a TLS/SSL response."""


@dataclasses.dataclass
class Flight:
    """Decoded server flight: handshake messages and/or an alert."""
    messages: list
    alert: tuple | None = None
    trailing_incomplete: bool = False


def split_records(data: bytes) -> tuple[list[tuple[int, int, bytes]], bytes]:
    """Split ``data`` into complete (type, version, fragment) records plus a remainder."""
    records = []
    pos = 0
    while len(data) - pos >= 5:
        ctype, ver, length = struct.unpack_from("!BHH", data, pos)
        if ctype not in (0x14, CONTENT_ALERT, CONTENT_HANDSHAKE, 0x17):
            raise Garbage(f"unknown record type 0x{ctype:02X}")
        if ver >> 8 != 0x03 or length > (1 << 14) + 2048:
            raise Garbage("bad record header")
        if len(data) - pos - 5 < length:
            break
        records.append((ctype, ver, data[pos + 5:pos + 5 + length]))
        pos += 5 + length
    return records, data[pos:]


def decode_flight(data: bytes) -> Flight:
    """Decode as much of a v3+ server flight as ``data`` contains."""
    records, rest = split_records(data)
    messages = []
    hs_buf = b""
    for ctype, _ver, fragment in records:
        if ctype == CONTENT_ALERT:
            if len(fragment) < 2:
                raise Garbage("short alert")
            return Flight(messages, alert=(fragment[0], fragment[1]))
        if ctype != CONTENT_HANDSHAKE:
            # ChangeCipherSpec or encrypted data ends the plaintext flight
            break
        hs_buf += fragment
        while len(hs_buf) >= 4:
            mtype = hs_buf[0]
            mlen = int.from_bytes(hs_buf[1:4], "big")
            if len(hs_buf) < 4 + mlen:
                break
            messages.append((mtype, hs_buf[4:4 + mlen]))
            hs_buf = hs_buf[4 + mlen:]
    return Flight(messages, trailing_incomplete=bool(rest or hs_buf))


@dataclasses.dataclass(frozen=True)
class ServerHello:
    version: int
    random: bytes
    session_id: bytes
    cipher: int
    compression: int
    extensions: dict

    @property
    def negotiated_version(self) -> int:
        sv = self.extensions.get(EXT_SUPPORTED_VERSIONS)
        if sv is not None and len(sv) == 2:
            return struct.unpack("!H", sv)[0]
        return self.version

    @property
    def is_retry_request(self) -> bool:
        return self.random == HRR_RANDOM


def parse_server_hello(body: bytes) -> ServerHello:
    try:
        version, = struct.unpack_from("!H", body, 0)
        random = body[2:34]
        sid_len = body[34]
        pos = 35 + sid_len
        session_id = body[35:pos]
        cipher, compression = struct.unpack_from("!HB", body, pos)
        pos += 3
        extensions = {}
        if pos < len(body):
            ext_len, = struct.unpack_from("!H", body, pos)
            pos += 2
            end = pos + ext_len
            if end > len(body):
                raise Garbage("extensions overrun ServerHello")
            while pos < end:
                etype, elen = struct.unpack_from("!HH", body, pos)
                extensions[etype] = body[pos + 4:pos + 4 + elen]
                pos += 4 + elen
    except (struct.error, IndexError) as exc:
        raise Garbage(f"truncated ServerHello: {exc}") from exc
    if len(random) != 32:
        raise Garbage("truncated ServerHello random")
    return ServerHello(version, random, session_id, cipher, compression, extensions)


def parse_certificate_message(body: bytes, *, tls13: bool = False) -> list[bytes]:
    pos = 0
    if tls13:
        pos = 1 + body[0]
    total = int.from_bytes(body[pos:pos + 3], "big")
    pos += 3
    end = pos + total
    if end > len(body):
        raise Garbage("certificate list overruns message")
    certs = []
    while pos < end:
        clen = int.from_bytes(body[pos:pos + 3], "big")
        pos += 3
        certs.append(body[pos:pos + clen])
        pos += clen
        if tls13:
            ext_len = int.from_bytes(body[pos:pos + 2], "big")
            pos += 2 + ext_len
    return certs


@dataclasses.dataclass(frozen=True)
class Ssl2ServerHello:
    certificate: bytes
    cipher_kinds: tuple
    connection_id: bytes


def decode_ssl2(data: bytes):
    """Decode one SSLv2 server message; returns ``("hello", Ssl2ServerHello)`` or ``("error", code)``."""
    if len(data) < 2:
        raise Incomplete
    if not data[0] & 0x80:
        raise Garbage("not an SSLv2 two-byte record header")
    length = ((data[0] & 0x7F) << 8) | data[1]
    if len(data) < 2 + length:
        raise Incomplete
    body = data[2:2 + length]
    if not body:
        raise Garbage("empty SSLv2 record")
    mtype = body[0]
    if mtype == SSL2_ERROR:
        if len(body) < 3:
            raise Garbage("short SSLv2 ERROR")
        return "error", struct.unpack_from("!H", body, 1)[0]
    if mtype != SSL2_SERVER_HELLO or len(body) < 11:
        raise Garbage(f"unexpected SSLv2 message type {mtype}")
    _hit, _cert_type, _ver, cert_len, specs_len, conn_len = struct.unpack_from("!BBHHHH", body, 1)
    pos = 11
    if pos + cert_len + specs_len + conn_len > len(body) or specs_len % 3:
        raise Garbage("SSLv2 SERVER-HELLO lengths inconsistent")
    cert = body[pos:pos + cert_len]
    pos += cert_len
    specs = body[pos:pos + specs_len]
    pos += specs_len
    kinds = tuple(int.from_bytes(specs[i:i + 3], "big") for i in range(0, len(specs), 3))
    return "hello", Ssl2ServerHello(cert, kinds, body[pos:pos + conn_len])


def response_complete(version: ProtocolVersion, data: bytes, *, want_certificate: bool = False) -> bool:
    """True once ``data`` holds enough of the server flight to classify it."""
    if not data:
        return False
    if version is ProtocolVersion.SSL2 and data[0] & 0x80:
        try:
            decode_ssl2(data)
        except Incomplete:
            return False
        except Garbage:
            return True
        return True
    try:
        flight = decode_flight(data)
    except Garbage:
        return True
    if flight.alert is not None:
        return True
    types = [t for t, _ in flight.messages]
    if not types:
        return False
    if types[0] != HS_SERVER_HELLO:
        return True
    if not want_certificate:
        return True
    return HS_CERTIFICATE in types or HS_SERVER_HELLO_DONE in types


def parse_server_response(version: ProtocolVersion, offered: Iterable[int], data: bytes) -> ProbeResult:
    """Classify the bytes a server sent in reply to a ClientHello for ``version``."""
    offered = tuple(offered)
    offered_set = frozenset(offered)
    if not data:
        return ProbeResult(version, offered, Outcome.REJECTED_CLOSE)
    if version is ProtocolVersion.SSL2 and data[0] & 0x80:
        return _classify_ssl2(offered, offered_set, data)
    try:
        flight = decode_flight(data)
    except Garbage as exc:
        return ProbeResult(version, offered, Outcome.MALFORMED, note=str(exc))
    if flight.alert is not None and not flight.messages:
        return ProbeResult(version, offered, Outcome.REJECTED_ALERT, alert=flight.alert[1])
    if not flight.messages:
        return ProbeResult(version, offered, Outcome.MALFORMED, note="incomplete server flight")
    mtype, body = flight.messages[0]
    if mtype != HS_SERVER_HELLO:
        return ProbeResult(version, offered, Outcome.MALFORMED,
                           note=f"first handshake message type {mtype}, expected ServerHello")
    try:
        hello = parse_server_hello(body)
    except Garbage as exc:
        return ProbeResult(version, offered, Outcome.MALFORMED, note=str(exc))
    negotiated = hello.negotiated_version
    if version is ProtocolVersion.SSL2 or negotiated != version.wire_code:
        return ProbeResult(version, offered, Outcome.NEGOTIATED_OTHER, negotiated=negotiated,
                           note=f"server negotiated 0x{negotiated:04X}")
    if hello.cipher not in offered_set:
        return ProbeResult(version, offered, Outcome.MALFORMED, negotiated=negotiated,
                           note=f"protocol violation: ServerHello selected 0x{hello.cipher:04X} "
                                f"which was not offered")
    return ProbeResult(version, offered, Outcome.ACCEPTED, chosen=hello.cipher,
                       accepted=(hello.cipher,), compression=hello.compression,
                       negotiated=negotiated)


def _classify_ssl2(offered, offered_set, data) -> ProbeResult:
    v = ProtocolVersion.SSL2
    try:
        kind, payload = decode_ssl2(data)
    except Incomplete:
        return ProbeResult(v, offered, Outcome.MALFORMED, note="truncated SSLv2 record")
    except Garbage as exc:
        return ProbeResult(v, offered, Outcome.MALFORMED, note=str(exc))
    if kind == "error":
        return ProbeResult(v, offered, Outcome.REJECTED_ALERT, alert=payload)
    extra = [k for k in payload.cipher_kinds if k not in offered_set]
    if extra:
        return ProbeResult(v, offered, Outcome.MALFORMED,
                           note="protocol violation: SERVER-HELLO lists unoffered kinds "
                                + ",".join(f"0x{k:06X}" for k in extra))
    if not payload.cipher_kinds:
        return ProbeResult(v, offered, Outcome.REJECTED_ALERT, alert=1,
                           note="SERVER-HELLO with no common cipher kinds")
    accepted = tuple(k for k in offered if k in set(payload.cipher_kinds))
    return ProbeResult(v, offered, Outcome.ACCEPTED, chosen=accepted[0], accepted=accepted,
                       negotiated=0x0002)


def certificates_from_flight(version: ProtocolVersion, data: bytes) -> list[bytes]:
    """Extract the DER chain from a plaintext server flight (SSLv2 through TLS 1.2)."""
    if version is ProtocolVersion.SSL2 and data and data[0] & 0x80:
        kind, payload = decode_ssl2(data)
        return [payload.certificate] if kind == "hello" and payload.certificate else []
    flight = decode_flight(data)
    for mtype, body in flight.messages:
        if mtype == HS_CERTIFICATE:
            return parse_certificate_message(body)
    return []
