"""Server-side ClientHello decoding for the mock fleet.

Deliberately shares no code with :mod:`posture_audit.prober.wire`; the two
are cross-checked against each other in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field


class HelloError(ValueError):
    pass


class NeedMore(Exception):
    pass


class Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def left(self) -> int:
        return len(self.buf) - self.pos

    def take(self, n: int) -> bytes:
        if n > self.left():
            raise HelloError(f"need {n} bytes, {self.left()} left")
        out = bytes(self.buf[self.pos:self.pos + n])
        self.pos += n
        return out

    def uint(self, width: int) -> int:
        return int.from_bytes(self.take(width), "big")

    def vector(self, len_width: int) -> bytes:
        return self.take(self.uint(len_width))


@dataclass
class ParsedHello:
    format: str                       # "ssl2" or "v3"
    record_version: int
    client_version: int
    ciphers: list = field(default_factory=list)
    compression: list = field(default_factory=list)
    server_name: str | None = None
    supported_versions: list = field(default_factory=list)
    key_shares: list | None = None    # None when the extension is absent
    extensions: dict = field(default_factory=dict)
    session_id: bytes = b""
    random: bytes = b""

    @property
    def wants_tls13(self) -> bool:
        return 0x0304 in self.supported_versions

    @property
    def max_version(self) -> int:
        if self.supported_versions:
            return max(self.supported_versions)
        return self.client_version


def hello_length(data: bytes) -> int:
    """Total bytes of the first ClientHello record in ``data``; raises NeedMore."""
    if len(data) < 2:
        raise NeedMore
    if data[0] & 0x80 and data[0] != 0x16:
        return 2 + (((data[0] & 0x7F) << 8) | data[1])
    if len(data) < 5:
        raise NeedMore
    if data[0] != 0x16:
        raise HelloError(f"record type {data[0]} is not handshake")
    return 5 + int.from_bytes(data[3:5], "big")


def parse_client_hello(data: bytes) -> ParsedHello:
    if not data:
        raise HelloError("empty")
    if data[0] & 0x80 and data[0] != 0x16:
        return _parse_v2(data)
    return _parse_v3(data)


def _parse_v2(data: bytes) -> ParsedHello:
    r = Reader(data)
    length = r.uint(2) & 0x7FFF
    body = Reader(r.take(length))
    if body.uint(1) != 1:
        raise HelloError("SSLv2 message is not CLIENT-HELLO")
    version = body.uint(2)
    spec_len, sid_len, chal_len = body.uint(2), body.uint(2), body.uint(2)
    if spec_len % 3:
        raise HelloError("SSLv2 cipher spec length not a multiple of 3")
    specs = body.take(spec_len)
    session_id = body.take(sid_len)
    challenge = body.take(chal_len)
    kinds = [int.from_bytes(specs[i:i + 3], "big") for i in range(0, spec_len, 3)]
    return ParsedHello("ssl2", 0x0002, version, kinds, session_id=session_id, random=challenge)


def _parse_v3(data: bytes) -> ParsedHello:
    r = Reader(data)
    if r.uint(1) != 0x16:
        raise HelloError("not a handshake record")
    record_version = r.uint(2)
    rec = Reader(r.vector(2))
    if rec.uint(1) != 1:
        raise HelloError("handshake message is not ClientHello")
    msg = Reader(rec.take(rec.uint(3)))
    client_version = msg.uint(2)
    random = msg.take(32)
    session_id = msg.vector(1)
    suites = msg.vector(2)
    if len(suites) % 2:
        raise HelloError("odd cipher suite vector")
    ciphers = [int.from_bytes(suites[i:i + 2], "big") for i in range(0, len(suites), 2)]
    compression = list(msg.vector(1))
    hello = ParsedHello("v3", record_version, client_version, ciphers, compression,
                        session_id=session_id, random=random)
    if msg.left() == 0:
        return hello
    exts = Reader(msg.vector(2))
    while exts.left():
        etype = exts.uint(2)
        edata = exts.vector(2)
        if etype in hello.extensions:
            raise HelloError(f"duplicate extension {etype}")
        hello.extensions[etype] = edata
        _interpret_extension(hello, etype, edata)
    return hello


def _interpret_extension(hello: ParsedHello, etype: int, edata: bytes) -> None:
    if etype == 0:
        names = Reader(Reader(edata).vector(2))
        while names.left():
            name_type = names.uint(1)
            name = names.vector(2)
            if name_type == 0:
                hello.server_name = name.decode("ascii")
    elif etype == 43:
        listing = Reader(edata).vector(1)
        hello.supported_versions = [int.from_bytes(listing[i:i + 2], "big")
                                    for i in range(0, len(listing), 2)]
    elif etype == 51:
        shares = Reader(Reader(edata).vector(2))
        hello.key_shares = []
        while shares.left():
            group = shares.uint(2)
            hello.key_shares.append((group, shares.vector(2)))
