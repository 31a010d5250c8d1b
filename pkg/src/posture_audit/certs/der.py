"""Just enough DER to split and reassemble X.509 structures."""
from __future__ import annotations

SEQUENCE = 0x30
BIT_STRING = 0x03
NULL = 0x05
OID = 0x06


class DerError(ValueError):
    pass


def read_tlv(data: bytes, pos: int = 0) -> tuple[int, int, int, int]:
    """Return (tag, header_len, content_len, end) for the element at ``pos``."""
    if pos + 2 > len(data):
        raise DerError("truncated header")
    tag = data[pos]
    first = data[pos + 1]
    if first < 0x80:
        hlen, clen = 2, first
    else:
        n = first & 0x7F
        if n == 0 or n > 4 or pos + 2 + n > len(data):
            raise DerError("unsupported length encoding")
        clen = int.from_bytes(data[pos + 2:pos + 2 + n], "big")
        hlen = 2 + n
    end = pos + hlen + clen
    if end > len(data):
        raise DerError("element overruns buffer")
    return tag, hlen, clen, end


def children(data: bytes) -> list[bytes]:
    """Encoded children of the constructed element that spans all of ``data``."""
    tag, hlen, _clen, end = read_tlv(data)
    if not tag & 0x20:
        raise DerError("element is not constructed")
    if end != len(data):
        raise DerError("trailing bytes after element")
    out = []
    pos = hlen
    while pos < end:
        _t, _h, _c, nxt = read_tlv(data, pos)
        out.append(data[pos:nxt])
        pos = nxt
    return out


def encode_length(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    body = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(body)]) + body


def tlv(tag: int, content: bytes) -> bytes:
    return bytes([tag]) + encode_length(len(content)) + content


def encode_oid(dotted: str) -> bytes:
    arcs = [int(a) for a in dotted.split(".")]
    body = bytearray([40 * arcs[0] + arcs[1]])
    for arc in arcs[2:]:
        chunk = [arc & 0x7F]
        arc >>= 7
        while arc:
            chunk.append(0x80 | (arc & 0x7F))
            arc >>= 7
        body.extend(reversed(chunk))
    return tlv(OID, bytes(body))


def algorithm_identifier(dotted: str, null_params: bool) -> bytes:
    return tlv(SEQUENCE, encode_oid(dotted) + (tlv(NULL, b"") if null_params else b""))


def certificate(tbs: bytes, sig_alg: bytes, signature: bytes) -> bytes:
    return tlv(SEQUENCE, tbs + sig_alg + tlv(BIT_STRING, b"\x00" + signature))
