"""Loopback mock servers: a handshake-only TLS/SSL responder and banner services."""
from __future__ import annotations

import contextlib
import dataclasses
import os
import select
import socket
import ssl
import struct
import threading
import time

from ..errors import PortExhaustion
from .hello import HelloError, NeedMore, ParsedHello, hello_length, parse_client_hello

HRR_RANDOM = bytes.fromhex("CF21AD74E59A6111BE1D8C021E65B891C2A211167ABB8C5E079E09E2C8A8339C")
MAX_FRAGMENT = 16384
HELLO_TIMEOUT = 5.0
DRAIN_TIMEOUT = 2.0

SSL2 = 0x0002
TLS13 = 0x0304


@dataclasses.dataclass(frozen=True)
class ConnectionRecord:
    port: int               # logical port (443, 22, ...)
    opened: float           # time.monotonic() at accept
    replied: float          # just before the server's final send or close
    closed: float           # when the server saw the client go away (or gave up)
    bytes_in: int
    summary: str            # what the client sent
    response: str           # what the server did


class ConnectionLog:
    """Per-scenario connection log shared by every port of that scenario."""

    def __init__(self):
        self._entries: list[ConnectionRecord] = []
        self._lock = threading.Lock()

    def append(self, record: ConnectionRecord) -> None:
        with self._lock:
            self._entries.append(record)

    def entries(self) -> list[ConnectionRecord]:
        with self._lock:
            return sorted(self._entries, key=lambda r: r.opened)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()


@dataclasses.dataclass
class TlsBehavior:
    """Everything the handshake responder needs to know about its scenario."""
    accepted: dict                          # wire version code -> tuple of code points
    chain_der: list                         # presented chain, leaf first
    cert_file: str | None = None            # PEM chain for the real TLS 1.3 endpoint
    key_file: str | None = None
    close_on_hello: bool = False
    malformed_server_hello: bool = False
    slow_delay: float = 0.0
    deflate: bool = False


# --- wire helpers -----------------------------------------------------------

def _record(ctype: int, version: int, payload: bytes) -> bytes:
    out = b""
    for i in range(0, max(len(payload), 1), MAX_FRAGMENT):
        frag = payload[i:i + MAX_FRAGMENT]
        out += struct.pack("!BHH", ctype, version, len(frag)) + frag
    return out


def _handshake(mtype: int, body: bytes) -> bytes:
    return bytes([mtype]) + len(body).to_bytes(3, "big") + body


def alert(version: int, description: int) -> bytes:
    return _record(0x15, version, bytes([2, description]))


def server_hello(version: int, cipher: int, session_id: bytes = b"", compression: int = 0,
                 extensions: bytes = b"", random: bytes | None = None) -> bytes:
    random = random if random is not None else os.urandom(32)
    body = struct.pack("!H", version) + random + bytes([len(session_id)]) + session_id
    body += struct.pack("!HB", cipher, compression)
    if extensions:
        body += struct.pack("!H", len(extensions)) + extensions
    return _handshake(2, body)


def certificate_message(chain_der) -> bytes:
    certs = b"".join(len(c).to_bytes(3, "big") + c for c in chain_der)
    return _handshake(11, len(certs).to_bytes(3, "big") + certs)


def server_hello_done() -> bytes:
    return _handshake(14, b"")


def _ext(etype: int, body: bytes) -> bytes:
    return struct.pack("!HH", etype, len(body)) + body


def ssl2_server_hello(cert_der: bytes, kinds) -> bytes:
    specs = b"".join(k.to_bytes(3, "big") for k in kinds)
    conn_id = os.urandom(16)
    body = struct.pack("!BBBHHHH", 4, 0, 1, SSL2, len(cert_der), len(specs), len(conn_id))
    body += cert_der + specs + conn_id
    return struct.pack("!H", 0x8000 | len(body)) + body


def ssl2_error(code: int) -> bytes:
    body = struct.pack("!BH", 0, code)
    return struct.pack("!H", 0x8000 | len(body)) + body


def describe(hello: ParsedHello) -> str:
    if hello.format == "ssl2":
        return f"ssl2 hello kinds={len(hello.ciphers)}"
    parts = [f"v3 hello client=0x{hello.client_version:04X} ciphers={len(hello.ciphers)}"]
    if hello.supported_versions:
        parts.append("sv=" + "+".join(f"0x{v:04X}" for v in hello.supported_versions))
    if hello.key_shares is not None:
        parts.append(f"key_shares={len(hello.key_shares)}")
    if 1 in hello.compression:
        parts.append("deflate")
    return " ".join(parts)


# --- servers ----------------------------------------------------------------

class _Listener:
    """Sequential accept loop on a loopback port, run in a daemon thread."""

    def __init__(self, logical_port: int, log: ConnectionLog, host: str = "127.0.0.1"):
        self.logical_port = logical_port
        self.log = log
        try:
            self.sock = socket.create_server((host, 0), backlog=16)
        except OSError as exc:
            raise PortExhaustion(f"cannot bind a loopback port: {exc}") from exc
        self.address = self.sock.getsockname()[:2]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True,
                                        name=f"mock-{logical_port}-{self.address[1]}")

    def start(self) -> "_Listener":
        self._thread.start()
        return self

    def signal_stop(self) -> None:
        self._stop.set()
        with contextlib.suppress(OSError):
            self.sock.close()

    def join(self, timeout: float = 5) -> None:
        if self._thread.is_alive():
            self._thread.join(timeout=timeout)

    def stop(self) -> None:
        self.signal_stop()
        self.join()

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                ready, _, _ = select.select([self.sock], [], [], 0.2)
            except (OSError, ValueError):
                return
            if not ready:
                continue
            try:
                conn, _peer = self.sock.accept()
            except OSError:
                continue
            opened = time.monotonic()
            self._replied = None
            with conn:
                try:
                    bytes_in, summary, response = self.handle(conn)
                except Exception as exc:  # a broken client must not kill the server
                    bytes_in, summary, response = 0, "error", f"server error: {exc!r}"
                if self._replied is None:
                    self._replied = time.monotonic()
                closed = time.monotonic()
            self.log.append(ConnectionRecord(self.logical_port, opened, self._replied, closed,
                                             bytes_in, summary, response))

    def mark_reply(self) -> None:
        """Stamp the moment before the final server action.

        The client cannot close before seeing that action, so the gap from
        this stamp to the next accept never exceeds the client's real gap.
        """
        self._replied = time.monotonic()

    def handle(self, conn: socket.socket) -> tuple[int, str, str]:
        raise NotImplementedError


def _drain(conn: socket.socket) -> None:
    """Half-close and wait for the client to hang up, so the peer never sees a reset."""
    with contextlib.suppress(OSError):
        conn.shutdown(socket.SHUT_WR)
    deadline = time.monotonic() + DRAIN_TIMEOUT
    while time.monotonic() < deadline:
        try:
            conn.settimeout(max(0.01, deadline - time.monotonic()))
            if not conn.recv(65536):
                return
        except (socket.timeout, OSError):
            return


def _peek_hello(conn: socket.socket) -> bytes:
    """Peek (without consuming) until one whole ClientHello record is buffered."""
    deadline = time.monotonic() + HELLO_TIMEOUT
    seen = -1
    while True:
        conn.settimeout(max(0.01, deadline - time.monotonic()))
        data = conn.recv(65536, socket.MSG_PEEK)
        if not data:
            return b""
        try:
            if len(data) >= hello_length(data):
                return data[:hello_length(data)]
        except NeedMore:
            pass
        if time.monotonic() > deadline:
            return data
        if len(data) == seen:
            time.sleep(0.001)
        seen = len(data)


class TlsServer(_Listener):
    def __init__(self, logical_port: int, log: ConnectionLog, behavior: TlsBehavior):
        super().__init__(logical_port, log)
        self.behavior = behavior
        self._tls13_ctx = None
        if behavior.cert_file and TLS13 in behavior.accepted:
            ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            ctx.minimum_version = ssl.TLSVersion.TLSv1_3
            ctx.maximum_version = ssl.TLSVersion.TLSv1_3
            with contextlib.suppress(ssl.SSLError):
                ctx.set_ciphers("ALL:@SECLEVEL=0")
            ctx.load_cert_chain(behavior.cert_file, behavior.key_file)
            self._tls13_ctx = ctx

    def handle(self, conn):
        b = self.behavior
        try:
            raw = _peek_hello(conn)
        except (socket.timeout, OSError):
            return 0, "no hello", "timeout"
        if not raw:
            return 0, "empty", "close"
        try:
            hello = parse_client_hello(raw)
        except HelloError as exc:
            conn.recv(len(raw))
            self.mark_reply()
            if b.close_on_hello:
                return len(raw), f"garbage ({exc})", "close"
            conn.sendall(alert(0x0301, 50))
            _drain(conn)
            return len(raw), f"garbage ({exc})", "alert:50"
        summary = describe(hello)

        if hello.format == "v3" and hello.wants_tls13 and TLS13 in b.accepted \
                and hello.key_shares and self._tls13_ctx is not None and not b.close_on_hello:
            return len(raw), summary, self._real_handshake(conn)

        conn.recv(len(raw))     # consume what was peeked
        if b.close_on_hello:
            self.mark_reply()
            return len(raw), summary, "close"
        reply, kind = self._respond(hello)
        if b.slow_delay:
            time.sleep(b.slow_delay)
        self.mark_reply()
        if reply:
            with contextlib.suppress(OSError):
                conn.sendall(reply)
        _drain(conn)
        return len(raw), summary, kind

    def _respond(self, hello: ParsedHello) -> tuple[bytes, str]:
        b = self.behavior
        if hello.format == "ssl2":
            if SSL2 not in b.accepted:
                return b"", "close"
            common = [k for k in hello.ciphers if k in set(b.accepted[SSL2])]
            if not common:
                return ssl2_error(1), "ssl2-error:1"
            if b.malformed_server_hello:
                return struct.pack("!H", 0x8000 | 3) + b"\x04\x00\x01", "malformed"
            return ssl2_server_hello(b.chain_der[0], common), "ssl2-server-hello"

        if hello.wants_tls13 and TLS13 in b.accepted:
            choice = next((c for c in hello.ciphers if c in set(b.accepted[TLS13])), None)
            if choice is None:
                return alert(0x0303, 40), "alert:40"
            if b.malformed_server_hello:
                return self._malformed(0x0303), "malformed"
            exts = _ext(0x002B, struct.pack("!H", TLS13)) + _ext(0x0033, struct.pack("!H", 0x001D))
            msg = server_hello(0x0303, choice, hello.session_id, 0, exts, random=HRR_RANDOM)
            return _record(0x16, 0x0303, msg), f"hrr:0x{choice:04X}"

        # classic negotiation: highest configured version not above the client's
        candidates = [v for v in b.accepted if v not in (SSL2, TLS13) and v <= hello.client_version]
        record_version = min(hello.record_version, 0x0303) if hello.record_version >= 0x0300 else 0x0301
        if not candidates:
            return alert(record_version, 70), "alert:70"
        version = max(candidates)
        choice = next((c for c in hello.ciphers if c in set(b.accepted[version])), None)
        if choice is None:
            return alert(version, 40), "alert:40"
        if b.malformed_server_hello:
            return self._malformed(version), "malformed"
        compression = 1 if (b.deflate and 1 in hello.compression) else 0
        flight = (server_hello(version, choice, os.urandom(32), compression)
                  + certificate_message(b.chain_der) + server_hello_done())
        return _record(0x16, version, flight), f"server-hello:0x{version:04X}:0x{choice:04X}"

    @staticmethod
    def _malformed(version: int) -> bytes:
        # a ServerHello whose body is far too short to hold its fixed fields
        return _record(0x16, version, _handshake(2, b"\x03\x03\x00\x01\x02"))

    def _real_handshake(self, conn) -> str:
        self.mark_reply()
        conn.settimeout(HELLO_TIMEOUT)
        try:
            with self._tls13_ctx.wrap_socket(conn, server_side=True) as tls:
                tls.settimeout(DRAIN_TIMEOUT)
                with contextlib.suppress(OSError, ssl.SSLError):
                    tls.recv(4096)       # wait for the client to leave or speak once
            return "tls13-handshake"
        except (ssl.SSLError, OSError) as exc:
            return f"tls13-failed: {exc.__class__.__name__}"


class BannerServer(_Listener):
    """Greets with a banner line, or answers one HTTP request with a Server header."""

    def __init__(self, logical_port: int, log: ConnectionLog, banner: str, http: bool):
        super().__init__(logical_port, log)
        self.banner = banner
        self.http = http

    def handle(self, conn):
        if self.http:
            data = b""
            conn.settimeout(HELLO_TIMEOUT)
            with contextlib.suppress(socket.timeout, OSError):
                while b"\r\n\r\n" not in data and len(data) < 8192:
                    chunk = conn.recv(4096)
                    if not chunk:
                        break
                    data += chunk
            self.mark_reply()
            conn.sendall(http_response(self.banner))
            _drain(conn)
            first = data.split(b"\r\n", 1)[0].decode("latin-1", "replace")
            return len(data), first or "no request", "http"
        self.mark_reply()
        conn.sendall(self.banner.encode("latin-1") + b"\r\n")
        _drain(conn)
        return 0, "passive", "banner"


def http_response(server_header: str) -> bytes:
    return (f"HTTP/1.1 200 OK\r\nServer: {server_header}\r\nContent-Length: 0\r\n"
            f"Connection: close\r\n\r\n").encode("latin-1")
