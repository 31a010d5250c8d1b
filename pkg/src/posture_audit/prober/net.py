"""Connection plumbing: endpoints, probe policy and the per-host pacer."""
from __future__ import annotations

import contextlib
import dataclasses
import socket
import threading
import time

from ..errors import BudgetExceeded, Unreachable


@dataclasses.dataclass(frozen=True)
class ProbePolicy:
    connect_timeout: float = 5.0
    read_timeout: float = 5.0
    retries: int = 1
    per_host_delay: float = 0.05
    max_probes_per_version: int = 400
    max_probes_per_host: int = 1200

    def __post_init__(self):
        if self.per_host_delay < 0:
            raise ValueError("per_host_delay must be >= 0")
        if self.max_probes_per_host < 1 or self.max_probes_per_version < 1:
            raise ValueError("probe budgets must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


@dataclasses.dataclass(frozen=True)
class Endpoint:
    """A named service.  ``address`` overrides DNS (and the port) when set."""
    host: str
    port: int = 443
    address: tuple | None = None

    def connect_address(self) -> tuple[str, int]:
        return self.address if self.address is not None else (self.host, self.port)

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"

    @classmethod
    def parse(cls, text: str, default_port: int = 443) -> "Endpoint":
        host, sep, port = text.rpartition(":")
        if not sep or not port.isdigit():
            return cls(text, default_port)
        return cls(host.strip("[]"), int(port))


class Pacer:
    """Serializes connections to one host, enforcing the delay and the budget.

    The delay is measured from the close of the previous connection to the
    start of the next one, so the gap seen by the server is never shorter.
    """

    def __init__(self, policy: ProbePolicy, budget: int | None = None):
        self.policy = policy
        self.budget = budget if budget is not None else policy.max_probes_per_host
        self.count = 0
        self._last_close: float | None = None
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.budget - self.count

    @contextlib.contextmanager
    def connection(self, address: tuple[str, int], *, timeout: float | None = None):
        with self._lock:
            if self.count >= self.budget:
                raise BudgetExceeded(f"per-host budget of {self.budget} connections exhausted")
            if self._last_close is not None:
                wait = self._last_close + self.policy.per_host_delay - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
            self.count += 1
            try:
                sock = socket.create_connection(
                    address, timeout=timeout or self.policy.connect_timeout)
            except socket.gaierror as exc:
                self._last_close = time.monotonic()
                raise Unreachable(f"cannot resolve {address[0]}: {exc}") from exc
            except OSError as exc:
                self._last_close = time.monotonic()
                raise Unreachable(f"cannot connect to {address[0]}:{address[1]}: {exc}") from exc
            try:
                sock.settimeout(self.policy.read_timeout)
                yield sock
            finally:
                with contextlib.suppress(OSError):
                    sock.close()
                self._last_close = time.monotonic()
