"""One handshake attempt: send a ClientHello, interpret what comes back.

A Connector abstracts the byte transport (in-memory fleet or TCP), so the
scanning, inspection, and policy engines share one attempt primitive.
Connections are one-shot: the exchange ends at the ServerHello or alert
and the transport closes; nothing past the first server flight matters
for negotiation observation.
"""

from __future__ import annotations

import hashlib
import socket
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol, Sequence

from . import wire
from .suites import FALLBACK_SIGNAL


class ConnectFailed(Exception):
    """TCP connect refused/reset, or unknown in-memory address."""


@dataclass(frozen=True)
class ClientIdentity:
    """Who is asking, as far as a server endpoint can tell.

    tag is a client-supplied label carried by the in-memory transport;
    source is the transport-level peer (set to the tag in memory mode,
    the peer address in socket mode).
    """

    tag: str = ""
    source: str = ""


class Connector(Protocol):
    def exchange(
        self, address: str, raw: bytes, timeout_s: float, client: ClientIdentity
    ) -> bytes: ...


class AttemptKind(Enum):
    SELECTED = "SELECTED"
    REJECTED = "REJECTED"
    TIMEOUT = "TIMEOUT"
    CONNECT_ERROR = "CONNECT_ERROR"
    PROTOCOL_ERROR = "PROTOCOL_ERROR"


FAILURE_KINDS = frozenset(
    {AttemptKind.REJECTED, AttemptKind.TIMEOUT, AttemptKind.CONNECT_ERROR, AttemptKind.PROTOCOL_ERROR}
)


@dataclass(frozen=True)
class AttemptResult:
    kind: AttemptKind
    suite: Optional[int] = None
    version: Optional[int] = None
    alert: Optional[wire.AlertMsg] = None
    error: Optional[str] = None
    elapsed_s: float = 0.0

    @property
    def selected(self) -> bool:
        return self.kind is AttemptKind.SELECTED


def _client_random(seed: int, address: str, label: str) -> bytes:
    # Deterministic 32-byte random: reproducible runs without locking a
    # shared RNG across scanner threads.
    material = "%d|%s|%s" % (seed, address, label)
    return hashlib.sha256(material.encode()).digest()


def handshake_attempt(
    connector: Connector,
    address: str,
    offer: Sequence[int],
    timeout_s: float,
    *,
    max_version: int = wire.TLS1_2,
    sni: Optional[str] = None,
    tag: str = "",
    seed: int = 0,
    label: str = "",
    signal_fallback: bool = False,
) -> AttemptResult:
    """Send one ClientHello and classify the first server flight."""
    suites = tuple(offer)
    if signal_fallback:
        suites = suites + (FALLBACK_SIGNAL,)
    extensions = (wire.sni_extension(sni),) if sni else ()
    msg = wire.ClientHelloMsg(
        legacy_version=max_version,
        random=_client_random(seed, address, label or repr(suites)),
        cipher_suites=suites,
        extensions=extensions,
    )
    raw = wire.encode_client_hello(msg)
    start = time.perf_counter()

    def done(**kw) -> AttemptResult:
        return AttemptResult(elapsed_s=time.perf_counter() - start, **kw)

    try:
        reply = connector.exchange(address, raw, timeout_s, ClientIdentity(tag=tag, source=tag))
    except TimeoutError:
        return done(kind=AttemptKind.TIMEOUT, error="timed out after %gs" % timeout_s)
    except ConnectFailed as exc:
        return done(kind=AttemptKind.CONNECT_ERROR, error=str(exc))
    try:
        sh = wire.decode_server_hello(reply)
        return done(kind=AttemptKind.SELECTED, suite=sh.selected_suite, version=sh.negotiated_version)
    except wire.NotServerHello:
        pass
    except wire.WireError as exc:
        return done(kind=AttemptKind.PROTOCOL_ERROR, error=str(exc))
    try:
        alert = wire.decode_alert(reply)
        return done(kind=AttemptKind.REJECTED, alert=alert, error=alert.description_name)
    except wire.WireError as exc:
        return done(kind=AttemptKind.PROTOCOL_ERROR, error=str(exc))


def read_record(sock: socket.socket, deadline: float) -> bytes:
    """Read exactly one TLS record off a socket before the deadline."""
    buf = b""
    want = 5
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            raise TimeoutError("record read deadline exceeded")
        sock.settimeout(remaining)
        try:
            chunk = sock.recv(4096)
        except socket.timeout:
            raise TimeoutError("record read deadline exceeded") from None
        if not chunk:
            raise ConnectFailed("connection closed before a full record")
        buf += chunk
        if len(buf) >= 5:
            want = 5 + int.from_bytes(buf[3:5], "big")
        if len(buf) >= want:
            return buf[:want]


class TcpConnector:
    """Connector over real TCP; one connection per exchange."""

    def exchange(
        self, address: str, raw: bytes, timeout_s: float, client: ClientIdentity
    ) -> bytes:
        host, _, port = address.rpartition(":")
        if not host:
            host, port = address, "443"
        deadline = time.perf_counter() + timeout_s
        try:
            sock = socket.create_connection((host, int(port)), timeout=timeout_s)
        except socket.timeout:
            raise TimeoutError("connect timed out") from None
        except OSError as exc:
            raise ConnectFailed("connect %s failed: %s" % (address, exc)) from exc
        try:
            sock.sendall(raw)
            return read_record(sock, deadline)
        except socket.timeout:
            raise TimeoutError("exchange timed out") from None
        except TimeoutError:
            raise
        except OSError as exc:
            raise ConnectFailed("exchange with %s failed: %s" % (address, exc)) from exc
        finally:
            try:
                sock.close()
            except OSError:
                pass
