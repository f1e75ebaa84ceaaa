"""Bit-exact record and handshake codec for pre-1.3 TLS negotiation.

Covers exactly what negotiation observation needs: emit a ClientHello,
read back a ServerHello or a fatal alert, and the mirror images so a
simulated server can sit on the other end.  Decoders are total over
arbitrary byte strings: they return a value or raise a WireError
subclass, never anything else.

Record header is content_type(1) version(2) length(2); handshake header
is msg_type(1) length(3).  Extensions other than SNI are treated as
opaque (type, body) pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import suites

TLS1_0 = 0x0301
TLS1_1 = 0x0302
TLS1_2 = 0x0303

SUPPORTED_VERSIONS = frozenset({TLS1_0, TLS1_1, TLS1_2})

VERSION_NAMES = {TLS1_0: "TLS1.0", TLS1_1: "TLS1.1", TLS1_2: "TLS1.2"}


def version_name(v: int) -> str:
    return VERSION_NAMES.get(v, "0x%04X" % v)


CONTENT_ALERT = 21
CONTENT_HANDSHAKE = 22
HS_CLIENT_HELLO = 1
HS_SERVER_HELLO = 2

# Alert description codes used by this toolkit.
HANDSHAKE_FAILURE = 40
DECODE_ERROR = 50
PROTOCOL_VERSION = 70
INAPPROPRIATE_FALLBACK = 86

ALERT_NAMES = {
    HANDSHAKE_FAILURE: "handshake_failure",
    DECODE_ERROR: "decode_error",
    PROTOCOL_VERSION: "protocol_version",
    INAPPROPRIATE_FALLBACK: "inappropriate_fallback",
}

SNI_EXTENSION_TYPE = 0x0000


class WireError(Exception):
    """Base for every codec failure."""


class OversizeMessage(WireError):
    """A length field would overflow its fixed width."""


class MalformedRecord(WireError):
    """Framing or field contents violate the format."""


class NotServerHello(WireError):
    """Record decoded, but it is not a ServerHello (try decode_alert)."""


class NotClientHello(WireError):
    """Record decoded, but it is not a ClientHello."""


class NotAlert(WireError):
    """Record decoded, but it is not an alert."""


class AlertLevel(Enum):
    WARNING = 1
    FATAL = 2


@dataclass(frozen=True)
class AlertMsg:
    level: AlertLevel
    description: int

    def __post_init__(self) -> None:
        if not isinstance(self.level, AlertLevel):
            raise ValueError("level must be an AlertLevel")
        if not 0 <= self.description <= 0xFF:
            raise ValueError("alert description must fit one byte")

    @property
    def description_name(self) -> str:
        return ALERT_NAMES.get(self.description, "alert_%d" % self.description)


@dataclass(frozen=True)
class ClientHelloMsg:
    legacy_version: int
    random: bytes
    cipher_suites: tuple[int, ...]
    session_id: bytes = b""
    compression: tuple[int, ...] = (0,)
    extensions: tuple[tuple[int, bytes], ...] = ()

    def __post_init__(self) -> None:
        if self.legacy_version not in SUPPORTED_VERSIONS:
            raise ValueError("legacy_version must be a TLS 1.0-1.2 code")
        if len(self.random) != 32:
            raise ValueError("random must be exactly 32 bytes")
        if not 0 <= len(self.session_id) <= 32:
            raise ValueError("session_id must be 0-32 bytes")
        if not self.cipher_suites:
            raise ValueError("cipher_suites must be non-empty")
        for cp in self.cipher_suites:
            if not 0 <= cp <= 0xFFFF:
                raise ValueError("cipher suite codepoint out of range")
        if not self.compression:
            raise ValueError("compression list must be non-empty")
        for c in self.compression:
            if not 0 <= c <= 0xFF:
                raise ValueError("compression method out of range")
        for etype, body in self.extensions:
            if not 0 <= etype <= 0xFFFF:
                raise ValueError("extension type out of range")
            if not isinstance(body, bytes):
                raise ValueError("extension body must be bytes")


@dataclass(frozen=True)
class ServerHelloSummary:
    negotiated_version: int
    selected_suite: int
    raw_extensions: bytes = b""

    def __post_init__(self) -> None:
        if not 0 <= self.negotiated_version <= 0xFFFF:
            raise ValueError("negotiated_version out of range")
        if not 0 <= self.selected_suite <= 0xFFFF:
            raise ValueError("selected_suite out of range")

    @property
    def suite_known(self) -> bool:
        return self.selected_suite in suites.REGISTRY


def sni_extension(hostname: str) -> tuple[int, bytes]:
    """Build a server_name extension entry for one DNS hostname."""
    raw = hostname.encode("ascii")
    entry = struct.pack(">BH", 0, len(raw)) + raw
    body = struct.pack(">H", len(entry)) + entry
    return (SNI_EXTENSION_TYPE, body)


def extract_sni(msg: ClientHelloMsg) -> Optional[str]:
    """Hostname from the first well-formed SNI extension, else None."""
    for etype, body in msg.extensions:
        if etype != SNI_EXTENSION_TYPE:
            continue
        try:
            cur = _Cursor(body)
            list_len = cur.u16()
            entries = _Cursor(cur.take(list_len))
            while entries.remaining():
                name_type = entries.u8()
                name = entries.take(entries.u16())
                if name_type == 0:
                    return name.decode("ascii")
        except (WireError, UnicodeDecodeError):
            return None
    return None


def _u16(v: int, what: str) -> bytes:
    if v > 0xFFFF:
        raise OversizeMessage("%s length %d overflows 2 bytes" % (what, v))
    return struct.pack(">H", v)


def _u24(v: int, what: str) -> bytes:
    if v > 0xFFFFFF:
        raise OversizeMessage("%s length %d overflows 3 bytes" % (what, v))
    return struct.pack(">I", v)[1:]


def _record(content_type: int, version: int, payload: bytes) -> bytes:
    return bytes([content_type]) + struct.pack(">H", version) + _u16(len(payload), "record") + payload


def _handshake(msg_type: int, body: bytes) -> bytes:
    return bytes([msg_type]) + _u24(len(body), "handshake") + body


def _extension_block(extensions: tuple[tuple[int, bytes], ...]) -> bytes:
    parts = []
    for etype, body in extensions:
        parts.append(struct.pack(">H", etype) + _u16(len(body), "extension") + body)
    blob = b"".join(parts)
    return _u16(len(blob), "extension block") + blob


def encode_client_hello(msg: ClientHelloMsg) -> bytes:
    body = struct.pack(">H", msg.legacy_version)
    body += msg.random
    body += bytes([len(msg.session_id)]) + msg.session_id
    body += _u16(2 * len(msg.cipher_suites), "cipher_suites")
    body += b"".join(struct.pack(">H", cp) for cp in msg.cipher_suites)
    body += bytes([len(msg.compression)]) + bytes(msg.compression)
    if msg.extensions:
        body += _extension_block(msg.extensions)
    return _record(CONTENT_HANDSHAKE, msg.legacy_version, _handshake(HS_CLIENT_HELLO, body))


def encode_server_hello(
    summary: ServerHelloSummary,
    random: bytes = b"\x00" * 32,
    session_id: bytes = b"",
) -> bytes:
    if len(random) != 32:
        raise ValueError("random must be exactly 32 bytes")
    if len(session_id) > 32:
        raise ValueError("session_id must be 0-32 bytes")
    body = struct.pack(">H", summary.negotiated_version)
    body += random
    body += bytes([len(session_id)]) + session_id
    body += struct.pack(">H", summary.selected_suite)
    body += b"\x00"  # null compression
    body += summary.raw_extensions
    return _record(
        CONTENT_HANDSHAKE, summary.negotiated_version, _handshake(HS_SERVER_HELLO, body)
    )


def encode_alert(alert: AlertMsg, record_version: int = TLS1_2) -> bytes:
    return _record(CONTENT_ALERT, record_version, bytes([alert.level.value, alert.description]))


class _Cursor:
    """Bounds-checked reader; every underrun is a MalformedRecord."""

    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.remaining() < n:
            raise MalformedRecord("truncated: wanted %d bytes, have %d" % (n, self.remaining()))
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u24(self) -> int:
        hi, lo = struct.unpack(">BH", self.take(3))
        return (hi << 16) | lo


def _read_record(data: bytes) -> tuple[int, bytes]:
    """First record's (content_type, payload); trailing records ignored."""
    cur = _Cursor(data)
    content_type = cur.u8()
    cur.u16()  # record version, informational only
    payload = cur.take(cur.u16())
    return content_type, payload


def _read_handshake(payload: bytes) -> tuple[int, _Cursor]:
    cur = _Cursor(payload)
    msg_type = cur.u8()
    body = cur.take(cur.u24())
    return msg_type, _Cursor(body)


def decode_client_hello(data: bytes) -> ClientHelloMsg:
    content_type, payload = _read_record(data)
    if content_type != CONTENT_HANDSHAKE:
        raise NotClientHello("content type %d is not handshake" % content_type)
    msg_type, cur = _read_handshake(payload)
    if msg_type != HS_CLIENT_HELLO:
        raise NotClientHello("handshake type %d is not client_hello" % msg_type)
    version = cur.u16()
    random = cur.take(32)
    session_id = cur.take(cur.u8())
    suites_len = cur.u16()
    if suites_len % 2:
        raise MalformedRecord("odd cipher_suites length")
    suites_raw = _Cursor(cur.take(suites_len))
    cipher_suites = tuple(suites_raw.u16() for _ in range(suites_len // 2))
    compression = tuple(cur.take(cur.u8()))
    extensions: tuple[tuple[int, bytes], ...] = ()
    if cur.remaining():
        block = _Cursor(cur.take(cur.u16()))
        parsed = []
        while block.remaining():
            etype = block.u16()
            parsed.append((etype, block.take(block.u16())))
        extensions = tuple(parsed)
    if cur.remaining():
        raise MalformedRecord("%d trailing bytes inside client_hello" % cur.remaining())
    try:
        return ClientHelloMsg(
            legacy_version=version,
            random=random,
            cipher_suites=cipher_suites,
            session_id=session_id,
            compression=compression,
            extensions=extensions,
        )
    except ValueError as exc:
        raise MalformedRecord(str(exc)) from exc


def decode_server_hello(data: bytes) -> ServerHelloSummary:
    content_type, payload = _read_record(data)
    if content_type != CONTENT_HANDSHAKE:
        raise NotServerHello("content type %d is not handshake" % content_type)
    msg_type, cur = _read_handshake(payload)
    if msg_type != HS_SERVER_HELLO:
        raise NotServerHello("handshake type %d is not server_hello" % msg_type)
    version = cur.u16()
    cur.take(32)  # server random, unused
    cur.take(cur.u8())  # session_id, unused
    suite = cur.u16()
    cur.u8()  # compression method
    # Anything left is the extensions block, kept verbatim.  Trailing
    # handshake messages after the ServerHello live outside `cur` and are
    # ignored by construction.
    raw_extensions = cur.take(cur.remaining())
    try:
        return ServerHelloSummary(
            negotiated_version=version, selected_suite=suite, raw_extensions=raw_extensions
        )
    except ValueError as exc:
        raise MalformedRecord(str(exc)) from exc


def decode_alert(data: bytes) -> AlertMsg:
    content_type, payload = _read_record(data)
    if content_type != CONTENT_ALERT:
        raise NotAlert("content type %d is not alert" % content_type)
    if len(payload) != 2:
        raise MalformedRecord("alert payload must be exactly 2 bytes")
    level, description = payload[0], payload[1]
    if level not in (AlertLevel.WARNING.value, AlertLevel.FATAL.value):
        raise MalformedRecord("unknown alert level %d" % level)
    return AlertMsg(level=AlertLevel(level), description=description)
