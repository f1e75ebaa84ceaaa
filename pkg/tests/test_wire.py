"""Codec round-trips, framing arithmetic, and the captured golden vector.

tests/fixtures/clienthello_openssl_tls12.hex is a ClientHello emitted by
an unmodified OpenSSL-backed client connecting to example.com; it anchors
the decoder and the SNI encoding to an independent implementation.
"""

import pathlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from befs import wire
from befs.suites import DEFAULT
from befs.wire import (
    TLS1_0,
    TLS1_1,
    TLS1_2,
    AlertLevel,
    AlertMsg,
    ClientHelloMsg,
    MalformedRecord,
    NotAlert,
    NotClientHello,
    NotServerHello,
    OversizeMessage,
    ServerHelloSummary,
    decode_alert,
    decode_client_hello,
    decode_server_hello,
    encode_alert,
    encode_client_hello,
    encode_server_hello,
)

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

versions = st.sampled_from([TLS1_0, TLS1_1, TLS1_2])
suite_lists = st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=40).map(tuple)
randoms = st.binary(min_size=32, max_size=32)
session_ids = st.binary(min_size=0, max_size=32)
compressions = st.lists(st.integers(0, 255), min_size=1, max_size=4).map(tuple)
extension_lists = st.lists(
    st.tuples(st.integers(0, 0xFFFF), st.binary(max_size=64)), max_size=5
).map(tuple)

client_hellos = st.builds(
    ClientHelloMsg,
    legacy_version=versions,
    random=randoms,
    cipher_suites=suite_lists,
    session_id=session_ids,
    compression=compressions,
    extensions=extension_lists,
)

server_hellos = st.builds(
    ServerHelloSummary,
    negotiated_version=st.integers(0, 0xFFFF),
    selected_suite=st.integers(0, 0xFFFF),
    raw_extensions=st.binary(max_size=64),
)

alerts = st.builds(
    AlertMsg,
    level=st.sampled_from(list(AlertLevel)),
    description=st.integers(0, 255),
)


def make_ch(suites=(0xC02B,), **kw):
    kw.setdefault("legacy_version", TLS1_2)
    kw.setdefault("random", bytes(range(32)))
    return ClientHelloMsg(cipher_suites=tuple(suites), **kw)


@given(client_hellos)
def test_client_hello_round_trip(msg):
    assert decode_client_hello(encode_client_hello(msg)) == msg


@given(server_hellos)
def test_server_hello_round_trip(summary):
    assert decode_server_hello(encode_server_hello(summary)) == summary


@given(alerts)
def test_alert_round_trip(alert):
    assert decode_alert(encode_alert(alert)) == alert


def test_minimal_ch_record_length_is_handshake_length_plus_4():
    raw = encode_client_hello(make_ch())
    record_len = int.from_bytes(raw[3:5], "big")
    handshake_len = int.from_bytes(raw[6:9], "big")
    assert record_len == handshake_len + 4
    assert len(raw) == record_len + 5


def test_fourteen_suite_ch_has_length_field_28():
    raw = encode_client_hello(make_ch(suites=DEFAULT.suites))
    # cipher_suites length sits right after version+random+empty session id.
    offset = 5 + 4 + 2 + 32 + 1
    assert int.from_bytes(raw[offset : offset + 2], "big") == 28


def test_golden_openssl_client_hello_decodes():
    raw = bytes.fromhex((FIXTURES / "clienthello_openssl_tls12.hex").read_text().strip())
    msg = decode_client_hello(raw)
    assert msg.legacy_version == TLS1_2
    assert msg.session_id == b""
    assert msg.compression == (0,)
    assert len(msg.cipher_suites) == 15
    assert msg.cipher_suites[0] == 0xC02C
    assert 0xC02F in msg.cipher_suites
    assert wire.extract_sni(msg) == "example.com"


def test_sni_encoding_matches_golden_capture():
    raw = bytes.fromhex((FIXTURES / "clienthello_openssl_tls12.hex").read_text().strip())
    golden = decode_client_hello(raw)
    golden_sni = next(body for etype, body in golden.extensions if etype == 0x0000)
    assert wire.sni_extension("example.com") == (0x0000, golden_sni)


def test_extract_sni_absent_returns_none():
    assert wire.extract_sni(make_ch()) is None


def test_alert_framing_is_seven_fixed_bytes():
    raw = encode_alert(AlertMsg(AlertLevel.FATAL, wire.HANDSHAKE_FAILURE))
    assert len(raw) == 7
    assert raw[0] == 21
    assert raw[3:5] == b"\x00\x02"
    assert raw[5] == 2
    assert raw[6] == 40


def test_decode_server_hello_ignores_trailing_messages():
    sh = ServerHelloSummary(TLS1_2, 0xC02F)
    trailing = b"\x0b\x00\x00\x01\x00"  # bogus Certificate fragment
    raw = encode_server_hello(sh)
    padded = raw[0:3] + (len(raw[5:]) + len(trailing)).to_bytes(2, "big") + raw[5:] + trailing
    assert decode_server_hello(padded) == sh
    # a second full record after the first is ignored too
    assert decode_server_hello(raw + encode_alert(AlertMsg(AlertLevel.WARNING, 0))) == sh


def test_decode_server_hello_on_alert_raises_not_server_hello():
    raw = encode_alert(AlertMsg(AlertLevel.FATAL, 40))
    with pytest.raises(NotServerHello):
        decode_server_hello(raw)


def test_decode_server_hello_truncated_raises_malformed():
    raw = encode_server_hello(ServerHelloSummary(TLS1_2, 0xC02F))
    with pytest.raises(MalformedRecord):
        decode_server_hello(raw[:-3])


def test_decode_client_hello_on_server_hello_raises():
    raw = encode_server_hello(ServerHelloSummary(TLS1_2, 0xC02F))
    with pytest.raises(NotClientHello):
        decode_client_hello(raw)


def test_decode_alert_on_handshake_raises():
    with pytest.raises(NotAlert):
        decode_alert(encode_client_hello(make_ch()))


def test_nonzero_compression_is_preserved_not_policed():
    msg = make_ch(compression=(1, 0))
    assert decode_client_hello(encode_client_hello(msg)).compression == (1, 0)


def test_unknown_suite_is_flagged_not_an_error():
    sh = decode_server_hello(encode_server_hello(ServerHelloSummary(TLS1_2, 0x4242)))
    assert sh.selected_suite == 0x4242
    assert not sh.suite_known
    assert decode_server_hello(
        encode_server_hello(ServerHelloSummary(TLS1_2, 0xC02F))
    ).suite_known


def test_oversize_extension_body_raises():
    msg = make_ch(extensions=((0x0010, b"\x00" * 70000),))
    with pytest.raises(OversizeMessage):
        encode_client_hello(msg)


def test_invariants_rejected_at_construction():
    with pytest.raises(ValueError):
        make_ch(suites=())
    with pytest.raises(ValueError):
        ClientHelloMsg(legacy_version=0x0304, random=bytes(32), cipher_suites=(1,))
    with pytest.raises(ValueError):
        ClientHelloMsg(legacy_version=TLS1_2, random=bytes(31), cipher_suites=(1,))
    with pytest.raises(ValueError):
        make_ch(session_id=bytes(33))


def test_decoded_invariant_violation_is_malformed_record():
    raw = bytearray(encode_client_hello(make_ch()))
    body_version_off = 5 + 4
    raw[body_version_off : body_version_off + 2] = b"\x03\x04"  # 1.3 code inside CH
    with pytest.raises(MalformedRecord):
        decode_client_hello(bytes(raw))


@given(st.binary(max_size=300))
def test_decoders_total_over_arbitrary_bytes(data):
    for dec in (decode_client_hello, decode_server_hello, decode_alert):
        try:
            dec(data)
        except wire.WireError:
            pass


@given(client_hellos, st.integers(0, 200), st.integers(0, 255))
@settings(max_examples=200)
def test_single_byte_mutations_never_crash_decoder(msg, pos, val):
    raw = bytearray(encode_client_hello(msg))
    raw[pos % len(raw)] = val
    try:
        decode_client_hello(bytes(raw))
    except wire.WireError:
        pass
