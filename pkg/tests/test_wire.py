import json
import math
import struct

import pytest
from hypothesis import given, settings, strategies as st

from simulacra.clock import PlaybackConfig
from simulacra.wire.osc import (Blob, OscDecodeError, OscEncodeError, OscMessage,
                                OscPaddingError, OscTruncatedError, OscTypeTagError,
                                osc_decode, osc_encode)
from simulacra.wire.sync import run_sync_harness
from simulacra.wire.topics import (PayloadError, TopicContract, TopicMessage,
                                   UnregisteredTopicError, default_contract, topic_matches)
from simulacra.wire.transport import (LatencyModel, LoopbackTransport,
                                      SimulatedNetworkTransport, publish)

GOLDEN = bytes.fromhex("2F73696D2F726F77000000002C690000" "0000002A")


def _ref_string(s: bytes) -> bytes:
    """NUL terminator plus zero padding to the next multiple of four."""
    n = len(s) + 1
    return s + b"\0" * (n + (-n) % 4 - len(s))


def _ref_encode(address: str, args) -> bytes:
    """Independent encoder: builds the packet field by field with struct."""
    tags = ","
    body = b""
    for a in args:
        if isinstance(a, int):
            tags += "i"
            body += struct.pack(">i", a)
        elif isinstance(a, float):
            tags += "f"
            body += struct.pack(">f", a)
        elif isinstance(a, str):
            tags += "s"
            body += _ref_string(a.encode())
        else:
            tags += "b"
            body += struct.pack(">i", len(a)) + a + b"\0" * ((-len(a)) % 4)
    return _ref_string(address.encode()) + _ref_string(tags.encode()) + body


# -------------------------------------------------------------------- codec
def test_golden_vector():
    assert _ref_encode("/sim/row", [42]) == GOLDEN
    assert osc_encode(OscMessage("/sim/row", [42])) == GOLDEN
    back = osc_decode(GOLDEN)
    assert back.address == "/sim/row" and back.args == [42]


def test_minimal_message():
    assert osc_encode(OscMessage("/")) == b"/\0\0\0,\0\0\0"
    assert osc_decode(b"/\0\0\0,\0\0\0").args == []


def test_mixed_arguments_match_reference():
    args = [7, 1.5, "abc", b"\x01\x02\x03\x04\x05", "", -3]
    assert osc_encode(OscMessage("/a/bc", args)) == _ref_encode("/a/bc", args)


def test_empty_buffer_is_truncated():
    with pytest.raises(OscTruncatedError, match="truncated"):
        osc_decode(b"")


def test_unknown_type_tag_reports_offset():
    buf = bytearray(GOLDEN)
    buf[13] = ord("q")
    with pytest.raises(OscTypeTagError, match="unknown type tag") as info:
        osc_decode(bytes(buf))
    assert info.value.offset == 13


def test_truncated_argument():
    with pytest.raises(OscTruncatedError) as info:
        osc_decode(GOLDEN[:16])
    assert info.value.offset == 16


def test_bad_padding():
    buf = bytearray(GOLDEN)
    buf[9] = 1
    with pytest.raises(OscPaddingError) as info:
        osc_decode(bytes(buf))
    assert info.value.offset == 9
    with pytest.raises(OscPaddingError):
        osc_decode(GOLDEN + b"\0")


def test_decode_errors_are_distinct():
    assert len({OscTruncatedError, OscPaddingError, OscTypeTagError}) == 3
    for cls in (OscTruncatedError, OscPaddingError, OscTypeTagError):
        assert issubclass(cls, OscDecodeError)


@pytest.mark.parametrize("msg", [
    OscMessage("sim/row", [1]), OscMessage("/x", [True]), OscMessage("/x", [2**31]),
    OscMessage("/x", [object()]), OscMessage("/x", [1.0e39]), OscMessage("/x", ["a\0b"]),
])
def test_encode_rejects(msg):
    with pytest.raises(OscEncodeError):
        osc_encode(msg)


_text = st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters="\0"),
                max_size=30)
_arg = st.one_of(
    st.integers(-2**31, 2**31 - 1),
    st.floats(width=32, allow_nan=False),
    _text,
    st.binary(max_size=4096),
)


@settings(max_examples=1000)
@given(parts=st.lists(st.text("abcxyz09_", min_size=1, max_size=8), min_size=1, max_size=4),
       args=st.lists(_arg, max_size=6))
def test_round_trip_fuzz(parts, args):
    msg = OscMessage("/" + "/".join(parts), args)
    buf = osc_encode(msg)
    assert len(buf) % 4 == 0
    assert buf == _ref_encode(msg.address, args)
    back = osc_decode(buf)
    assert back.address == msg.address and back.args == args


def test_blob_wrapper_and_nan():
    back = osc_decode(osc_encode(OscMessage("/b", [Blob(b"xyz"), math.nan])))
    assert back.args[0] == b"xyz" and math.isnan(back.args[1])


# ------------------------------------------------------------------- topics
@pytest.mark.parametrize("pattern,topic,hit", [
    ("simulacra/snd/#", "simulacra/snd/grain", True),
    ("simulacra/snd/#", "simulacra/snd", True),
    ("simulacra/#", "simulacra/fab/solenoid", True),
    ("simulacra/+/row", "simulacra/clock/row", True),
    ("simulacra/+/row", "simulacra/clock/x/row", False),
    ("simulacra/clock/row", "simulacra/clock", False),
    ("#", "anything/at/all", True),
])
def test_topic_matching(pattern, topic, hit):
    assert topic_matches(pattern, topic) is hit


def test_contract_validation():
    c = default_contract()
    c.validate(TopicMessage.from_json("simulacra/clock/row", {"row": 1, "t_sim_ms": 30}))
    with pytest.raises(UnregisteredTopicError):
        c.validate(TopicMessage.from_json("simulacra/nope", {}))
    with pytest.raises(UnregisteredTopicError):
        c.validate(TopicMessage.from_json("simulacra/snd/+", {}))
    with pytest.raises(PayloadError, match="row"):
        c.validate(TopicMessage.from_json("simulacra/clock/row", {"t_sim_ms": 30}))
    with pytest.raises(PayloadError):
        c.validate(TopicMessage.from_json("simulacra/clock/row", {"row": "1", "t_sim_ms": 3}))
    with pytest.raises(PayloadError):
        c.validate(TopicMessage("simulacra/rate", b"not json"))


@pytest.mark.parametrize("topic", sorted(default_contract().topics))
def test_every_required_field_is_enforced(topic):
    c = default_contract()
    schema = c.topics[topic]
    concrete = topic.replace("#", "sustain")
    sample = {"int": 1, "number": 1.5, "string": "s", "boolean": True}
    full = {k: sample[v] for k, v in schema["required"].items()}
    c.validate(TopicMessage.from_json(concrete, full))
    for k in full:
        missing = {n: v for n, v in full.items() if n != k}
        with pytest.raises(PayloadError):
            c.validate(TopicMessage.from_json(concrete, missing))


def test_contract_file_loads_from_path(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"topics": {"a/b": {"required": {"x": "int"}}}}))
    c = TopicContract.load(p)
    c.validate(TopicMessage.from_json("a/b", {"x": 3}))


# --------------------------------------------------------------- transports
def test_loopback_identity():
    net = LoopbackTransport()
    sub = net.subscribe("simulacra/clock/row")
    msg = TopicMessage("simulacra/clock/row", b'{"row":42,"t_sim_ms":1260}')
    ack = publish(msg, net)
    assert ack.subscribers == 1
    assert sub.drain()[0].message.payload == b'{"row":42,"t_sim_ms":1260}'


def test_loopback_rejects_unregistered():
    with pytest.raises(UnregisteredTopicError):
        LoopbackTransport().publish(TopicMessage.from_json("other/topic", {}))


def test_loopback_full_replay_in_order():
    net = LoopbackTransport()
    subs = [net.subscribe("simulacra/clock/row"), net.subscribe("simulacra/#")]
    for row in range(180_000):
        net.publish(TopicMessage("simulacra/clock/row",
                                 b'{"row":%d,"t_sim_ms":%d}' % (row, row * 30)))
    for s in subs:
        got = s.drain()
        assert len(got) == 180_000
        assert [d.seq for d in got] == list(range(180_000))
        assert json.loads(got[-1].message.payload)["row"] == 179_999


def test_simulated_network_keeps_per_subscriber_order():
    net = SimulatedNetworkTransport(LatencyModel(10.0, 30.0, 0.1), seed=3)
    subs = [net.subscribe("simulacra/clock/row") for _ in range(3)]
    for row in range(2000):
        net.publish(TopicMessage.from_json("simulacra/clock/row", {"row": row, "t_sim_ms": 0}),
                    now_ms=row * 5.0)
    net.advance(math.inf)
    total = 0
    for s in subs:
        got = s.drain()
        seqs = [d.seq for d in got]
        assert seqs == sorted(seqs)
        assert all(d.delivered_ms >= d.sent_ms for d in got)
        total += len(got)
    assert total + net.dropped == 6000
    assert 0.07 * 6000 < net.dropped < 0.13 * 6000


def test_latency_model_validation():
    with pytest.raises(ValueError):
        LatencyModel(-1.0).validate()
    with pytest.raises(ValueError):
        LatencyModel(loss_p=1.5).validate()


# --------------------------------------------------------------------- sync
def test_sync_zero_latency():
    rep = run_sync_harness(3, LatencyModel(), PlaybackConfig(), 5000)
    assert rep.max_skew_rows == 0 and rep.dropped == 0 and rep.delivered == 15_000


def test_sync_fixed_latency_shifts_everyone_equally():
    rep = run_sync_harness(3, LatencyModel(10.0), PlaybackConfig(), 5000)
    assert rep.max_skew_rows == 0
    assert math.isclose(rep.mean_latency_ms, 10.0)


def test_sync_jitter_within_one_row():
    rep = run_sync_harness(3, LatencyModel(10.0, 10.0), PlaybackConfig(), 20_000, seed=1)
    assert rep.max_skew_rows <= 1
    assert rep.delivered == 60_000


def test_sync_large_jitter_is_detected():
    rep = run_sync_harness(3, LatencyModel(0.0, 200.0), PlaybackConfig(), 3000, seed=1)
    assert rep.max_skew_rows > 1


def test_sync_report_json():
    rep = run_sync_harness(2, LatencyModel(5.0, 2.0, 0.01), PlaybackConfig(), 1000, every=10)
    out = rep.to_json()
    assert out["published"] == 100
    assert out["delivered"] + out["dropped"] == 200
    assert set(out["max_lag_rows"]) == {"sub0", "sub1"}


# ---------------------------------------------------------------------- udp
def test_udp_loopback():
    from simulacra.wire.udp import OscUdpReceiver, OscUdpSender
    with OscUdpReceiver(port=0) as rx, OscUdpSender(port=rx.port) as tx:
        tx.send(OscMessage("/sim/row", [42]))
        tx.send(GOLDEN)
        a, b = rx.recv(2.0), rx.recv(2.0)
    assert a.args == [42] and b.address == "/sim/row"
