import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tpm_reconcile.protocol.messages import (
    Abort,
    AbortReason,
    Digest,
    DigestAck,
    Done,
    FrameBuffer,
    FrameError,
    Hello,
    HelloAck,
    Input,
    Output,
    decode_frame,
    encode_frame,
    pack_inputs,
    unpack_inputs,
)

# (message, hand-assembled frame bytes)
GOLDEN = [
    (
        Hello(4, 16, 4, 256, bytes(range(16))),
        "5450" "01" "01" "00000019" "0004" "0010" "04" "00000100" "000102030405060708090a0b0c0d0e0f",
    ),
    (HelloAck(True), "5450" "01" "02" "00000001" "01"),
    (HelloAck(False), "5450" "01" "02" "00000001" "00"),
    (Input(7, 2, -1, bytes.fromhex("a580")), "5450" "01" "03" "00000008" "00000007" "02" "ff" "a580"),
    (Output(7, 2, 1), "5450" "01" "04" "00000006" "00000007" "02" "01"),
    (Digest(5, b"\xab" * 32), "5450" "01" "05" "00000024" "00000005" + "ab" * 32),
    (DigestAck(False), "5450" "01" "06" "00000001" "00"),
    (DigestAck(True), "5450" "01" "06" "00000001" "01"),
    (Done(302), "5450" "01" "07" "00000004" "0000012e"),
    (Abort(AbortReason.PARAMETER_MISMATCH), "5450" "01" "08" "00000001" "01"),
    (Abort(AbortReason.RETRY_EXHAUSTED), "5450" "01" "08" "00000001" "02"),
    (Abort(AbortReason.ITERATION_BUDGET), "5450" "01" "08" "00000001" "03"),
    (Abort(AbortReason.PROTOCOL_VIOLATION), "5450" "01" "08" "00000001" "04"),
]


@pytest.mark.parametrize("msg,frame_hex", GOLDEN, ids=lambda v: type(v).__name__ if not isinstance(v, str) else "")
def test_golden_frames(msg, frame_hex):
    frame = bytes.fromhex(frame_hex)
    assert encode_frame(msg) == frame
    assert decode_frame(frame) == msg


def test_pack_inputs_layout():
    x = np.array([[1, -1, 1, -1, -1, 1, -1, 1, 1, -1]], dtype=np.int8)
    assert pack_inputs(x) == bytes.fromhex("a580")
    assert np.array_equal(unpack_inputs(b"\xa5\x80", 1, 10), x)
    assert np.array_equal(unpack_inputs(b"\xa5\x80", 2, 5), x.reshape(2, 5))
    with pytest.raises(FrameError):
        unpack_inputs(b"\xa5", 1, 10)


@given(st.integers(1, 8), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_pack_round_trip(K, N, seed):
    x = (np.random.default_rng(seed).integers(0, 2, (K, N)) * 2 - 1).astype(np.int8)
    packed = pack_inputs(x)
    assert len(packed) == -(-(K * N) // 8)
    assert np.array_equal(unpack_inputs(packed, K, N), x)


@pytest.mark.parametrize(
    "frame_hex",
    [
        "5351" "01" "02" "00000001" "01",  # bad magic
        "5450" "02" "02" "00000001" "01",  # bad version
        "5450" "01" "09" "00000001" "01",  # unknown type
        "5450" "01" "02" "00000002" "01",  # length disagrees
        "5450" "01" "02" "00000001" "02",  # boolean out of range
        "5450" "01" "04" "00000006" "00000007" "02" "00",  # tau byte
        "5450" "01" "08" "00000001" "09",  # abort reason
        "5450" "01" "07" "00000003" "000001",  # DONE too short
        "5450",  # truncated header
    ],
)
def test_malformed_frames_rejected(frame_hex):
    with pytest.raises(FrameError):
        decode_frame(bytes.fromhex(frame_hex))


def test_encode_rejects_bad_fields():
    with pytest.raises(FrameError):
        encode_frame(Output(1, 0, 0))
    with pytest.raises(FrameError):
        encode_frame(Hello(1, 1, 1, 2, b"short"))
    with pytest.raises(FrameError):
        encode_frame(Digest(1, b"\x00" * 31))
    with pytest.raises(TypeError):
        encode_frame("HELLO")


def test_frame_buffer_yields_whole_frames_only():
    stream = b"".join(encode_frame(m) for m, _ in GOLDEN)
    buf = FrameBuffer()
    got = []
    for i in range(0, len(stream), 3):
        got.extend(buf.feed(stream[i:i + 3]))
    assert got == [m for m, _ in GOLDEN]
    assert len(buf) == 0
    partial = encode_frame(Done(1))[:-1]
    assert list(buf.feed(partial)) == []
    assert len(buf) == len(partial)
