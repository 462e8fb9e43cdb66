"""OSC 1.0 messages: int32, float32, string and blob arguments, no bundles."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

_INT32 = struct.Struct(">i")
_FLOAT32 = struct.Struct(">f")


class OscEncodeError(ValueError):
    pass


class OscDecodeError(ValueError):
    """Malformed OSC packet; ``offset`` is the byte where decoding failed."""
    reason = "malformed"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{self.reason}: {message} at byte {offset}")
        self.offset = offset


class OscTruncatedError(OscDecodeError):
    reason = "truncated"


class OscPaddingError(OscDecodeError):
    reason = "bad padding"


class OscTypeTagError(OscDecodeError):
    reason = "unknown type tag"


@dataclass(frozen=True)
class Blob:
    data: bytes


@dataclass
class OscMessage:
    address: str
    args: list = field(default_factory=list)
    types: str | None = None  # inferred from args when omitted

    def type_tags(self) -> str:
        if self.types is not None:
            if len(self.types) != len(self.args):
                raise OscEncodeError("type string and argument list differ in length")
            return self.types
        return "".join(_infer(a) for a in self.args)


def _infer(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        raise OscEncodeError("booleans are not a supported OSC argument type")
    if isinstance(value, (int, np.integer)):
        return "i"
    if isinstance(value, (float, np.floating)):
        return "f"
    if isinstance(value, str):
        return "s"
    if isinstance(value, (bytes, bytearray, memoryview, Blob)):
        return "b"
    raise OscEncodeError(f"unsupported argument type {type(value).__name__}")


def _pad(n: int) -> int:
    return (n + 3) & ~3


def _osc_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    if b"\0" in raw:
        raise OscEncodeError("strings may not contain NUL")
    return raw + b"\0" * (_pad(len(raw) + 1) - len(raw))


def _osc_blob(b) -> bytes:
    raw = bytes(b.data if isinstance(b, Blob) else b)
    return _INT32.pack(len(raw)) + raw + b"\0" * (_pad(len(raw)) - len(raw))


def osc_encode(msg: OscMessage) -> bytes:
    if not isinstance(msg.address, str) or not msg.address.startswith("/"):
        raise OscEncodeError("address must start with '/'")
    tags = msg.type_tags()
    out = [_osc_string(msg.address), _osc_string("," + tags)]
    for tag, value in zip(tags, msg.args):
        if tag == "i":
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
                raise OscEncodeError("int32 argument must be an integer")
            if not -2**31 <= int(value) < 2**31:
                raise OscEncodeError(f"{value} does not fit in int32")
            out.append(_INT32.pack(int(value)))
        elif tag == "f":
            v = float(value)
            if math.isfinite(v) and abs(v) > 3.4028234663852886e38:
                raise OscEncodeError(f"{v} does not fit in float32")
            out.append(_FLOAT32.pack(v))
        elif tag == "s":
            if not isinstance(value, str):
                raise OscEncodeError("string argument must be str")
            out.append(_osc_string(value))
        elif tag == "b":
            if not isinstance(value, (bytes, bytearray, memoryview, Blob)):
                raise OscEncodeError("blob argument must be bytes")
            out.append(_osc_blob(value))
        else:
            raise OscEncodeError(f"unsupported type tag {tag!r}")
    return b"".join(out)


def _read_string(buf: bytes, off: int) -> tuple[str, int]:
    end = buf.find(b"\0", off)
    if end < 0:
        raise OscTruncatedError("unterminated string", len(buf))
    stop = off + _pad(end - off + 1)
    if stop > len(buf):
        raise OscTruncatedError("string padding runs past end", len(buf))
    for i in range(end + 1, stop):
        if buf[i] != 0:
            raise OscPaddingError("nonzero string padding", i)
    try:
        return buf[off:end].decode("utf-8"), stop
    except UnicodeDecodeError as exc:
        raise OscDecodeError("string is not UTF-8", off + exc.start) from None


def _need(buf: bytes, off: int, n: int, what: str) -> None:
    if off + n > len(buf):
        raise OscTruncatedError(f"{what} needs {n} bytes", len(buf))


def osc_decode(buf: bytes) -> OscMessage:
    buf = bytes(buf)
    if not buf:
        raise OscTruncatedError("empty packet", 0)
    if len(buf) % 4:
        raise OscPaddingError("packet length is not a multiple of 4", len(buf))
    if buf[0:1] != b"/":
        raise OscDecodeError("address must start with '/'", 0)
    address, off = _read_string(buf, 0)
    if off >= len(buf):
        raise OscTruncatedError("missing type tag string", off)
    if buf[off:off + 1] != b",":
        raise OscTypeTagError("type tag string must start with ','", off)
    tag_off = off + 1
    tags, off = _read_string(buf, off)
    tags = tags[1:]
    args = []
    for k, tag in enumerate(tags):
        if tag == "i":
            _need(buf, off, 4, "int32")
            args.append(_INT32.unpack_from(buf, off)[0])
            off += 4
        elif tag == "f":
            _need(buf, off, 4, "float32")
            args.append(_FLOAT32.unpack_from(buf, off)[0])
            off += 4
        elif tag == "s":
            s, off = _read_string(buf, off)
            args.append(s)
        elif tag == "b":
            _need(buf, off, 4, "blob size")
            n = _INT32.unpack_from(buf, off)[0]
            if n < 0:
                raise OscDecodeError("negative blob size", off)
            off += 4
            _need(buf, off, _pad(n), "blob")
            args.append(buf[off:off + n])
            for i in range(off + n, off + _pad(n)):
                if buf[i] != 0:
                    raise OscPaddingError("nonzero blob padding", i)
            off += _pad(n)
        else:
            raise OscTypeTagError(repr(tag), tag_off + k)
    if off != len(buf):
        raise OscPaddingError("trailing bytes after last argument", off)
    return OscMessage(address, args, tags)
