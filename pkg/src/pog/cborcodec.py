"""Deterministic CBOR subset codec for the attestation wire format.

Only the types the wire format needs are supported: unsigned integers,
byte strings, text strings, arrays, maps, booleans and null. Encoding is
canonical (shortest-form lengths, definite lengths only); maps are encoded
in the insertion order of the dict handed in, which is how the fixed key
order of the attestation payload and document is produced. The decoder is
strict: it rejects indefinite lengths, non-minimal length encodings,
duplicate map keys and trailing garbage, and every error carries the byte
offset at which decoding failed.

Integers (values and lengths) are capped at 2**53 - 1 so that every
conforming decoder, in any language, sees the identical accept set.
"""

from __future__ import annotations

MAX_SAFE_INTEGER = 2**53 - 1

MAJOR_UINT = 0
MAJOR_BYTES = 2
MAJOR_TEXT = 3
MAJOR_ARRAY = 4
MAJOR_MAP = 5
MAJOR_SIMPLE = 7

_SIMPLE_FALSE = 20
_SIMPLE_TRUE = 21
_SIMPLE_NULL = 22

_MAX_DEPTH = 32


class CborEncodeError(ValueError):
    """Raised when a value cannot be represented in the supported subset."""


class CborDecodeError(ValueError):
    """Malformed or unsupported CBOR input.

    Attributes:
        offset: byte offset into the input at which the problem was found.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _encode_head(major: int, value: int) -> bytes:
    if value < 24:
        return bytes([(major << 5) | value])
    if value <= 0xFF:
        return bytes([(major << 5) | 24, value])
    if value <= 0xFFFF:
        return bytes([(major << 5) | 25]) + value.to_bytes(2, "big")
    if value <= 0xFFFFFFFF:
        return bytes([(major << 5) | 26]) + value.to_bytes(4, "big")
    if value <= 0xFFFFFFFFFFFFFFFF:
        return bytes([(major << 5) | 27]) + value.to_bytes(8, "big")
    raise CborEncodeError(f"value too large for CBOR head: {value}")


def encode(obj: object) -> bytes:
    """Encode ``obj`` canonically.

    Dicts are written in iteration order; callers are responsible for
    building them in the wire order they want.
    """
    out = bytearray()
    _encode_into(obj, out, 0)
    return bytes(out)


def _encode_into(obj: object, out: bytearray, depth: int) -> None:
    if depth > _MAX_DEPTH:
        raise CborEncodeError("nesting too deep")
    if obj is None:
        out.append(0xF6)
    elif obj is True:
        out.append(0xF5)
    elif obj is False:
        out.append(0xF4)
    elif isinstance(obj, int):
        if obj < 0:
            raise CborEncodeError("negative integers are not in the supported subset")
        if obj > MAX_SAFE_INTEGER:
            raise CborEncodeError("integer exceeds the interoperable range")
        out += _encode_head(MAJOR_UINT, obj)
    elif isinstance(obj, (bytes, bytearray)):
        out += _encode_head(MAJOR_BYTES, len(obj))
        out += obj
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out += _encode_head(MAJOR_TEXT, len(raw))
        out += raw
    elif isinstance(obj, (list, tuple)):
        out += _encode_head(MAJOR_ARRAY, len(obj))
        for item in obj:
            _encode_into(item, out, depth + 1)
    elif isinstance(obj, dict):
        out += _encode_head(MAJOR_MAP, len(obj))
        for key, value in obj.items():
            _encode_into(key, out, depth + 1)
            _encode_into(value, out, depth + 1)
    else:
        raise CborEncodeError(f"unsupported type: {type(obj).__name__}")


class Decoder:
    """Strict pull-decoder over a byte buffer.

    Typed ``read_*`` methods let structured parsers (the attestation
    document parser) validate shape and report precise offsets; ``decode``
    at module level wraps this for whole-value decoding.
    """

    def __init__(self, data: bytes):
        self._data = data
        self.offset = 0

    def exhausted(self) -> bool:
        return self.offset >= len(self._data)

    def fail(self, message: str, offset: int | None = None) -> CborDecodeError:
        return CborDecodeError(message, self.offset if offset is None else offset)

    def _read_head(self) -> tuple[int, int, int]:
        """Return (major, value, head_offset), enforcing minimal-form lengths."""
        start = self.offset
        if start >= len(self._data):
            raise CborDecodeError("unexpected end of input", start)
        initial = self._data[start]
        major = initial >> 5
        info = initial & 0x1F
        self.offset += 1
        if info < 24:
            return major, info, start
        if info == 31:
            raise CborDecodeError("indefinite lengths are not allowed", start)
        if info > 27:
            raise CborDecodeError(f"reserved additional info {info}", start)
        width = 1 << (info - 24)
        if self.offset + width > len(self._data):
            raise CborDecodeError("truncated length field", start)
        value = int.from_bytes(self._data[self.offset : self.offset + width], "big")
        self.offset += width
        minimal = {1: 24, 2: 0x100, 4: 0x10000, 8: 0x100000000}[width]
        if value < minimal:
            raise CborDecodeError("non-minimal length encoding", start)
        if value > MAX_SAFE_INTEGER:
            raise CborDecodeError("integer exceeds the interoperable range", start)
        return major, value, start

    def _take(self, n: int, start: int) -> bytes:
        if self.offset + n > len(self._data):
            raise CborDecodeError("truncated payload", start)
        chunk = self._data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def read_uint(self, what: str = "unsigned integer") -> int:
        major, value, start = self._read_head()
        if major != MAJOR_UINT:
            raise CborDecodeError(f"expected {what}", start)
        return value

    def read_bytes(self, what: str = "byte string") -> bytes:
        major, value, start = self._read_head()
        if major != MAJOR_BYTES:
            raise CborDecodeError(f"expected {what}", start)
        return bytes(self._take(value, start))

    def read_bytes_or_null(self, what: str = "byte string") -> bytes | None:
        if not self.exhausted() and self._data[self.offset] == 0xF6:
            self.offset += 1
            return None
        return self.read_bytes(what)

    def read_text(self, what: str = "text string") -> str:
        major, value, start = self._read_head()
        if major != MAJOR_TEXT:
            raise CborDecodeError(f"expected {what}", start)
        raw = self._take(value, start)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise CborDecodeError("invalid UTF-8 in text string", start) from None

    def read_array_header(self, what: str = "array") -> int:
        major, value, start = self._read_head()
        if major != MAJOR_ARRAY:
            raise CborDecodeError(f"expected {what}", start)
        return value

    def read_map_header(self, what: str = "map") -> int:
        major, value, start = self._read_head()
        if major != MAJOR_MAP:
            raise CborDecodeError(f"expected {what}", start)
        return value

    def read_any(self, depth: int = 0) -> object:
        if depth > _MAX_DEPTH:
            raise self.fail("nesting too deep")
        major, value, start = self._read_head()
        if major == MAJOR_UINT:
            return value
        if major == MAJOR_BYTES:
            return bytes(self._take(value, start))
        if major == MAJOR_TEXT:
            raw = self._take(value, start)
            try:
                return raw.decode("utf-8")
            except UnicodeDecodeError:
                raise CborDecodeError("invalid UTF-8 in text string", start) from None
        if major == MAJOR_ARRAY:
            return [self.read_any(depth + 1) for _ in range(value)]
        if major == MAJOR_MAP:
            result: dict = {}
            for _ in range(value):
                key = self.read_any(depth + 1)
                if not isinstance(key, (int, str)):
                    raise CborDecodeError("unsupported map key type", start)
                if key in result:
                    raise CborDecodeError(f"duplicate map key {key!r}", start)
                result[key] = self.read_any(depth + 1)
            return result
        if major == MAJOR_SIMPLE:
            if value == _SIMPLE_NULL:
                return None
            if value == _SIMPLE_TRUE:
                return True
            if value == _SIMPLE_FALSE:
                return False
            raise CborDecodeError(f"unsupported simple value {value}", start)
        raise CborDecodeError(f"unsupported major type {major}", start)


def decode(data: bytes) -> object:
    """Decode one complete CBOR value, rejecting trailing bytes."""
    decoder = Decoder(data)
    value = decoder.read_any()
    if not decoder.exhausted():
        raise CborDecodeError("trailing bytes after value", decoder.offset)
    return value
