"""Length-prefixed binary framing for the encrypted-controller service.

Frame layout (all integers big-endian):

    4 bytes   frame length N (bytes that follow)
    1 byte    message type
    2 bytes   protocol version
    N-3 bytes payload

Payloads:
    EVAL_REQUEST : 2-byte count, then `count` ciphertexts
    EVAL_RESPONSE: 2-byte count, then `count` ciphertexts (row-major 5x18)
    ERROR        : 1-byte code, 2-byte message length, UTF-8 message

A ciphertext is two length-prefixed magnitude byte strings (2-byte length
each, minimal big-endian magnitude) for c1 and c2. Group elements are >= 1,
so magnitudes are never empty.
"""

from __future__ import annotations

import socket
import struct

from .crypto import Ciphertext

PROTOCOL_VERSION = 1

MSG_EVAL_REQUEST = 0x01
MSG_EVAL_RESPONSE = 0x02
MSG_ERROR = 0x7F

ERR_MALFORMED = 1
ERR_VERSION = 2
ERR_COUNT = 3
ERR_INTERNAL = 4

ERROR_NAMES = {
    ERR_MALFORMED: "malformed frame",
    ERR_VERSION: "protocol version mismatch",
    ERR_COUNT: "unexpected ciphertext count",
    ERR_INTERNAL: "internal service error",
}

MAX_FRAME = 1 << 20

REQUEST_COUNT = 18
RESPONSE_COUNT = 90


class ProtocolError(Exception):
    """Framing or session failure with a wire-level error code."""

    def __init__(self, code: int, reason: str):
        super().__init__(f"[{code}:{ERROR_NAMES.get(code, 'error')}] {reason}")
        self.code = code
        self.reason = reason


def encode_magnitude(x: int) -> bytes:
    if x <= 0:
        raise ValueError("magnitudes must be positive")
    return x.to_bytes((x.bit_length() + 7) // 8, "big")


def pack_ciphertexts(cts: list[Ciphertext]) -> bytes:
    parts = []
    for ct in cts:
        for half in (ct.c1, ct.c2):
            mag = encode_magnitude(half)
            parts.append(struct.pack(">H", len(mag)))
            parts.append(mag)
    return b"".join(parts)


def unpack_ciphertexts(payload: bytes, offset: int, count: int) -> tuple[list[Ciphertext], int]:
    cts = []
    for _ in range(count):
        halves = []
        for _ in range(2):
            if offset + 2 > len(payload):
                raise ProtocolError(ERR_MALFORMED, "truncated ciphertext length prefix")
            (n,) = struct.unpack_from(">H", payload, offset)
            offset += 2
            if n == 0 or offset + n > len(payload):
                raise ProtocolError(ERR_MALFORMED, "truncated ciphertext magnitude")
            halves.append(int.from_bytes(payload[offset:offset + n], "big"))
            offset += n
        cts.append(Ciphertext(*halves))
    return cts, offset


def pack_frame(msg_type: int, payload: bytes, version: int = PROTOCOL_VERSION) -> bytes:
    body = struct.pack(">BH", msg_type, version) + payload
    return struct.pack(">I", len(body)) + body


def pack_eval_request(cts: list[Ciphertext]) -> bytes:
    return pack_frame(MSG_EVAL_REQUEST, struct.pack(">H", len(cts)) + pack_ciphertexts(cts))


def pack_eval_response(cts: list[Ciphertext]) -> bytes:
    return pack_frame(MSG_EVAL_RESPONSE, struct.pack(">H", len(cts)) + pack_ciphertexts(cts))


def pack_error(code: int, reason: str) -> bytes:
    msg = reason.encode("utf-8")[:1000]
    return pack_frame(MSG_ERROR, struct.pack(">BH", code, len(msg)) + msg)


def parse_counted_ciphertexts(payload: bytes, expected: int) -> list[Ciphertext]:
    if len(payload) < 2:
        raise ProtocolError(ERR_MALFORMED, "missing ciphertext count")
    (count,) = struct.unpack_from(">H", payload, 0)
    if count != expected:
        raise ProtocolError(ERR_COUNT, f"expected {expected} ciphertexts, got {count}")
    cts, offset = unpack_ciphertexts(payload, 2, count)
    if offset != len(payload):
        raise ProtocolError(ERR_MALFORMED, "trailing bytes after ciphertexts")
    return cts


def parse_error(payload: bytes) -> ProtocolError:
    if len(payload) < 3:
        return ProtocolError(ERR_MALFORMED, "truncated error frame")
    code, n = struct.unpack_from(">BH", payload, 0)
    reason = payload[3:3 + n].decode("utf-8", errors="replace")
    return ProtocolError(code, reason)


def recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise EOFError("peer closed the connection")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> tuple[int, int, bytes]:
    """Read one frame; returns (msg_type, version, payload)."""
    (length,) = struct.unpack(">I", recv_exact(sock, 4))
    if length < 3 or length > MAX_FRAME:
        raise ProtocolError(ERR_MALFORMED, f"frame length {length} out of bounds")
    body = recv_exact(sock, length)
    msg_type, version = struct.unpack_from(">BH", body, 0)
    return msg_type, version, body[3:]
