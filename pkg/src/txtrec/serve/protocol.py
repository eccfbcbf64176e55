"""Length-prefixed JSON framing for the recommendation endpoint.

Every message is a frame:

- Bytes 0-3: payload length (32-bit big-endian)
- Payload: UTF-8 JSON object

Frames larger than :data:`MAX_FRAME` are rejected.
"""

from __future__ import annotations

import json
import socket
import struct
from typing import Any

from txtrec.errors import FormatError

LENGTH = struct.Struct(">I")
MAX_FRAME = 1 << 20

PROTOCOL_VERSION = 1


def encode_frame(message: dict[str, Any]) -> bytes:
    """Serialize a message into one frame.

    Raises:
        FormatError: If the encoded message exceeds :data:`MAX_FRAME`.
    """
    payload = json.dumps(message, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise FormatError(f"Frame of {len(payload)} bytes exceeds the {MAX_FRAME} byte limit")
    return LENGTH.pack(len(payload)) + payload


def decode_payload(payload: bytes) -> dict[str, Any]:
    """Parse a frame payload.

    Raises:
        FormatError: If the payload is not a UTF-8 JSON object.
    """
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Frame is not valid JSON: {e}") from e
    if not isinstance(message, dict):
        raise FormatError(f"Frame must hold a JSON object, got {type(message).__name__}")
    return message


def _recv_exact(sock: socket.socket, size: int) -> bytes | None:
    chunks: list[bytes] = []
    remaining = size
    while remaining:
        chunk = sock.recv(min(remaining, 65536))
        if not chunk:
            if remaining == size:
                return None
            raise FormatError(f"Connection closed {remaining} bytes short of a full frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame_bytes(sock: socket.socket) -> bytes | None:
    """Read one raw payload; None on a clean end of stream.

    Raises:
        FormatError: On an oversized frame or a truncated one.
    """
    header = _recv_exact(sock, LENGTH.size)
    if header is None:
        return None
    (length,) = LENGTH.unpack(header)
    if length > MAX_FRAME:
        raise FormatError(f"Frame of {length} bytes exceeds the {MAX_FRAME} byte limit")
    if length == 0:
        return b""
    payload = _recv_exact(sock, length)
    if payload is None:
        raise FormatError("Connection closed before the frame payload")
    return payload


def read_frame(sock: socket.socket) -> dict[str, Any] | None:
    """Read and parse one frame; None on a clean end of stream."""
    payload = read_frame_bytes(sock)
    return None if payload is None else decode_payload(payload)


def write_frame(sock: socket.socket, message: dict[str, Any]) -> None:
    sock.sendall(encode_frame(message))


def error_message(category: str, message: str, version: str | None) -> dict[str, Any]:
    return {
        "status": "error",
        "version": version,
        "error": {"category": category, "message": message},
    }
