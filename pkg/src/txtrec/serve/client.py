"""Client for the recommendation endpoint."""

from __future__ import annotations

import socket
from collections.abc import Mapping, Sequence
from typing import Any

from typing_extensions import Self

from txtrec.errors import FormatError
from txtrec.serve.protocol import read_frame, write_frame


def parse_endpoint(value: str) -> tuple[str, int]:
    """Split ``HOST:PORT``.

    Raises:
        ValueError: If the port is missing or not a number.
    """
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"Endpoint must look like HOST:PORT, got {value!r}")
    return host, int(port)


class RecommendClient:
    """One connection to a recommendation endpoint.

    Example:
        with RecommendClient("127.0.0.1", 7878) as client:
            print(client.health()["version"])
            reply = client.recommend(["whopper"], {"weather": "sunny"}, k=3)
    """

    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        self._sock = socket.create_connection((host, port), timeout=timeout)

    def send_command(self, message: Mapping[str, Any]) -> dict[str, Any]:
        """Send one request and wait for its response.

        Raises:
            OSError: If the connection fails or times out.
            FormatError: If the endpoint closes the connection or replies
                with a malformed frame.
        """
        write_frame(self._sock, dict(message))
        reply = read_frame(self._sock)
        if reply is None:
            raise FormatError("Endpoint closed the connection without replying")
        return reply

    def health(self) -> dict[str, Any]:
        return self.send_command({"op": "health"})

    def recommend(
        self,
        items: Sequence[str],
        context: Mapping[str, Any] | None = None,
        k: int = 3,
        exclude_basket: bool = True,
    ) -> dict[str, Any]:
        return self.send_command(
            {
                "op": "recommend",
                "items": list(items),
                "context": dict(context or {}),
                "k": k,
                "exclude_basket": exclude_basket,
            }
        )

    def swap(self, version: str | None = None) -> dict[str, Any]:
        """Ask the endpoint to serve another version from its store (latest by default)."""
        message: dict[str, Any] = {"op": "swap"}
        if version is not None:
            message["version"] = version
        return self.send_command(message)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> Self:
        return self

    def __exit__(self, *args: object) -> None:
        self.close()
