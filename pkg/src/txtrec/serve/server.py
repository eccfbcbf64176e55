"""Threaded TCP endpoint answering recommendation requests.

Each connection may carry any number of request frames; each gets exactly
one response frame. Operations:

- ``health``: version tag and model kind
- ``recommend``: top-k next items for a basket and context
- ``swap``: replace the served model with a bundle from the model store

Every response names the version of the model that produced it. A request
that fails gets an error response and the connection stays open; a broken
frame gets one error response and the connection is closed.
"""

from __future__ import annotations

import logging
import socketserver
import threading
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

from typing_extensions import Self

from txtrec.errors import ConfigError, ContractError, FormatError, TxtError
from txtrec.serve.predict import LoadedModel, RecommendRequest, predict_top_k
from txtrec.serve.protocol import (
    PROTOCOL_VERSION,
    decode_payload,
    error_message,
    read_frame_bytes,
    write_frame,
)
from txtrec.store.bundle import ModelBundle
from txtrec.store.registry import ModelStore

logger = logging.getLogger(__name__)

OPERATIONS = ("health", "recommend", "swap")


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how the endpoint listens."""

    host: str = "127.0.0.1"
    port: int = 7878
    timeout: float | None = 30.0

    def __post_init__(self) -> None:
        if not 0 <= self.port <= 0xFFFF:
            raise ConfigError(f"Port must be 0-65535, got {self.port}")
        if self.timeout is not None and self.timeout <= 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout}")


class _RequestHandler(socketserver.BaseRequestHandler):
    server: RecommendationServer

    def handle(self) -> None:
        sock = self.request
        sock.settimeout(self.server.endpoint.timeout)
        logger.debug("Connection from %s", self.client_address)
        while True:
            try:
                payload = read_frame_bytes(sock)
            except FormatError as e:
                # framing is lost; answer once and drop the connection
                logger.warning("Bad frame from %s: %s", self.client_address, e)
                self._send(error_message(e.category, str(e), self.server.version))
                return
            except OSError as e:
                logger.debug("Connection from %s ended: %s", self.client_address, e)
                return
            if payload is None:
                return
            self._send(self.server.dispatch_payload(payload))

    def _send(self, message: dict[str, Any]) -> None:
        try:
            write_frame(self.request, message)
        except OSError as e:
            logger.debug("Cannot reply to %s: %s", self.client_address, e)


class RecommendationServer(socketserver.ThreadingTCPServer):
    """Recommendation endpoint over one immutable model at a time.

    Requests read the current model once and use it to the end, so a swap
    never mixes two versions within one response.

    Example:
        with RecommendationServer(bundle, EndpointConfig(port=0)) as server:
            server.start()
            host, port = server.address
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(
        self,
        bundle: ModelBundle,
        endpoint: EndpointConfig | None = None,
        store: ModelStore | None = None,
    ) -> None:
        self.endpoint = endpoint or EndpointConfig()
        self.store = store
        self._lock = threading.Lock()
        self._loaded = LoadedModel(bundle)
        self._thread: threading.Thread | None = None
        super().__init__((self.endpoint.host, self.endpoint.port), _RequestHandler)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return str(host), int(port)

    @property
    def current(self) -> LoadedModel:
        with self._lock:
            return self._loaded

    @property
    def version(self) -> str:
        return self.current.version

    def swap(self, bundle: ModelBundle) -> str:
        """Atomically replace the served model; returns the previous version.

        The new model is rebuilt before the lock is taken, so a bundle that
        fails validation leaves the old model in place.
        """
        loaded = LoadedModel(bundle)
        with self._lock:
            previous, self._loaded = self._loaded.version, loaded
        logger.info("Swapped model %s -> %s", previous, loaded.version)
        return previous

    def dispatch_payload(self, payload: bytes) -> dict[str, Any]:
        """Answer one raw request frame."""
        loaded = self.current
        try:
            return self.dispatch(decode_payload(payload), loaded)
        except TxtError as e:
            logger.warning("Request failed: %s", e)
            return error_message(e.category, str(e), loaded.version)
        except (LookupError, OSError) as e:
            logger.warning("Request failed: %s", e)
            return error_message("store", str(e), loaded.version)
        except (TypeError, ValueError) as e:
            # wire values of the wrong shape that slipped past request validation
            logger.warning("Malformed request: %s", e)
            return error_message("contract", str(e), loaded.version)

    def dispatch(
        self, message: dict[str, Any], loaded: LoadedModel | None = None
    ) -> dict[str, Any]:
        """Answer one parsed request against ``loaded`` (the current model by default).

        Raises:
            ContractError: On an unknown operation or malformed fields.
        """
        loaded = loaded or self.current
        op = message.get("op")
        if op == "health":
            return {
                "status": "ok",
                "version": loaded.version,
                "kind": loaded.bundle.kind,
                "protocol": PROTOCOL_VERSION,
            }
        if op == "recommend":
            return predict_top_k(loaded, RecommendRequest.from_dict(message)).to_dict()
        if op == "swap":
            if self.store is None:
                raise ContractError("This endpoint has no model store to swap from")
            version = message.get("version")
            bundle = self.store.load(str(version)) if version else self.store.load_latest()
            previous = self.swap(bundle)
            return {"status": "ok", "version": bundle.version_tag, "previous": previous}
        raise ContractError(f"Unknown operation {op!r}; expected one of {list(OPERATIONS)}")

    def start(self) -> None:
        """Serve on a background thread."""
        if self._thread is not None:
            return
        self._thread = threading.Thread(
            target=self.serve_forever, name="txtrec-server", daemon=True
        )
        self._thread.start()
        host, port = self.address
        logger.info("Serving %s on %s:%d", self.version, host, port)

    def stop(self) -> None:
        if self._thread is not None:
            self.shutdown()
            self._thread.join()
            self._thread = None
        self.server_close()

    def __enter__(self) -> Self:
        return self

    def __exit__(self, *args: object) -> None:
        self.stop()


def serve(
    bundle: ModelBundle,
    endpoint: EndpointConfig | None = None,
    store: ModelStore | None = None,
    background: bool = False,
    on_ready: Callable[[RecommendationServer], None] | None = None,
) -> RecommendationServer:
    """Start an endpoint for ``bundle``.

    With ``background`` the server runs on its own thread and is returned
    at once; otherwise this blocks until interrupted. ``on_ready`` is called
    once the socket is bound, so a requested port 0 can be read back.
    """
    server = RecommendationServer(bundle, endpoint, store)
    if background:
        server.start()
        if on_ready is not None:
            on_ready(server)
        return server
    host, port = server.address
    logger.info("Serving %s on %s:%d", server.version, host, port)
    try:
        if on_ready is not None:
            on_ready(server)
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info("Interrupted; shutting down")
    finally:
        server.server_close()
    return server
