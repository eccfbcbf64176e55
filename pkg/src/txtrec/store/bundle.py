"""Model bundle file format.

A bundle is one self-describing binary file:

- Bytes 0-3: Magic ``b"TXTB"``
- Bytes 4-5: Format version (16-bit LE, currently 1)
- Bytes 6-7: Reserved (0x0000)
- Bytes 8-11: Section count (32-bit LE)
- Sections, each: 4-byte ASCII tag, payload length (64-bit LE), payload
- Trailer: 32-byte SHA-256 of every preceding byte

Sections:

- ``META``: UTF-8 JSON with sorted keys: version tag, model kind, model
  config, vocabularies, creation time and the parameter index (name, shape,
  dtype in storage order).
- ``ARRS``: the parameter arrays as raw little-endian reals, concatenated in
  index order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np

from txtrec.data.vocab import VocabSet
from txtrec.errors import ChecksumError, ContractError, FormatError
from txtrec.models import build_model, config_for
from txtrec.models.base import Recommender

logger = logging.getLogger(__name__)

MAGIC = b"TXTB"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHI")
SECTION = struct.Struct("<4sQ")
DIGEST_SIZE = 32
TAG_META = b"META"
TAG_ARRAYS = b"ARRS"

# Creation time recorded when no training timestamp is known.
EPOCH = "1970-01-01T00:00:00"

_DTYPES = ("float32", "float64")


@dataclass
class ModelBundle:
    """A trained model with everything needed to serve it.

    Attributes:
        version_tag: Identifier reported by every serving response.
        kind: Model kind, one of ``txtrec.models.MODEL_KINDS``.
        config: Model hyperparameters as plain data.
        params: Parameter arrays in storage order.
        vocabs: Item and context vocabularies.
        created_at: ISO-8601 creation time.
        checksum: Hex SHA-256 trailer, set once encoded or loaded.
    """

    version_tag: str
    kind: str
    config: dict[str, Any]
    params: dict[str, np.ndarray]
    vocabs: VocabSet
    created_at: str = EPOCH
    format_version: int = FORMAT_VERSION
    checksum: str | None = field(default=None, compare=False)

    @classmethod
    def from_model(
        cls,
        model: Recommender,
        vocabs: VocabSet,
        created_at: datetime | str | None = None,
        version_tag: str | None = None,
    ) -> ModelBundle:
        """Package a model; the version tag defaults to a hash of the content."""
        if isinstance(created_at, datetime):
            created = created_at.isoformat()
        else:
            created = created_at or EPOCH
        bundle = cls(
            version_tag=version_tag or "",
            kind=model.kind,
            config=model.config_dict(),
            params={name: np.asarray(value) for name, value in model.params.items()},
            vocabs=vocabs,
            created_at=created,
        )
        if not version_tag:
            bundle.version_tag = f"{bundle.kind}-{bundle.content_hash()[:12]}"
        return bundle

    def model(self) -> Recommender:
        """Rebuild the model from the stored config and parameters.

        Raises:
            FormatError: If the parameters do not match the config.
        """
        try:
            return build_model(self.kind, config_for(self.kind, self.config), params=self.params)
        except (ContractError, KeyError) as e:
            raise FormatError(
                f"Bundle {self.version_tag} does not describe a valid model: {e}"
            ) from e

    def _index(self) -> list[dict[str, Any]]:
        index = []
        for name, value in self.params.items():
            dtype = np.dtype(value.dtype).name
            if dtype not in _DTYPES:
                raise ContractError(f"Parameter {name} has unsupported dtype {dtype}")
            index.append({"name": name, "shape": list(value.shape), "dtype": dtype})
        return index

    def _meta(self, with_tag: bool = True) -> dict[str, Any]:
        meta: dict[str, Any] = {
            "kind": self.kind,
            "config": self.config,
            "vocabs": self.vocabs.to_dict(),
            "created_at": self.created_at,
            "params": self._index(),
        }
        if with_tag:
            meta["version_tag"] = self.version_tag
        return meta

    def _arrays_payload(self) -> bytes:
        return b"".join(
            np.ascontiguousarray(value, dtype=value.dtype.newbyteorder("<")).tobytes()
            for value in self.params.values()
        )

    def content_hash(self) -> str:
        """SHA-256 hex digest of the metadata (without tag) and the arrays."""
        digest = hashlib.sha256(_dump_json(self._meta(with_tag=False)))
        digest.update(self._arrays_payload())
        return digest.hexdigest()

    def to_bytes(self) -> bytes:
        """Encode the bundle; also sets :attr:`checksum`."""
        sections = [(TAG_META, _dump_json(self._meta())), (TAG_ARRAYS, self._arrays_payload())]
        parts = [HEADER.pack(MAGIC, self.format_version, 0, len(sections))]
        for tag, payload in sections:
            parts.append(SECTION.pack(tag, len(payload)))
            parts.append(payload)
        body = b"".join(parts)
        digest = hashlib.sha256(body).digest()
        self.checksum = digest.hex()
        return body + digest

    @classmethod
    def from_bytes(cls, data: bytes) -> ModelBundle:
        """Decode and validate a bundle.

        Raises:
            FormatError: On a wrong magic, unsupported version or malformed
                sections.
            ChecksumError: If the trailer does not match the content,
                including when the file is truncated.
        """
        if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
            raise FormatError("Not a model bundle: bad magic")
        if len(data) < HEADER.size + DIGEST_SIZE:
            raise ChecksumError(f"Bundle is truncated ({len(data)} bytes)")
        body, trailer = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
        if hashlib.sha256(body).digest() != trailer:
            raise ChecksumError("Bundle checksum does not match its content")

        _, version, _, count = HEADER.unpack_from(body, 0)
        if version != FORMAT_VERSION:
            raise FormatError(f"Unsupported bundle format version {version}")
        sections: dict[bytes, bytes] = {}
        offset = HEADER.size
        for _ in range(count):
            if offset + SECTION.size > len(body):
                raise FormatError("Bundle section header runs past the end of the file")
            tag, length = SECTION.unpack_from(body, offset)
            offset += SECTION.size
            if offset + length > len(body):
                raise FormatError(f"Bundle section {tag!r} runs past the end of the file")
            if tag in sections:
                raise FormatError(f"Duplicate bundle section {tag!r}")
            sections[tag] = body[offset : offset + length]
            offset += length
        if offset != len(body):
            raise FormatError("Unexpected bytes after the last bundle section")
        if TAG_META not in sections or TAG_ARRAYS not in sections:
            raise FormatError("Bundle lacks a META or ARRS section")

        try:
            meta = json.loads(sections[TAG_META].decode("utf-8"))
            params = _decode_arrays(meta["params"], sections[TAG_ARRAYS])
            bundle = cls(
                version_tag=str(meta["version_tag"]),
                kind=str(meta["kind"]),
                config=dict(meta["config"]),
                params=params,
                vocabs=VocabSet.from_dict(meta["vocabs"]),
                created_at=str(meta["created_at"]),
                format_version=version,
            )
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise FormatError(f"Malformed bundle metadata: {e}") from e
        bundle.checksum = trailer.hex()
        # parameter names and shapes must match the stored config exactly
        bundle.model()
        return bundle

    def save(self, path: Path) -> None:
        """Write the bundle to ``path``.

        Raises:
            OSError: If the file cannot be written; the message names the path.
        """
        data = self.to_bytes()
        try:
            path.write_bytes(data)
        except OSError as e:
            raise OSError(f"Cannot write bundle {path}: {e}") from e
        logger.info("Saved bundle %s to %s (%d bytes)", self.version_tag, path, len(data))

    @classmethod
    def load(cls, path: Path) -> ModelBundle:
        """Read and validate a bundle file.

        Raises:
            OSError: If the file cannot be read; the message names the path.
            FormatError: On a malformed file.
            ChecksumError: On a checksum mismatch.
        """
        try:
            data = path.read_bytes()
        except OSError as e:
            raise OSError(f"Cannot read bundle {path}: {e}") from e
        return cls.from_bytes(data)

    def describe(self) -> dict[str, Any]:
        """Header, metadata summary and parameter table for inspection."""
        index = self._index()
        return {
            "format_version": self.format_version,
            "version_tag": self.version_tag,
            "kind": self.kind,
            "created_at": self.created_at,
            "checksum": self.checksum,
            "config": self.config,
            "vocab_sizes": {
                "items": len(self.vocabs.items),
                **{name: len(v) for name, v in self.vocabs.contexts.items()},
            },
            "parameters": [
                {**entry, "count": int(np.prod(entry["shape"]))} for entry in index
            ],
            "total_parameters": int(sum(int(np.prod(e["shape"])) for e in index)),
        }


def _dump_json(data: dict[str, Any]) -> bytes:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8")


def _decode_arrays(index: list[dict[str, Any]], payload: bytes) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in index:
        name, shape, dtype = str(entry["name"]), tuple(entry["shape"]), str(entry["dtype"])
        if dtype not in _DTYPES:
            raise FormatError(f"Parameter {name} has unsupported dtype {dtype}")
        if name in params:
            raise FormatError(f"Parameter {name} appears twice in the bundle")
        stored = np.dtype(dtype).newbyteorder("<")
        count = int(np.prod(shape))
        size = count * stored.itemsize
        if offset + size > len(payload):
            raise FormatError(f"Array data for {name} runs past the end of the ARRS section")
        values = np.frombuffer(payload, dtype=stored, count=count, offset=offset)
        params[name] = values.astype(np.dtype(dtype)).reshape(shape)
        offset += size
    if offset != len(payload):
        raise FormatError("ARRS section has trailing bytes")
    return params


def format_human_readable(info: dict[str, Any]) -> str:
    """Format :meth:`ModelBundle.describe` output as text."""
    lines: list[str] = []
    lines.append("Model Bundle")
    lines.append("=" * 60)
    lines.append(f"Format version: {info['format_version']}")
    lines.append(f"Version tag:    {info['version_tag']}")
    lines.append(f"Kind:           {info['kind']}")
    lines.append(f"Created:        {info['created_at']}")
    lines.append(f"Checksum:       {info['checksum'] or '(not encoded)'}")
    lines.append("")
    lines.append("Vocabularies:")
    for name, size in info["vocab_sizes"].items():
        lines.append(f"  {name:<12} {size:>8}")
    lines.append("")
    lines.append("Parameters:")
    lines.append("-" * 60)
    lines.append(f"{'Name':<40} {'Shape':<12} {'Dtype':<8}")
    lines.append("-" * 60)
    for entry in info["parameters"]:
        shape = "x".join(str(s) for s in entry["shape"])
        lines.append(f"{entry['name']:<40} {shape:<12} {entry['dtype']:<8}")
    lines.append("-" * 60)
    lines.append(f"Total: {info['total_parameters']} values")
    return "\n".join(lines)
