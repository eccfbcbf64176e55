"""Directory of versioned model bundles."""

from __future__ import annotations

import logging
import os
import re
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import yaml

from txtrec.errors import ContractError, FormatError
from txtrec.store.bundle import ModelBundle

logger = logging.getLogger(__name__)

INDEX_FILE = "index.yaml"
BUNDLE_SUFFIX = ".txtb"

_TAG_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class StoreEntry:
    """One published bundle."""

    version_tag: str
    kind: str
    created_at: str
    checksum: str
    file: str


class ModelStore:
    """Versioned bundles kept in one directory.

    ``index.yaml`` lists published versions in publication order; the last
    entry is the latest. Bundles are immutable once published.
    """

    def __init__(self, root: Path) -> None:
        self.root = root

    def _index_path(self) -> Path:
        return self.root / INDEX_FILE

    def _read_index(self) -> list[StoreEntry]:
        path = self._index_path()
        if not path.exists():
            return []
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or []
            return [StoreEntry(**entry) for entry in data]
        except (yaml.YAMLError, TypeError) as e:
            raise FormatError(f"Model store index {path} is malformed: {e}") from e

    def _write_index(self, entries: list[StoreEntry]) -> None:
        tmp = self._index_path().with_suffix(".tmp")
        tmp.write_text(
            yaml.safe_dump([entry.__dict__ for entry in entries], sort_keys=False),
            encoding="utf-8",
        )
        os.replace(tmp, self._index_path())

    def publish(self, bundle: ModelBundle) -> StoreEntry:
        """Save a bundle under its version tag and make it the latest.

        Raises:
            ContractError: If the tag is not a safe file name or is already
                published with different content.
        """
        if not _TAG_PATTERN.match(bundle.version_tag):
            raise ContractError(f"Version tag {bundle.version_tag!r} is not a valid store key")
        self.root.mkdir(parents=True, exist_ok=True)
        entries = self._read_index()
        data = bundle.to_bytes()
        assert bundle.checksum is not None
        for entry in entries:
            if entry.version_tag == bundle.version_tag:
                if entry.checksum != bundle.checksum:
                    raise ContractError(
                        f"Version {bundle.version_tag} is already published with other content"
                    )
                entries.remove(entry)
                break
        file_name = f"{bundle.version_tag}{BUNDLE_SUFFIX}"
        (self.root / file_name).write_bytes(data)
        entry = StoreEntry(
            version_tag=bundle.version_tag,
            kind=bundle.kind,
            created_at=bundle.created_at,
            checksum=bundle.checksum,
            file=file_name,
        )
        entries.append(entry)
        self._write_index(entries)
        logger.info("Published %s to %s", bundle.version_tag, self.root)
        return entry

    def versions(self) -> list[StoreEntry]:
        """Published versions, oldest first."""
        return self._read_index()

    def __iter__(self) -> Iterator[StoreEntry]:
        return iter(self.versions())

    def __len__(self) -> int:
        return len(self.versions())

    def load(self, version_tag: str) -> ModelBundle:
        """Load a published version.

        Raises:
            KeyError: If the version is not published.
        """
        for entry in self._read_index():
            if entry.version_tag == version_tag:
                return ModelBundle.load(self.root / entry.file)
        raise KeyError(f"Version {version_tag!r} is not in the store at {self.root}")

    def load_latest(self) -> ModelBundle:
        """Load the most recently published version.

        Raises:
            LookupError: If the store is empty.
        """
        entries = self._read_index()
        if not entries:
            raise LookupError(f"Model store at {self.root} has no published versions")
        return ModelBundle.load(self.root / entries[-1].file)
