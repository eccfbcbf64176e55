"""Transaction file parsing and writing.

A transaction file is UTF-8 CSV with a header row. Each row is one order:

    order_id,timestamp,store_id,region,weather,temperature_c,items
    o-1,2024-03-01T07:45:00,store_2,region_0,rain,8.5,coffee|hash_browns

``items`` lists item names in add-to-cart order separated by ``|``. The
temperature column is ``temperature_c`` or ``temperature_f``; the name fixes
the unit. Location comes from a ``region`` column, or from ``latitude`` and
``longitude`` mapped to a one-degree grid cell, or defaults to ``unknown``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import TextIO

from txtrec.errors import FormatError

logger = logging.getLogger(__name__)

ITEM_SEPARATOR = "|"
MANDATORY_COLUMNS = ("order_id", "timestamp", "store_id", "weather", "items")
TEMPERATURE_COLUMNS = ("temperature_c", "temperature_f")
UNKNOWN_REGION = "unknown"


@dataclass(frozen=True)
class TransactionRecord:
    """One order with its context.

    Attributes:
        order_id: Source identifier of the order.
        timestamp: Order time; bucketed into hour of day and day of week.
        store_id: Restaurant identifier.
        region: Region code or grid cell of the restaurant.
        weather: Free-text weather description, lower-cased.
        temperature_c: Outside temperature in degrees Celsius.
        items: Item names in add-to-cart order.
    """

    order_id: str
    timestamp: datetime
    store_id: str
    region: str
    weather: str
    temperature_c: float
    items: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamp", to_naive_utc(self.timestamp))
        if not self.items:
            raise ValueError(f"Order {self.order_id!r} has no items")
        if not math.isfinite(self.temperature_c):
            raise ValueError(f"Order {self.order_id!r} has a non-finite temperature")


@dataclass(frozen=True)
class RowError:
    """A skipped row and the reason it was rejected."""

    line: int
    message: str


@dataclass
class ParseResult:
    """Records parsed from a transaction file plus the rows that were skipped."""

    records: list[TransactionRecord] = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return len(self.errors)


def to_naive_utc(value: datetime) -> datetime:
    """Convert an offset-aware time to naive UTC; naive times are taken as UTC already."""
    if value.tzinfo is None:
        return value
    return value.astimezone(timezone.utc).replace(tzinfo=None)


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp as naive UTC, accepting a trailing ``Z``."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return to_naive_utc(datetime.fromisoformat(text))


def grid_cell(latitude: float, longitude: float) -> str:
    """One-degree grid cell code ``"<lat>:<lon>"`` for a coordinate."""
    if not (-90.0 <= latitude <= 90.0 and -180.0 <= longitude <= 180.0):
        raise ValueError(f"Coordinate ({latitude}, {longitude}) is out of range")
    return f"{math.floor(latitude)}:{math.floor(longitude)}"


def _check_header(header: Sequence[str] | None) -> str:
    """Validate the header and return the temperature column name."""
    if not header:
        raise FormatError("Transaction file has no header row")
    missing = [c for c in MANDATORY_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"Transaction file is missing mandatory columns: {missing}")
    temperature = [c for c in TEMPERATURE_COLUMNS if c in header]
    if len(temperature) != 1:
        raise FormatError(
            "Transaction file needs exactly one of temperature_c or temperature_f, "
            f"found {temperature or 'neither'}"
        )
    return temperature[0]


def _region(row: dict[str, str]) -> str:
    region = (row.get("region") or "").strip()
    if region:
        return region
    lat, lon = (row.get("latitude") or "").strip(), (row.get("longitude") or "").strip()
    if lat and lon:
        return grid_cell(float(lat), float(lon))
    return UNKNOWN_REGION


def _parse_row(row: dict[str, str], temperature_column: str) -> TransactionRecord:
    if None in row:
        raise ValueError("row has more fields than the header")
    order_id = (row["order_id"] or "").strip()
    if not order_id:
        raise ValueError("empty order_id")
    temperature = float(row[temperature_column])
    if temperature_column == "temperature_f":
        temperature = (temperature - 32.0) * 5.0 / 9.0
    items = tuple(
        name.strip() for name in (row["items"] or "").split(ITEM_SEPARATOR) if name.strip()
    )
    return TransactionRecord(
        order_id=order_id,
        timestamp=parse_timestamp(row["timestamp"] or ""),
        store_id=(row["store_id"] or "").strip(),
        region=_region(row),
        weather=(row["weather"] or "").strip().lower(),
        temperature_c=temperature,
        items=items,
    )


def parse_transactions(stream: TextIO | Iterable[str]) -> ParseResult:
    """Parse a transaction file.

    Malformed rows are skipped and reported with their line number; the
    header is line 1.

    Args:
        stream: Open text file or any iterable of CSV lines.

    Returns:
        Parsed records in file order and the skipped rows.

    Raises:
        FormatError: If the header lacks a mandatory column.
    """
    reader = csv.DictReader(stream)
    temperature_column = _check_header(reader.fieldnames)
    result = ParseResult()
    for row in reader:
        line = reader.line_num
        try:
            result.records.append(_parse_row(row, temperature_column))
        except (ValueError, TypeError, KeyError) as e:
            logger.warning("Skipping line %d: %s", line, e)
            result.errors.append(RowError(line=line, message=str(e)))
    logger.info(
        "Parsed %d transactions, skipped %d rows", len(result.records), result.skipped
    )
    return result


def read_transactions(path: Path) -> ParseResult:
    """Parse a transaction file from disk.

    Raises:
        FormatError: If the header lacks a mandatory column.
        OSError: If the file cannot be read; the message names the path.
    """
    try:
        with path.open(newline="", encoding="utf-8") as f:
            return parse_transactions(f)
    except OSError as e:
        raise OSError(f"Cannot read transactions from {path}: {e}") from e


def format_transactions(records: Iterable[TransactionRecord]) -> str:
    """Serialize records as a transaction file with ``region`` and ``temperature_c``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["order_id", "timestamp", "store_id", "region", "weather", "temperature_c", "items"]
    )
    for r in records:
        writer.writerow([
            r.order_id,
            r.timestamp.isoformat(),
            r.store_id,
            r.region,
            r.weather,
            f"{r.temperature_c:.1f}",
            ITEM_SEPARATOR.join(r.items),
        ])
    return buf.getvalue()


def write_transactions(records: Iterable[TransactionRecord], path: Path) -> None:
    """Write records to ``path`` as a transaction file."""
    try:
        path.write_text(format_transactions(records), encoding="utf-8")
    except OSError as e:
        raise OSError(f"Cannot write transactions to {path}: {e}") from e


def newest_timestamp(records: Iterable[TransactionRecord]) -> datetime | None:
    """Latest order time among the records, or None if there are none."""
    return max((r.timestamp for r in records), default=None)
