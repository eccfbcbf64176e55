"""Bucketing of raw order circumstances into categorical context tokens."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from datetime import datetime
from typing import Any

from txtrec.data.records import UNKNOWN_REGION, TransactionRecord, parse_timestamp
from txtrec.errors import ConfigError

CONTEXT_FIELDS = ("hour", "weekday", "temperature", "weather", "store", "region")

_MISSING = ""


@dataclass(frozen=True)
class ContextSchema:
    """How a transaction's context becomes one token per field.

    Fields, in order: hour of day (24 buckets), day of week (7 buckets,
    Monday first), temperature (``temperature_buckets`` equal-width buckets
    over ``[temperature_min, temperature_max)`` Celsius, clamped at both
    ends), weather description, store id and region.
    """

    temperature_min: float = -10.0
    temperature_max: float = 40.0
    temperature_buckets: int = 8

    def __post_init__(self) -> None:
        if self.temperature_buckets < 1:
            raise ConfigError(
                f"temperature_buckets must be positive, got {self.temperature_buckets}"
            )
        if not self.temperature_max > self.temperature_min:
            raise ConfigError(
                f"temperature range [{self.temperature_min}, {self.temperature_max}) is empty"
            )

    @property
    def fields(self) -> tuple[str, ...]:
        return CONTEXT_FIELDS

    def temperature_bucket(self, celsius: float) -> int:
        """Index of the bucket holding ``celsius``; out-of-range values clamp."""
        width = (self.temperature_max - self.temperature_min) / self.temperature_buckets
        index = math.floor((celsius - self.temperature_min) / width)
        return min(max(index, 0), self.temperature_buckets - 1)

    def _tokens(
        self,
        timestamp: datetime | None,
        temperature: float | None,
        weather: str,
        store: str,
        region: str,
    ) -> tuple[str, ...]:
        return (
            f"h{timestamp.hour:02d}" if timestamp is not None else _MISSING,
            f"d{timestamp.weekday()}" if timestamp is not None else _MISSING,
            f"t{self.temperature_bucket(temperature)}" if temperature is not None else _MISSING,
            weather.strip().lower(),
            store.strip(),
            region.strip(),
        )

    def tokens(self, record: TransactionRecord) -> tuple[str, ...]:
        """Context tokens of a parsed transaction, one per field."""
        return self._tokens(
            record.timestamp,
            record.temperature_c,
            record.weather,
            record.store_id,
            record.region,
        )

    def tokens_from_raw(self, raw: Mapping[str, Any]) -> tuple[str, ...]:
        """Context tokens from request values.

        Recognised keys: ``timestamp`` (ISO-8601), ``temperature`` (Celsius),
        ``weather``, ``store`` and ``region``. Missing or unparsable values
        produce tokens no vocabulary contains, so they resolve to UNK.
        """
        timestamp: datetime | None
        try:
            timestamp = parse_timestamp(str(raw["timestamp"])) if "timestamp" in raw else None
        except ValueError:
            timestamp = None
        temperature: float | None
        try:
            temperature = float(raw["temperature"]) if "temperature" in raw else None
        except (TypeError, ValueError):
            temperature = None
        if temperature is not None and not math.isfinite(temperature):
            temperature = None
        return self._tokens(
            timestamp,
            temperature,
            str(raw.get("weather", _MISSING)),
            str(raw.get("store", _MISSING)),
            str(raw.get("region", UNKNOWN_REGION)),
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ContextSchema:
        unknown = sorted(set(data) - {"temperature_min", "temperature_max", "temperature_buckets"})
        if unknown:
            raise ConfigError(f"Unknown context schema keys: {unknown}")
        return cls(**data)
