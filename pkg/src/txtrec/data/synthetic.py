"""Synthetic transaction corpora with a planted next-item rule.

A corpus spec is a YAML mapping; packaged presets live in
``txtrec/data/presets`` and load by name. Rules:

    copy_last  label = last basket item
    weather    label = item[weather index mod items]
    joint      label = item[(last item + 1 + weather index) mod items]
    mixed      each order draws one of the rules above by ``mixture`` weight

With probability ``noise`` the planted label is replaced by a uniformly
drawn item.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from datetime import timedelta
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from txtrec.data.records import TransactionRecord, parse_timestamp
from txtrec.errors import ConfigError, ContractError
from txtrec.tensor.rng import STREAM_SYNTHETIC, make_rng

logger = logging.getLogger(__name__)

_PRESETS_PACKAGE = "txtrec.data.presets"

RULES = ("copy_last", "weather", "joint", "mixed")
BASE_RULES = ("copy_last", "weather", "joint")

RULE_TEXT = {
    "copy_last": "label = last basket item",
    "weather": "label = item[weather index mod items]",
    "joint": "label = item[(last item + 1 + weather index) mod items]",
    "mixed": "label follows one of copy_last, weather, joint drawn per order by mixture weight",
}


def _get_presets_path() -> Path:
    return Path(str(files(_PRESETS_PACKAGE)))


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic corpus.

    Basket prefixes hold ``min_basket - 1`` to ``max_basket - 1`` items drawn
    uniformly; the label is appended as the final item of the order.
    """

    name: str = "custom"
    description: str = ""
    orders: int = 1000
    items: int = 20
    rule: str = "joint"
    noise: float = 0.1
    weathers: tuple[str, ...] = ("sunny", "cloudy", "rain", "snow")
    stores: int = 3
    regions: int = 2
    min_basket: int = 2
    max_basket: int = 5
    start: str = "2024-01-01T00:00:00"
    days: int = 365
    seed: int = 0
    mixture: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "weathers", tuple(str(w) for w in self.weathers))
        problems: list[str] = []
        if self.rule not in RULES:
            problems.append(f"rule must be one of {list(RULES)}, got {self.rule!r}")
        if self.orders < 1:
            problems.append("orders must be positive")
        if self.items < 2:
            problems.append("items must be at least 2")
        if not 0.0 <= self.noise <= 1.0:
            problems.append(f"noise must lie in [0, 1], got {self.noise}")
        if not self.weathers or len(set(self.weathers)) != len(self.weathers):
            problems.append("weathers must be a non-empty list of distinct names")
        if self.stores < 1 or self.regions < 1:
            problems.append("stores and regions must be positive")
        if not 2 <= self.min_basket <= self.max_basket:
            problems.append("need 2 <= min_basket <= max_basket")
        if self.days < 1:
            problems.append("days must be positive")
        uses = set(self.mixture) if self.rule == "mixed" else {self.rule}
        if self.rule == "mixed":
            unknown = sorted(set(self.mixture) - set(BASE_RULES))
            if not self.mixture or unknown:
                problems.append(f"mixed rule needs mixture weights over {list(BASE_RULES)}")
            elif any(w < 0 for w in self.mixture.values()) or sum(self.mixture.values()) <= 0:
                problems.append("mixture weights must be non-negative with a positive sum")
        if "joint" in uses and self.items <= len(self.weathers):
            problems.append("joint rule needs more items than weathers")
        if "weather" in uses and self.items < len(self.weathers):
            problems.append("weather rule needs at least as many items as weathers")
        if problems:
            raise ContractError("Inconsistent synthetic spec: " + "; ".join(problems))

    def context_blind_optimum(self) -> float | None:
        """Best Top-1 a model ignoring context can reach, or None for mixed rules."""
        chance = self.noise / self.items
        if self.rule == "copy_last":
            return (1.0 - self.noise) + chance
        if self.rule in ("weather", "joint"):
            return (1.0 - self.noise) / len(self.weathers) + chance
        return None

    def bayes_optimum(self) -> float | None:
        """Best Top-1 reachable with full knowledge of the rule."""
        if self.rule == "mixed":
            return None
        return (1.0 - self.noise) + self.noise / self.items

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SyntheticSpec:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown synthetic spec keys: {unknown}")
        values = dict(data)
        if "weathers" in values:
            values["weathers"] = tuple(values["weathers"])
        if "mixture" in values:
            values["mixture"] = {str(k): float(v) for k, v in dict(values["mixture"]).items()}
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["weathers"] = list(self.weathers)
        data["mixture"] = dict(self.mixture)
        return data


@dataclass
class SyntheticCorpus:
    """Generated records and the metadata that documents their rule."""

    records: list[TransactionRecord]
    metadata: dict[str, Any]


def load_synthetic_spec(path: Path) -> SyntheticSpec:
    """Load a corpus spec from a YAML file.

    Raises:
        ConfigError: If the file is not a YAML mapping or has unknown keys.
        ContractError: If the values are inconsistent.
    """
    try:
        with path.open(encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Synthetic spec {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Synthetic spec {path} must be a mapping")
    return SyntheticSpec.from_dict(data)


def load_preset(name: str) -> SyntheticSpec | None:
    """Load a packaged corpus spec by name (e.g. ``"joint"``)."""
    yaml_file = _get_presets_path() / f"{name.lower()}.yaml"
    if not yaml_file.exists():
        return None
    return load_synthetic_spec(yaml_file)


def list_presets() -> list[str]:
    """Names of the packaged corpus specs."""
    if not _get_presets_path().exists():
        return []
    return sorted(p.stem for p in _get_presets_path().glob("*.yaml"))


def resolve_spec(name_or_path: str) -> SyntheticSpec:
    """Treat the argument as a file path if it exists, otherwise as a preset name.

    Raises:
        ConfigError: If it is neither.
    """
    path = Path(name_or_path)
    if path.is_file():
        return load_synthetic_spec(path)
    preset = load_preset(name_or_path)
    if preset is None:
        raise ConfigError(
            f"{name_or_path!r} is neither a spec file nor a preset ({', '.join(list_presets())})"
        )
    return preset


def _planted(rule: str, last: int, weather: int, items: int) -> int:
    if rule == "copy_last":
        return last
    if rule == "weather":
        return weather % items
    return (last + 1 + weather) % items


def generate_synthetic(spec: SyntheticSpec, seed: int | None = None) -> SyntheticCorpus:
    """Generate records whose labels follow the spec's planted rule.

    Args:
        spec: Corpus parameters.
        seed: Overrides ``spec.seed`` when given.

    Returns:
        Records ordered by timestamp, plus metadata naming the rule, the noise
        level, the realised counts and the reachable accuracies.
    """
    seed = spec.seed if seed is None else seed
    rng = make_rng(seed, STREAM_SYNTHETIC)
    start = parse_timestamp(spec.start)
    names = [f"item_{i:03d}" for i in range(spec.items)]
    n_weathers = len(spec.weathers)
    sub_rules = tuple(spec.mixture) if spec.rule == "mixed" else (spec.rule,)
    weights = np.array([spec.mixture.get(r, 1.0) for r in sub_rules], dtype=np.float64)
    weights /= weights.sum()

    rule_counts = dict.fromkeys(sub_rules, 0)
    noisy = 0
    records: list[TransactionRecord] = []
    for n in range(spec.orders):
        length = int(rng.integers(spec.min_basket - 1, spec.max_basket))
        prefix = rng.integers(0, spec.items, size=length)
        weather = int(rng.integers(n_weathers))
        store = int(rng.integers(spec.stores))
        offset = int(rng.integers(0, spec.days * 86400))
        temperature = round(float(rng.uniform(-5.0, 35.0)), 1)
        rule = sub_rules[int(rng.choice(len(sub_rules), p=weights))]
        coin, replacement = float(rng.random()), int(rng.integers(spec.items))
        label = _planted(rule, int(prefix[-1]), weather, spec.items)
        rule_counts[rule] += 1
        if coin < spec.noise:
            label = replacement
            noisy += 1
        records.append(
            TransactionRecord(
                order_id=f"syn-{n:06d}",
                timestamp=start + timedelta(seconds=offset),
                store_id=f"store_{store}",
                region=f"region_{store % spec.regions}",
                weather=spec.weathers[weather],
                temperature_c=temperature,
                items=tuple(names[i] for i in prefix) + (names[label],),
            )
        )
    records.sort(key=lambda r: (r.timestamp, r.order_id))
    metadata: dict[str, Any] = {
        "name": spec.name,
        "rule": spec.rule,
        "rule_text": RULE_TEXT[spec.rule],
        "noise": spec.noise,
        "seed": seed,
        "orders": spec.orders,
        "items": spec.items,
        "weathers": list(spec.weathers),
        "rule_counts": rule_counts,
        "noisy_labels": noisy,
        "context_blind_optimum": spec.context_blind_optimum(),
        "bayes_optimum": spec.bayes_optimum(),
        "spec": spec.to_dict(),
    }
    logger.info("Generated %d synthetic orders with rule %s", spec.orders, spec.rule)
    return SyntheticCorpus(records=records, metadata=metadata)
