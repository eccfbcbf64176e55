"""One-shot next-item recommendation against a loaded bundle."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from txtrec.data.vocab import VocabSet
from txtrec.errors import ContractError
from txtrec.ids import PAD_ID, RESERVED_IDS, UNK_ID
from txtrec.models.base import Recommender, rank_items
from txtrec.models.itemcf import ContextualItemCF
from txtrec.store.bundle import ModelBundle

logger = logging.getLogger(__name__)

# Share of the top ItemCF score spread over items by contextual popularity.
ITEMCF_PRIOR_WEIGHT = 1e-6


@dataclass(frozen=True)
class RecommendRequest:
    """Items in add-to-cart order, raw context values and the number of results.

    ``context`` takes the keys ``timestamp``, ``temperature``, ``weather``,
    ``store`` and ``region``; missing values resolve to UNK.
    """

    items: tuple[str, ...] = ()
    context: Mapping[str, Any] = field(default_factory=dict)
    k: int = 3
    exclude_basket: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(str(i) for i in self.items))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RecommendRequest:
        """Build a request from its wire form.

        Raises:
            ContractError: On a missing or mistyped field.
        """
        items = data.get("items", [])
        context = data.get("context", {})
        if not isinstance(items, list) or not all(isinstance(i, str) for i in items):
            raise ContractError("'items' must be a list of item names")
        if not isinstance(context, dict):
            raise ContractError("'context' must be an object")
        k = data.get("k", 3)
        if not isinstance(k, int) or isinstance(k, bool):
            raise ContractError(f"'k' must be an integer, got {k!r}")
        exclude = data.get("exclude_basket", True)
        if not isinstance(exclude, bool):
            raise ContractError(f"'exclude_basket' must be a boolean, got {exclude!r}")
        return cls(items=tuple(items), context=context, k=k, exclude_basket=exclude)


@dataclass(frozen=True)
class Recommendation:
    item: str
    probability: float


@dataclass(frozen=True)
class RecommendResponse:
    """Up to k items, most probable first, and the version that produced them."""

    recommendations: tuple[Recommendation, ...]
    version: str
    cold_start: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": "ok",
            "version": self.version,
            "cold_start": self.cold_start,
            "recommendations": [
                {"item": r.item, "probability": r.probability} for r in self.recommendations
            ],
        }


@dataclass(frozen=True)
class _RequestBatch:
    item_ids: np.ndarray
    mask: np.ndarray
    context: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


class LoadedModel:
    """A bundle with its model rebuilt once, ready to answer requests.

    Instances are never mutated after construction, so one can be shared by
    any number of request threads.
    """

    def __init__(self, bundle: ModelBundle) -> None:
        self.bundle = bundle
        self.model: Recommender = bundle.model()
        self.seq_len: int = int(bundle.config["seq_len"])

    @property
    def version(self) -> str:
        return self.bundle.version_tag

    @property
    def vocabs(self) -> VocabSet:
        return self.bundle.vocabs

    def encode(self, request: RecommendRequest) -> tuple[_RequestBatch, bool]:
        """Tokenize a request into a one-row batch.

        Returns the batch and whether it is a cold start (empty basket).
        Neural models see an empty basket as a single UNK item; ItemCF sees
        an empty mask and scores by popularity alone.
        """
        ids = np.full((1, self.seq_len), PAD_ID, dtype=np.int64)
        mask = np.zeros((1, self.seq_len), dtype=bool)
        encoded = self.vocabs.items.encode_many(request.items)[-self.seq_len :]
        cold_start = not encoded
        if cold_start and not isinstance(self.model, ContextualItemCF):
            encoded = [UNK_ID]
        ids[0, : len(encoded)] = encoded
        mask[0, : len(encoded)] = True
        tokens = self.vocabs.schema.tokens_from_raw(request.context)
        ctx = np.array([self.vocabs.encode_context(tokens)], dtype=np.int64)
        return _RequestBatch(ids, mask, ctx, np.zeros(1, dtype=np.int64)), cold_start

    def probabilities(self, request: RecommendRequest) -> tuple[np.ndarray, bool]:
        """Next-item distribution over the item vocabulary."""
        batch, cold_start = self.encode(request)
        scores = np.asarray(self.model.score(batch), dtype=np.float64)[0]
        if isinstance(self.model, ContextualItemCF):
            # unsupported items keep a sliver of mass ordered by context popularity
            prior = self.model.popularity(batch.context[0])
            top = scores.max()
            smoothed = scores + ITEMCF_PRIOR_WEIGHT * (top if top > 0 else 1.0) * prior
            probs = smoothed / smoothed.sum()
        else:
            shifted = np.exp(scores - scores.max())
            probs = shifted / shifted.sum()
        return probs, cold_start


def predict_top_k(model: ModelBundle | LoadedModel, request: RecommendRequest) -> RecommendResponse:
    """Recommend the k most probable next items for a basket.

    PAD and UNK are never recommended; items already in the basket are left
    out unless ``request.exclude_basket`` is false. Fewer than k results come
    back when the vocabulary runs out. Ties go to the smaller item id.

    Raises:
        ContractError: If ``request.k`` is less than 1.
    """
    if request.k < 1:
        raise ContractError(f"k must be at least 1, got {request.k}")
    loaded = model if isinstance(model, LoadedModel) else LoadedModel(model)
    probs, cold_start = loaded.probabilities(request)
    exclude: list[int] = list(RESERVED_IDS)
    if request.exclude_basket:
        basket = loaded.vocabs.items.encode_many(request.items)
        exclude.extend(i for i in basket if i not in exclude)
    ranked = rank_items(probs, request.k, exclude)
    items = loaded.vocabs.items
    return RecommendResponse(
        recommendations=tuple(
            Recommendation(item=items.decode(i), probability=float(probs[i])) for i in ranked
        ),
        version=loaded.version,
        cold_start=cold_start,
    )


def request_from_cli(
    items: Sequence[str], context_pairs: Sequence[str], k: int, exclude_basket: bool = True
) -> RecommendRequest:
    """Build a request from ``--item`` names and ``key=value`` context pairs.

    Raises:
        ContractError: If a context pair has no ``=``.
    """
    context: dict[str, str] = {}
    for pair in context_pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ContractError(f"Context values must look like key=value, got {pair!r}")
        context[key.strip()] = value.strip()
    return RecommendRequest(items=tuple(items), context=context, k=k, exclude_basket=exclude_basket)
