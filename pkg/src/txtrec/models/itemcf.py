"""Contextual item-based collaborative filtering.

Scores are the summed cosine similarity of each candidate to the basket
items, computed from order-level co-occurrence counts, multiplied by a
smoothed popularity of the candidate within the example's context bucket.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from typing import Any

import numpy as np

from txtrec.errors import ContractError, DimensionError
from txtrec.ids import PAD_ID, RESERVED_IDS, UNK_ID
from txtrec.models.base import Batch, Params, rank_items
from txtrec.models.config import ItemCFConfig

logger = logging.getLogger(__name__)


class ContextualItemCF:
    """Count-based recommender implementing the Recommender protocol.

    Attributes:
        config: Vocabulary sizes and the context fields that form buckets.
        cooccurrence: ``[V, V]`` counts of orders containing both items; the
            diagonal counts orders containing the item.
        bucket_counts: ``[n_buckets, V]`` item counts per joint bucket value.
    """

    kind = "itemcf"

    def __init__(
        self,
        config: ItemCFConfig,
        params: Mapping[str, np.ndarray] | None = None,
    ) -> None:
        self.config = config
        v = config.item_vocab_size
        self._positions = tuple(config.context_names.index(f) for f in config.bucket_fields)
        self._radix = tuple(
            config.context_fields[i].cardinality for i in self._positions
        )
        n_buckets = int(np.prod(self._radix)) if self._radix else 1
        if params is None:
            self.cooccurrence = np.zeros((v, v))
            self.bucket_counts = np.zeros((n_buckets, v))
        else:
            self.cooccurrence = np.asarray(params["cooccurrence"], dtype=np.float64)
            self.bucket_counts = np.asarray(params["bucket_counts"], dtype=np.float64)
            if self.cooccurrence.shape != (v, v) or self.bucket_counts.shape != (n_buckets, v):
                raise ContractError(
                    f"ItemCF arrays {self.cooccurrence.shape} and {self.bucket_counts.shape} "
                    f"do not match vocabulary {v} and {n_buckets} buckets"
                )
        self._similarity: np.ndarray | None = None

    @property
    def params(self) -> Params:
        return {"cooccurrence": self.cooccurrence, "bucket_counts": self.bucket_counts}

    def config_dict(self) -> dict[str, Any]:
        return self.config.to_dict()

    @property
    def n_buckets(self) -> int:
        return int(self.bucket_counts.shape[0])

    def bucket_index(self, ctx: np.ndarray) -> int:
        """Joint value of the bucket fields as one mixed-radix index."""
        index = 0
        for pos, radix in zip(self._positions, self._radix, strict=True):
            value = int(ctx[pos])
            if not 0 <= value < radix:
                value = UNK_ID if UNK_ID < radix else 0
            index = index * radix + value
        return index

    def fit(self, orders: Iterable[Sequence[int]], contexts: Iterable[np.ndarray]) -> None:
        """Accumulate counts from complete orders and their context vectors.

        Items are counted once per order however often they repeat.

        Raises:
            ContractError: If no order is given.
        """
        seen = 0
        v = self.config.item_vocab_size
        for order, ctx in zip(orders, contexts, strict=True):
            ids = np.unique(np.asarray(order, dtype=np.int64))
            ids = ids[(ids != PAD_ID) & (ids >= 0) & (ids < v)]
            if ids.size == 0:
                continue
            self.cooccurrence[np.ix_(ids, ids)] += 1.0
            self.bucket_counts[self.bucket_index(np.asarray(ctx)), ids] += 1.0
            seen += 1
        if seen == 0:
            raise ContractError("ItemCF needs at least one order to fit")
        self._similarity = None
        logger.info("Fitted ItemCF on %d orders", seen)

    def similarity(self) -> np.ndarray:
        """Cosine similarity ``C[a, b] / sqrt(C[a, a] * C[b, b])``; unseen items score 0."""
        if self._similarity is None:
            diag = np.diag(self.cooccurrence)
            norm = np.sqrt(np.outer(diag, diag))
            with np.errstate(divide="ignore", invalid="ignore"):
                sim = np.where(norm > 0, self.cooccurrence / norm, 0.0)
            np.fill_diagonal(sim, 1.0)
            self._similarity = sim
        return self._similarity

    def popularity(self, ctx: np.ndarray) -> np.ndarray:
        """Add-one smoothed popularity of every item within the context's bucket."""
        counts = self.bucket_counts[self.bucket_index(np.asarray(ctx))]
        return (counts + 1.0) / (counts.sum() + counts.size)

    def score_one(self, basket: Sequence[int], ctx: np.ndarray) -> np.ndarray:
        """``[V]`` scores for one basket; an empty basket scores by popularity alone."""
        v = self.config.item_vocab_size
        known = [int(i) for i in basket if 0 <= int(i) < v and int(i) not in RESERVED_IDS]
        if len(basket) == 0:
            base = np.ones(v)
        elif known:
            base = self.similarity()[known].sum(axis=0)
        else:
            base = np.zeros(v)
        return base * self.popularity(ctx)

    def score(self, batch: Batch) -> np.ndarray:
        ids = np.asarray(batch.item_ids)
        mask = np.asarray(batch.mask, dtype=bool)
        ctx = np.asarray(batch.context)
        if ids.ndim != 2 or mask.shape != ids.shape:
            raise DimensionError(
                f"ItemCF expects [B, L] ids and mask, got {ids.shape} and {mask.shape}"
            )
        return np.stack([self.score_one(ids[i][mask[i]], ctx[i]) for i in range(ids.shape[0])])


def itemcf_fit(
    orders: Sequence[Sequence[int]],
    contexts: Sequence[np.ndarray],
    config: ItemCFConfig,
) -> ContextualItemCF:
    """Build a fitted ContextualItemCF from complete orders.

    Raises:
        ContractError: If ``orders`` is empty.
    """
    model = ContextualItemCF(config)
    model.fit(orders, contexts)
    return model


def itemcf_recommend(
    basket: Sequence[int],
    ctx: np.ndarray,
    model: ContextualItemCF,
    k: int,
    exclude: Iterable[int] = (),
) -> list[int]:
    """Top-k item ids, best first, ties broken by the smaller id.

    PAD and UNK are never recommended; ``exclude`` removes further ids.
    """
    if k < 1:
        raise ContractError(f"k must be positive, got {k}")
    scores = model.score_one(basket, ctx)
    return rank_items(scores, k, (*RESERVED_IDS, *exclude))

