"""Token vocabularies with reserved PAD and UNK ids."""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from txtrec.data.context import ContextSchema
from txtrec.data.records import TransactionRecord
from txtrec.errors import ContractError, FormatError, VocabularyError
from txtrec.ids import PAD_TOKEN, UNK_ID, UNK_TOKEN
from txtrec.models.config import ContextField

RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN)


class Vocabulary:
    """Bijective token to id map over dense ids.

    Id 0 is PAD and id 1 is UNK; real tokens start at 2. Unknown tokens
    encode to UNK.
    """

    def __init__(self, tokens: Sequence[str], counts: Mapping[str, int] | None = None) -> None:
        """Create a vocabulary.

        Args:
            tokens: Non-reserved tokens in id order (the first gets id 2).
            counts: Training frequency of each token, kept for inspection.

        Raises:
            ContractError: If a token repeats or is a reserved token.
        """
        self._tokens: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self._ids: dict[str, int] = {}
        for token in tokens:
            if token in self._ids or token in RESERVED_TOKENS:
                raise ContractError(f"Token {token!r} is duplicated or reserved")
            self._ids[token] = len(self._tokens)
            self._tokens.append(token)
        self.counts: dict[str, int] = {t: int((counts or {}).get(t, 0)) for t in tokens}

    @classmethod
    def build(cls, counts: Counter[str], min_count: int = 1) -> Vocabulary:
        """Keep tokens seen at least ``min_count`` times.

        Ids follow descending frequency, ties broken by lexical order.
        """
        kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED_TOKENS]
        kept.sort(key=lambda t: (-counts[t], t))
        return cls(kept, {t: counts[t] for t in kept})

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._ids

    @property
    def tokens(self) -> list[str]:
        """All tokens in id order, reserved tokens included."""
        return list(self._tokens)

    def encode(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode_many(self, tokens: Iterable[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def decode(self, token_id: int) -> str:
        """Token for an id.

        Raises:
            VocabularyError: If the id is outside the vocabulary.
        """
        if not 0 <= token_id < len(self._tokens):
            raise VocabularyError(f"id {token_id} is outside the vocabulary of size {len(self)}")
        return self._tokens[token_id]

    def to_dict(self) -> dict[str, Any]:
        return {
            "tokens": self._tokens[2:],
            "counts": [self.counts[t] for t in self._tokens[2:]],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Vocabulary:
        try:
            tokens = [str(t) for t in data["tokens"]]
            counts = [int(c) for c in data.get("counts", [0] * len(tokens))]
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Malformed vocabulary: {e}") from e
        if len(counts) != len(tokens):
            raise FormatError("Vocabulary counts do not match its tokens")
        return cls(tokens, dict(zip(tokens, counts, strict=True)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._tokens == other._tokens

    def __hash__(self) -> int:
        return hash(tuple(self._tokens))

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"


@dataclass
class VocabSet:
    """Item vocabulary plus one vocabulary per context field."""

    items: Vocabulary
    contexts: dict[str, Vocabulary]
    schema: ContextSchema = field(default_factory=ContextSchema)

    def context_fields(self) -> tuple[ContextField, ...]:
        """Context fields with their vocabulary sizes, in schema order."""
        return tuple(ContextField(name, len(self.contexts[name])) for name in self.schema.fields)

    def encode_context(self, tokens: Sequence[str]) -> list[int]:
        return [
            self.contexts[name].encode(token)
            for name, token in zip(self.schema.fields, tokens, strict=True)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "items": self.items.to_dict(),
            "contexts": {name: self.contexts[name].to_dict() for name in self.schema.fields},
            "schema": self.schema.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> VocabSet:
        try:
            schema = ContextSchema.from_dict(data.get("schema", {}))
            contexts = {
                name: Vocabulary.from_dict(data["contexts"][name]) for name in schema.fields
            }
            items = Vocabulary.from_dict(data["items"])
        except KeyError as e:
            raise FormatError(f"Vocabulary set is missing {e}") from e
        return cls(items=items, contexts=contexts, schema=schema)


def build_vocabs(
    records: Sequence[TransactionRecord],
    min_count: int = 1,
    schema: ContextSchema | None = None,
) -> VocabSet:
    """Build the item vocabulary and one vocabulary per context field.

    Tokens seen fewer than ``min_count`` times are left out and encode to UNK.

    Raises:
        ContractError: If ``records`` is empty or ``min_count`` is below 1.
    """
    if not records:
        raise ContractError("Cannot build vocabularies from an empty record list")
    if min_count < 1:
        raise ContractError(f"min_count must be at least 1, got {min_count}")
    schema = schema or ContextSchema()
    item_counts: Counter[str] = Counter()
    context_counts: dict[str, Counter[str]] = {name: Counter() for name in schema.fields}
    for record in records:
        item_counts.update(record.items)
        for name, token in zip(schema.fields, schema.tokens(record), strict=True):
            context_counts[name][token] += 1
    return VocabSet(
        items=Vocabulary.build(item_counts, min_count),
        contexts={
            name: Vocabulary.build(counts, min_count) for name, counts in context_counts.items()
        },
        schema=schema,
    )
