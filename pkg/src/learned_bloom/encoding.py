"""URL standardization and bag-of-characters features."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import DomainError

logger = logging.getLogger(__name__)

CANONICAL_LENGTH = 150
MARKER = "\x00"
PREFIXES = ("http://", "https://", "www.")

FreqMode = Literal["relative", "absolute"]


@dataclass(frozen=True)
class UrlRecord:
    raw: str
    canonical: str
    label: int  # +1 key, -1 non-key

    @classmethod
    def from_raw(cls, raw: str, label: int) -> "UrlRecord":
        if label not in (1, -1):
            raise DomainError(f"label must be +1 or -1, got {label}")
        return cls(raw=raw, canonical=standardize(raw), label=label)


def standardize(raw: str) -> str:
    """Strip scheme and ``www.`` prefixes, then truncate or pad to 150 symbols.

    The prefixes are removed repeatedly in the fixed order http://, https://,
    www. until none applies.  Padding uses the NUL marker, which is
    dropped from the input first.
    """
    s = raw.replace(MARKER, "")
    changed = True
    while changed:
        changed = False
        for p in PREFIXES:
            if s[: len(p)].lower() == p:
                s = s[len(p) :]
                changed = True
    return s[:CANONICAL_LENGTH].ljust(CANONICAL_LENGTH, MARKER)


@dataclass
class DedupeResult:
    records: list[UrlRecord]
    duplicates_removed: int
    label_conflicts: int


def dedupe(records: Iterable[UrlRecord]) -> DedupeResult:
    """Keep the first record per canonical string.

    A canonical string seen with both labels is kept as a key, since a
    filter must never miss a key; such cases are counted and logged.
    """
    kept: dict[str, UrlRecord] = {}
    conflicted: set[str] = set()
    dupes = 0
    for rec in records:
        prev = kept.get(rec.canonical)
        if prev is None:
            kept[rec.canonical] = rec
            continue
        dupes += 1
        if prev.label != rec.label:
            conflicted.add(rec.canonical)
            if prev.label != 1:
                kept[rec.canonical] = UrlRecord(prev.raw, prev.canonical, 1)
    if conflicted:
        logger.warning("%d canonical URLs carried both labels; resolved as keys", len(conflicted))
    return DedupeResult(list(kept.values()), dupes, len(conflicted))


@dataclass(frozen=True)
class CharVocabulary:
    """Characters of the training split, most frequent first (ties by code point)."""

    chars: tuple[str, ...]
    _table: np.ndarray = field(init=False, repr=False, compare=False)
    _byte_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.chars)) != len(self.chars):
            raise DomainError("vocabulary characters must be distinct")
        if MARKER in self.chars:
            raise DomainError("the padding marker cannot be part of the vocabulary")
        size = max((ord(c) for c in self.chars), default=0) + 1
        # unknown code points map to the overflow slot V
        table = np.full(size, len(self.chars), dtype=np.intp)
        for i, c in enumerate(self.chars):
            table[ord(c)] = i
        object.__setattr__(self, "_table", table)
        byte_table = np.full(256, len(self.chars), dtype=np.intp)
        n = min(size, 256)
        byte_table[:n] = table[:n]
        object.__setattr__(self, "_byte_table", byte_table)

    def __len__(self) -> int:
        return len(self.chars)

    def index(self, ch: str) -> int:
        return self.chars.index(ch)

    def slots(self, codepoints: np.ndarray) -> np.ndarray:
        """Vocabulary slot per code point; ``V`` for anything out of vocabulary."""
        table = self._table
        inside = codepoints < len(table)
        return np.where(inside, table[np.where(inside, codepoints, 0)], len(self.chars))

    def slots_of(self, text: str) -> np.ndarray:
        try:
            # fast path: one table lookup per Latin-1 byte
            return self._byte_table[np.frombuffer(text.encode("latin-1"), dtype=np.uint8)]
        except UnicodeEncodeError:
            return self.slots(np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32))


def build_vocabulary(training: Sequence[UrlRecord] | Sequence[str]) -> CharVocabulary:
    if len(training) == 0:
        raise DomainError("cannot build a vocabulary from an empty training set")
    counts: Counter[str] = Counter()
    for rec in training:
        counts.update(rec.canonical if isinstance(rec, UrlRecord) else rec)
    counts.pop(MARKER, None)
    ordered = sorted(counts, key=lambda c: (-counts[c], ord(c)))
    return CharVocabulary(tuple(ordered))


def _codepoints(canonicals: Sequence[str]) -> np.ndarray:
    joined = "".join(canonicals)
    cps = np.frombuffer(joined.encode("utf-32-le"), dtype=np.uint32)
    return cps.reshape(len(canonicals), -1) if len(canonicals) else cps.reshape(0, CANONICAL_LENGTH)


def encode(canonical: str, vocab: CharVocabulary, mode: FreqMode = "relative") -> np.ndarray:
    """Bag-of-characters vector of ``canonical`` over ``vocab``.

    Markers and out-of-vocabulary characters are not counted.  In relative
    mode the counts are divided by the in-vocabulary total (zero vector if
    there is none).
    """
    counts = np.bincount(vocab.slots_of(canonical), minlength=len(vocab) + 1)[: len(vocab)].astype(np.float64)
    if mode == "relative":
        total = counts.sum()
        if total > 0:
            counts /= total
    elif mode != "absolute":
        raise DomainError(f"unknown frequency mode {mode!r}")
    return counts


def encode_many(canonicals: Sequence[str], vocab: CharVocabulary, mode: FreqMode = "relative") -> np.ndarray:
    """Row-wise :func:`encode`; every row is bit-identical to the scalar path."""
    V = len(vocab)
    if any(len(c) != CANONICAL_LENGTH for c in canonicals):
        return np.array([encode(c, vocab, mode) for c in canonicals]).reshape(len(canonicals), V)
    slots = vocab.slots(_codepoints(canonicals))
    n = slots.shape[0]
    flat = (np.arange(n)[:, None] * (V + 1) + slots).ravel()
    counts = np.bincount(flat, minlength=n * (V + 1)).reshape(n, V + 1)[:, :V].astype(np.float64)
    if mode == "relative":
        totals = counts.sum(axis=1, keepdims=True)
        np.divide(counts, totals, out=counts, where=totals > 0)
    elif mode != "absolute":
        raise DomainError(f"unknown frequency mode {mode!r}")
    return counts
