"""Corpus preparation shared by forward and backward runs.

A *sentence* here is the payload of ``n - 1`` tokens; ``prepare_direction``
turns it into an ``n``-token model input that always starts with BOS.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidArgumentError

SHUFFLE_ALGORITHM = "fisher-yates/pcg64/v1"


class Direction(str, enum.Enum):
    FW = "fw"
    BW = "bw"

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgumentError(f"unknown direction {value!r}; expected 'fw' or 'bw'") from None


@dataclass(frozen=True)
class SplitConfig:
    """Context length ``n`` (BOS included) and the window step."""

    n: int
    stride: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise InvalidArgumentError(f"context length must be >= 2, got {self.n}")
        if self.stride is None:
            object.__setattr__(self, "stride", max(1, self.n // 2))
        if not 1 <= self.stride <= self.n - 1:
            raise InvalidArgumentError(f"stride must lie in [1, {self.n - 1}], got {self.stride}")

    @property
    def window(self) -> int:
        return self.n - 1


def split_with_stride(tokens: Sequence, cfg: SplitConfig) -> list:
    """Overlapping windows of ``n - 1`` tokens every ``stride`` tokens.

    A trailing window shorter than ``n - 1`` is dropped, so inputs shorter
    than one window give an empty list.
    """
    w, s = cfg.window, cfg.stride
    return [tokens[i:i + w] for i in range(0, len(tokens) - w + 1, s)]


def split_array(tokens, cfg: SplitConfig) -> np.ndarray:
    """Array version of :func:`split_with_stride`, shape ``(count, n - 1)``."""
    tokens = np.asarray(tokens)
    w, s = cfg.window, cfg.stride
    if len(tokens) < w:
        return np.empty((0, w), dtype=tokens.dtype)
    starts = np.arange(0, len(tokens) - w + 1, s)
    return tokens[starts[:, None] + np.arange(w)]


def prepare_direction(sentence, direction, bos_id: int) -> np.ndarray:
    """Model input for one payload: ``[BOS] + s`` or ``[BOS] + reversed(s)``."""
    return prepare_batch(np.asarray(sentence)[None, :], direction, bos_id)[0]


def prepare_batch(sentences, direction, bos_id: int) -> np.ndarray:
    sentences = np.asarray(sentences, dtype=np.int64)
    if (sentences == bos_id).any():
        raise InvalidArgumentError("payload already contains the BOS id")
    if Direction.parse(direction) is Direction.BW:
        sentences = sentences[:, ::-1]
    bos = np.full((len(sentences), 1), bos_id, dtype=np.int64)
    return np.concatenate([bos, sentences], axis=1)


def to_natural_order(per_position, direction) -> np.ndarray:
    """Map per-target values of a model input back to payload index order.

    Target ``t`` of a BW input is payload token ``n - 2 - t``; FW is unchanged.
    """
    arr = np.asarray(per_position)
    return arr[..., ::-1] if Direction.parse(direction) is Direction.BW else arr


def fisher_yates(n: int, seed: int) -> np.ndarray:
    """Seeded Fisher-Yates permutation of ``range(n)``.

    Uses one ``random()`` draw per swap from numpy's PCG64 so the permutation
    only depends on ``(n, seed)`` and this function.
    """
    perm = np.arange(n)
    if n < 2:
        return perm
    u = np.random.Generator(np.random.PCG64(seed)).random(n - 1)
    hi = np.arange(n - 1, 0, -1)
    js = np.floor(u * (hi + 1)).astype(np.int64)
    for i, j in zip(hi.tolist(), js.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@dataclass
class SentenceSet:
    sentences: np.ndarray
    seed: int | None = None
    indices: np.ndarray = field(default=None)

    def __post_init__(self):
        self.sentences = np.asarray(self.sentences, dtype=np.int64)
        if self.sentences.ndim != 2:
            raise InvalidArgumentError("sentences must be a 2-D array")
        if self.indices is None:
            self.indices = np.arange(len(self.sentences))

    def __len__(self):
        return len(self.sentences)


def shuffle_split(sentences, seed: int, n_validation: int) -> tuple[SentenceSet, SentenceSet]:
    """Shuffle with :func:`fisher_yates` and hold out the first ``n_validation``."""
    sentences = np.asarray(sentences, dtype=np.int64)
    if not 0 <= n_validation < len(sentences):
        raise InvalidArgumentError(
            f"n_validation={n_validation} must be below the sentence count {len(sentences)}")
    perm = fisher_yates(len(sentences), seed)
    val_idx, train_idx = perm[:n_validation], perm[n_validation:]
    return (SentenceSet(sentences[train_idx], seed, train_idx),
            SentenceSet(sentences[val_idx], seed, val_idx))


def payload_batches(sset: SentenceSet, batch_size: int) -> Iterator[np.ndarray]:
    if batch_size < 1:
        raise InvalidArgumentError("batch_size must be >= 1")
    for start in range(0, len(sset), batch_size):
        yield sset.sentences[start:start + batch_size]


def batch_iter(sset: SentenceSet, batch_size: int, direction, bos_id: int) -> Iterator[np.ndarray]:
    """Direction-prepared batches in set order.

    The order never depends on ``direction``: FW and BW runs over the same set
    see the same sentences in every batch.
    """
    for payload in payload_batches(sset, batch_size):
        yield prepare_batch(payload, direction, bos_id)


def reverse_chars(text: str) -> str:
    """Reverse by code point (never splits a multi-byte character)."""
    return text[::-1]
