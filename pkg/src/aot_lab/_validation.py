"""Input checks used by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .datapipe import SentenceSet
from .errors import InvalidArgumentError


def check_sentences(X, vocab_size: int | None = None, length: int | None = None) -> np.ndarray:
    """Return ``X`` as a 2-D int64 array of token ids, validating its range."""
    if isinstance(X, SentenceSet):
        X = X.sentences
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"expected a 2-D array of sentences, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.array_equal(arr, np.round(arr)):
            raise InvalidArgumentError("token ids must be integers")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise InvalidArgumentError("token ids must be non-negative")
    if vocab_size is not None and arr.size and arr.max() >= vocab_size:
        raise InvalidArgumentError(f"token id {arr.max()} outside vocabulary of size {vocab_size}")
    if length is not None and arr.shape[1] != length:
        raise InvalidArgumentError(f"expected sentences of length {length}, got {arr.shape[1]}")
    return arr


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise InvalidArgumentError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
