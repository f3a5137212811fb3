"""Synthetic languages: linear GF(2) maps, prime products, and the 81-line
multiplication table.

Sentences are 1-D integer arrays of token ids; batches are 2-D arrays with
one sentence per row. None of the generators add a BOS token.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, ResourceLimitError
from .f2linalg import F2Matrix, is_invertible, mat_vec_mul

BOS = "<bos>"
MAX_SIEVE_LIMIT = 10**8


class Vocab:
    """Ordered, duplicate-free list of token strings."""

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if len(set(tokens)) != len(tokens):
            raise InvalidArgumentError("vocabulary tokens must be distinct")
        self.tokens = tokens
        self.ids = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __repr__(self):
        return f"Vocab({list(self.tokens)!r})"

    def __getitem__(self, token: str) -> int:
        return self.ids[token]

    @property
    def bos_id(self) -> int | None:
        return self.ids.get(BOS)

    def with_bos(self) -> "Vocab":
        """Copy of this vocabulary with ``<bos>`` appended (no-op if present)."""
        if BOS in self.ids:
            return self
        return Vocab(self.tokens + (BOS,))

    def encode(self, symbols: Sequence[str]) -> np.ndarray:
        return np.array([self.ids[s] for s in symbols], dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self.tokens[int(i)] for i in ids]

    def render(self, ids) -> str:
        return "".join(self.decode(ids))

    def to_text(self) -> str:
        return "".join(_escape(t) + "\n" for t in self.tokens)

    @classmethod
    def from_text(cls, text: str) -> "Vocab":
        return cls([_unescape(line) for line in text.split("\n")[:-1]])


_ESCAPES = {"\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t", " ": "\\s"}
_UNESCAPES = {"\\": "\\", "n": "\n", "r": "\r", "t": "\t", "s": " "}


def _escape(token: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in token)


def _unescape(text: str) -> str:
    out, it = [], iter(text)
    for c in it:
        if c == "\\":
            nxt = next(it, None)
            if nxt not in _UNESCAPES:
                raise InvalidArgumentError(f"bad escape sequence in {text!r}")
            out.append(_UNESCAPES[nxt])
        else:
            out.append(c)
    return "".join(out)


LINEAR_VOCAB = Vocab(["0", "1", "_"])
PRIME_VOCAB = Vocab([str(d) for d in range(10)] + ["×", "↔"])
MULT_VOCAB = Vocab([str(d) for d in range(10)] + ["×", "="])


# -- finite measures ---------------------------------------------------------

class FiniteLanguage:
    """Explicit probability measure on a finite set of equal-length sentences."""

    def __init__(self, sentences, probabilities, vocab: Vocab | None = None):
        sents = np.asarray(sentences, dtype=np.int64)
        probs = np.asarray(probabilities, dtype=np.float64)
        if sents.ndim != 2 or sents.shape[0] == 0:
            raise InvalidArgumentError("need a non-empty 2-D array of equal-length sentences")
        if probs.shape != (sents.shape[0],):
            raise InvalidArgumentError("one probability per sentence is required")
        if (probs <= 0).any():
            raise InvalidArgumentError("probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"probabilities sum to {probs.sum()!r}, not 1")
        if len({s.tobytes() for s in sents}) != len(sents):
            raise InvalidArgumentError("sentences must be distinct")
        if vocab is not None and sents.max() >= len(vocab):
            raise InvalidArgumentError("token id outside the vocabulary")
        self.sentences = sents
        self.probabilities = probs
        self.vocab = vocab

    @classmethod
    def uniform(cls, sentences, vocab: Vocab | None = None) -> "FiniteLanguage":
        sents = np.asarray(sentences, dtype=np.int64)
        return cls(sents, np.full(len(sents), 1.0 / len(sents)), vocab)

    def __len__(self):
        return len(self.sentences)

    @property
    def length(self) -> int:
        return self.sentences.shape[1]

    def index_of(self, sentence) -> int | None:
        key = np.asarray(sentence, dtype=np.int64)
        hits = np.flatnonzero((self.sentences == key).all(axis=1)) if key.shape == (self.length,) else []
        return int(hits[0]) if len(hits) else None


def mult_toy_language() -> FiniteLanguage:
    """The 81 sentences ``A×B=CD`` for 1 <= A, B <= 9, uniformly weighted."""
    rows = []
    for a, b in itertools.product(range(1, 10), repeat=2):
        c, d = divmod(a * b, 10)
        rows.append([a, MULT_VOCAB["×"], b, MULT_VOCAB["="], c, d])
    return FiniteLanguage.uniform(rows, MULT_VOCAB)


# -- linear languages --------------------------------------------------------

@dataclass(frozen=True)
class LinearLangSpec:
    """``x`` (pads) ``y`` with ``y = M x`` over GF(2) and per-bit flip noise."""

    matrix: F2Matrix
    p: float = 0.0
    pad_count: int = 7
    noise_scope: str = "all"

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise InvalidArgumentError(f"flip probability {self.p} outside [0, 1)")
        if self.pad_count < 0:
            raise InvalidArgumentError("pad_count must be >= 0")
        if self.noise_scope not in ("all", "y_only"):
            raise InvalidArgumentError(f"unknown noise_scope {self.noise_scope!r}")
        if not is_invertible(self.matrix):
            raise InvalidArgumentError("linear language needs an invertible matrix")

    @property
    def m(self) -> int:
        return self.matrix.n

    @property
    def length(self) -> int:
        return 2 * self.m + self.pad_count

    @property
    def vocab(self) -> Vocab:
        return LINEAR_VOCAB


def gen_linear_batch(spec: LinearLangSpec, count: int, rng: np.random.Generator,
                     x=None) -> np.ndarray:
    """``count`` sentences of the linear language as a ``(count, 2m+pad)`` array.

    ``x`` optionally fixes the clean input vectors (shape ``(count, m)``).
    """
    m = spec.m
    if x is None:
        x = rng.integers(0, 2, size=(count, m), dtype=np.uint8)
    else:
        x = np.asarray(x, dtype=np.uint8).reshape(count, m)
    y = mat_vec_mul(spec.matrix, x)
    pad = np.full((count, spec.pad_count), LINEAR_VOCAB["_"], dtype=np.int64)
    out = np.concatenate([x.astype(np.int64), pad, y.astype(np.int64)], axis=1)
    if spec.p > 0:
        flips = rng.random((count, spec.length)) < spec.p
        flips[:, m:m + spec.pad_count] = False
        if spec.noise_scope == "y_only":
            flips[:, :m] = False
        out ^= flips
    return out


def gen_linear_sentence(spec: LinearLangSpec, rng: np.random.Generator, x=None) -> np.ndarray:
    return gen_linear_batch(spec, 1, rng, x=None if x is None else [x])[0]


# -- primes ------------------------------------------------------------------

def sieve_primes(limit: int, max_limit: int = MAX_SIEVE_LIMIT) -> np.ndarray:
    """All primes strictly below ``limit``, ascending."""
    if limit < 2:
        raise InvalidArgumentError(f"sieve limit must be >= 2, got {limit}")
    if limit > max_limit:
        raise ResourceLimitError(f"sieve limit {limit} exceeds budget {max_limit}")
    is_prime = np.ones(limit, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit - 1) + 1):
        if is_prime[p]:
            is_prime[p * p::p] = False
    return np.flatnonzero(is_prime)


def rev_digits(value: int, width: int) -> str:
    """Zero-pad ``value`` to ``width`` digits and reverse the string."""
    if value < 0 or value >= 10**width:
        raise InvalidArgumentError(f"{value} does not fit in {width} digits")
    return str(value).zfill(width)[::-1]


@dataclass
class PrimeLangSpec:
    """``p ××× q ↔↔↔↔↔↔↔ rev(pq)`` with primes ``p < q < 10**k``."""

    k: int
    times_reps: int = 3
    arrow_reps: int = 7
    max_sieve_limit: int = MAX_SIEVE_LIMIT
    primes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        self.primes = sieve_primes(10**self.k, self.max_sieve_limit)
        self._prime_set = frozenset(int(p) for p in self.primes)

    @property
    def length(self) -> int:
        return 4 * self.k + self.times_reps + self.arrow_reps

    @property
    def vocab(self) -> Vocab:
        return PRIME_VOCAB

    @property
    def n_pairs(self) -> int:
        n = len(self.primes)
        return n * (n - 1) // 2

    def fields(self) -> dict[str, slice]:
        """Token slices of p, ×, q, ↔ and rev(pq) inside a sentence."""
        k = self.k
        a = k + self.times_reps
        b = a + k + self.arrow_reps
        return {"p": slice(0, k), "times": slice(k, a), "q": slice(a, a + k),
                "arrow": slice(a + k, b), "rev": slice(b, b + 2 * k)}

    def is_prime(self, v: int) -> bool:
        return v in self._prime_set


def gen_prime_pairs(spec: PrimeLangSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` pairs, uniform over ``{(p, q): p < q}``, drawn with replacement."""
    n = len(spec.primes)
    if n < 2:
        raise InvalidArgumentError("fewer than two primes available")
    a = rng.integers(0, n, size=count)
    b = rng.integers(0, n - 1, size=count)
    b = b + (b >= a)
    idx = np.sort(np.stack([a, b], axis=1), axis=1)
    return spec.primes[idx]


def gen_prime_pair(spec: PrimeLangSpec, rng: np.random.Generator) -> tuple[int, int]:
    p, q = gen_prime_pairs(spec, 1, rng)[0]
    return int(p), int(q)


def format_prime_sentence(p: int, q: int, spec: PrimeLangSpec) -> np.ndarray:
    if not (p < q and spec.is_prime(p) and spec.is_prime(q)):
        raise InvalidArgumentError(f"need primes p < q < 10**{spec.k}, got ({p}, {q})")
    k = spec.k
    text = (list(str(p).zfill(k)) + ["×"] * spec.times_reps + list(str(q).zfill(k))
            + ["↔"] * spec.arrow_reps + list(rev_digits(p * q, 2 * k)))
    return PRIME_VOCAB.encode(text)


def gen_prime_batch(spec: PrimeLangSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    pairs = gen_prime_pairs(spec, count, rng)
    k = spec.k
    out = np.empty((count, spec.length), dtype=np.int64)
    f = spec.fields()
    out[:, f["times"]] = PRIME_VOCAB["×"]
    out[:, f["arrow"]] = PRIME_VOCAB["↔"]
    p, q = pairs[:, 0], pairs[:, 1]
    prod = p * q
    for d in range(k):
        place = 10 ** (k - 1 - d)
        out[:, f["p"].start + d] = (p // place) % 10
        out[:, f["q"].start + d] = (q // place) % 10
    for d in range(2 * k):
        out[:, f["rev"].start + d] = (prod // 10**d) % 10
    return out


def decode_prime_sentence(sentence, spec: PrimeLangSpec) -> tuple[int, int, int]:
    """Return ``(p, q, product)`` read back from a sentence."""
    f = spec.fields()
    digits = PRIME_VOCAB.decode(sentence)
    p = int("".join(digits[f["p"]]))
    q = int("".join(digits[f["q"]]))
    prod = int("".join(digits[f["rev"]])[::-1])
    return p, q, prod
