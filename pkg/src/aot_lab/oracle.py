"""Exact entropy bookkeeping for finite languages.

Everything here is computed by exhaustive enumeration of an explicit measure;
nothing is estimated from samples.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .datapipe import Direction
from .errors import (InfiniteLossError, InvalidArgumentError, NotInSupportError,
                     ResourceLimitError)
from .f2linalg import invert
from .langgen import FiniteLanguage, LinearLangSpec, sieve_primes

DEFAULT_SUPPORT_CAP = 10**6


@dataclass(frozen=True)
class EntropyDecomposition:
    """Expected nats per position, in natural (left-to-right) index order."""

    direction: Direction
    per_position: np.ndarray

    @property
    def total(self) -> float:
        return float(self.per_position.sum())


@dataclass
class ConditionalTable:
    """Next-token distributions for one position.

    ``table`` maps the observed context (tokens before ``position`` for FW,
    tokens after it for BW, both in natural order) to a probability vector
    over the vocabulary.
    """

    direction: Direction
    position: int
    table: dict


def _check_support(lang: FiniteLanguage, cap: int):
    if len(lang) > cap:
        raise ResourceLimitError(f"language support {len(lang)} exceeds the enumeration cap {cap}")


def _context(sentence, position: int, direction: Direction) -> tuple:
    if direction is Direction.FW:
        return tuple(int(t) for t in sentence[:position])
    return tuple(int(t) for t in sentence[position + 1:])


def _prefix_mass(tokens: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Per-row mass of all rows sharing the same token prefix ``tokens``."""
    if tokens.shape[1] == 0:
        return np.ones(len(tokens))
    _, inverse = np.unique(tokens, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    return np.bincount(inverse, weights=probs)[inverse]


def conditional_nats(lang: FiniteLanguage, direction, cap: int = DEFAULT_SUPPORT_CAP) -> np.ndarray:
    """``(N, n)`` array of ``-ln P(token | context)`` for every sentence and position."""
    direction = Direction.parse(direction)
    _check_support(lang, cap)
    sents = lang.sentences
    if direction is Direction.BW:
        sents = sents[:, ::-1]
    n = sents.shape[1]
    log_mass = np.log(np.stack([_prefix_mass(sents[:, :d], lang.probabilities)
                                for d in range(n + 1)], axis=1))
    nats = log_mass[:, :-1] - log_mass[:, 1:]
    nats = np.maximum(nats, 0.0)
    return nats[:, ::-1] if direction is Direction.BW else nats


def exact_decomposition(lang: FiniteLanguage, direction,
                        cap: int = DEFAULT_SUPPORT_CAP) -> EntropyDecomposition:
    nats = conditional_nats(lang, direction, cap)
    per_pos = (lang.probabilities[:, None] * nats).sum(axis=0)
    return EntropyDecomposition(Direction.parse(direction), per_pos)


def sentence_decomposition(lang: FiniteLanguage, sentence, direction,
                           cap: int = DEFAULT_SUPPORT_CAP) -> np.ndarray:
    """Per-token nats of one supported sentence, natural index order."""
    idx = lang.index_of(sentence)
    if idx is None:
        raise NotInSupportError("sentence is not in the language's support")
    return conditional_nats(lang, direction, cap)[idx]


def entropy(lang: FiniteLanguage) -> float:
    p = lang.probabilities
    return float(-(p * np.log(p)).sum())


def chain_rule_check(lang: FiniteLanguage, cap: int = DEFAULT_SUPPORT_CAP) -> tuple[float, float, float]:
    """Total FW and BW conditional entropies and their absolute difference."""
    fw = exact_decomposition(lang, Direction.FW, cap).total
    bw = exact_decomposition(lang, Direction.BW, cap).total
    return fw, bw, abs(fw - bw)


def true_conditionals(lang: FiniteLanguage, direction, vocab_size: int) -> list[ConditionalTable]:
    """The measure's own conditionals, one table per position."""
    direction = Direction.parse(direction)
    nats = conditional_nats(lang, direction)
    tables = []
    for i in range(lang.length):
        table = {}
        for s, row in zip(lang.sentences, nats):
            ctx = _context(s, i, direction)
            dist = table.setdefault(ctx, np.zeros(vocab_size))
            dist[s[i]] = math.exp(-row[i])
        tables.append(ConditionalTable(direction, i, table))
    return tables


@dataclass(frozen=True)
class KLDecomposition:
    loss: float
    kl: float
    entropy: float


def kl_decomposition(tables: Sequence[ConditionalTable], lang: FiniteLanguage,
                     direction) -> KLDecomposition:
    """Expected cross-entropy of a model given as conditional tables.

    Raises
    ------
    InfiniteLossError
        If the model gives zero probability (or no distribution at all) to a
        context/token pair the language supports.
    """
    direction = Direction.parse(direction)
    by_pos: Mapping[int, ConditionalTable] = {t.position: t for t in tables}
    if set(by_pos) != set(range(lang.length)):
        raise InvalidArgumentError("need exactly one conditional table per position")
    for t in tables:
        if Direction.parse(t.direction) is not direction:
            raise InvalidArgumentError("conditional table direction mismatch")
    log_q = np.zeros(len(lang))
    for j, s in enumerate(lang.sentences):
        acc = 0.0
        for i in range(lang.length):
            dist = by_pos[i].table.get(_context(s, i, direction))
            q = 0.0 if dist is None else float(dist[s[i]])
            if q <= 0.0:
                raise InfiniteLossError(f"model assigns zero probability at position {i} of sentence {j}")
            acc += math.log(q)
        log_q[j] = acc
    p = lang.probabilities
    loss = float(-(p * log_q).sum())
    h = entropy(lang)
    kl = float((p * (np.log(p) - log_q)).sum())
    return KLDecomposition(loss=loss, kl=kl, entropy=h)


# -- prime language ----------------------------------------------------------

@dataclass(frozen=True)
class PrimeEntropyReport:
    k: int
    n_primes: int
    ln_pi: float
    H_p: float
    H_q_given_p: float
    H_pair: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def prime_entropy_report(k: int) -> PrimeEntropyReport:
    """Field-level entropies of ``(p, q)`` uniform over prime pairs ``p < q < 10**k``.

    With primes indexed ascending from 1, ``P(p = i-th prime) = (pi - i) / C``
    where ``C = pi (pi - 1) / 2``; given ``p``, ``q`` is uniform over the
    ``pi - i`` larger primes.
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    n = len(sieve_primes(10**k))
    c = n * (n - 1) // 2
    larger = np.arange(n - 1, 0, -1, dtype=np.float64)  # pi - i for i = 1..pi-1
    prob = larger / c
    h_p = float(-(prob * np.log(prob)).sum())
    h_q = float((prob * np.log(larger)).sum())
    return PrimeEntropyReport(k=k, n_primes=n, ln_pi=math.log(n), H_p=h_p,
                              H_q_given_p=h_q, H_pair=h_p + h_q)


# -- linear language ---------------------------------------------------------

MAX_EXACT_LINEAR_M = 22


def _walsh_hadamard(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    n = a.size
    h = 1
    while h < n:
        a = a.reshape(-1, 2, h)
        a = np.stack([a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]], axis=1)
        h *= 2
    return a.reshape(n)


def _bernoulli_vector_pmf(weights: np.ndarray, m: int, p: float) -> np.ndarray:
    return p ** weights * (1.0 - p) ** (m - weights)


def _popcount(v: np.ndarray) -> np.ndarray:
    return np.unpackbits(v.astype("<u4").view(np.uint8).reshape(-1, 4), axis=1).sum(axis=1)


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def linear_language_entropy(spec: LinearLangSpec) -> float:
    """Exact entropy in nats of one sentence of a (noisy) linear language.

    The observed ``x`` is uniform and independent of ``z = y_obs XOR M x_obs``,
    which equals ``M e_x XOR e_y`` for the noise vectors ``e_x, e_y``; hence
    ``H = m ln 2 + H(z)``. The law of ``z`` is an XOR-convolution computed with
    a Walsh-Hadamard transform over all ``2**m`` vectors.
    """
    m, p = spec.m, spec.p
    base = m * math.log(2.0)
    if p == 0.0:
        return base
    if spec.noise_scope == "y_only":
        return base + m * binary_entropy(p)
    if m > MAX_EXACT_LINEAR_M:
        raise ResourceLimitError(f"exact linear entropy limited to m <= {MAX_EXACT_LINEAR_M}")
    size = 1 << m
    inv_cols = [int.from_bytes(np.packbits(col, bitorder="little").tobytes(), "little")
                for col in invert(spec.matrix).entries.T]
    # preimage[z] = M^-1 z as a packed integer, built one column at a time
    preimage = np.zeros(1, dtype=np.uint32)
    for col in inv_cols:
        preimage = np.concatenate([preimage, preimage ^ np.uint32(col)])
    pmf_mx = _bernoulli_vector_pmf(_popcount(preimage), m, p)
    pmf_ey = _bernoulli_vector_pmf(_popcount(np.arange(size, dtype=np.uint32)), m, p)
    pmf_z = _walsh_hadamard(_walsh_hadamard(pmf_mx) * _walsh_hadamard(pmf_ey)) / size
    pmf_z = pmf_z[pmf_z > 0]
    return base + float(-(pmf_z * np.log(pmf_z)).sum())


def linear_language_entropy_floor(spec: LinearLangSpec) -> float:
    """Exact entropy when tractable, else the bound ``m (ln 2 + h(p))``."""
    try:
        return linear_language_entropy(spec)
    except ResourceLimitError:
        return spec.m * (math.log(2.0) + binary_entropy(spec.p))


# -- reports -----------------------------------------------------------------

def decomposition_csv(decomps: Sequence[EntropyDecomposition]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["position", "direction", "nats"])
    for d in decomps:
        for i, v in enumerate(d.per_position):
            w.writerow([i, d.direction.value, repr(float(v))])
    return buf.getvalue()
