"""Character-level byte-pair encoding.

Text is first cut into chunks of optional leading whitespace plus one run of
non-whitespace (``\\s*\\S+``), and merges never cross a chunk boundary. The
base alphabet is unicode code points, never bytes.
"""

from __future__ import annotations

import heapq
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, UnknownSymbolError
from .langgen import BOS, Vocab, _escape, _unescape

_CHUNK_RE = re.compile(r"\s*\S+|\s+")


def pretokenize(text: str) -> list[str]:
    return _CHUNK_RE.findall(text)


@dataclass
class BpeModel:
    vocab: Vocab
    merges: list[tuple[str, str]]
    _ranks: dict = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache = {}

    @property
    def bos_id(self) -> int:
        return self.vocab[BOS]

    def to_text(self) -> str:
        lines = [str(len(self.vocab))]
        lines += [_escape(t) for t in self.vocab.tokens]
        lines += [f"{_escape(a)} {_escape(b)}" for a, b in self.merges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BpeModel":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        size = int(lines[0])
        vocab = Vocab([_unescape(t) for t in lines[1:1 + size]])
        merges = []
        for ln in lines[1 + size:]:
            parts = ln.split(" ")
            if len(parts) != 2:
                raise InvalidArgumentError(f"bad merge line {ln!r}")
            merges.append((_unescape(parts[0]), _unescape(parts[1])))
        return cls(vocab, merges)

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BpeModel":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def _encode_chunk(self, chunk: str) -> list[str]:
        cached = self._cache.get(chunk)
        if cached is not None:
            return cached
        for ch in chunk:
            if ch not in self.vocab.ids:
                raise UnknownSymbolError(f"character {ch!r} is not in the BPE alphabet")
        symbols = list(chunk)
        while len(symbols) > 1:
            ranked = [(self._ranks.get(p, len(self._ranks)), i)
                      for i, p in enumerate(zip(symbols, symbols[1:]))]
            best, _ = min(ranked)
            if best == len(self._ranks):
                break
            a, b = self.merges[best]
            symbols = _merge_symbols(symbols, a, b)
        self._cache[chunk] = symbols
        return symbols


def _merge_symbols(symbols: list[str], a: str, b: str) -> list[str]:
    out, i = [], 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _pairs(word):
    return Counter(zip(word, word[1:]))


def bpe_train(corpus: str, vocab_size: int) -> BpeModel:
    """Learn merges greedily by pair frequency.

    Stops when the vocabulary (``<bos>`` + alphabet + merged tokens) reaches
    ``vocab_size`` or when no pair occurs at least twice. Equal counts are
    resolved by merging the lexicographically smallest pair.
    """
    if not corpus:
        raise InvalidArgumentError("cannot train BPE on an empty corpus")
    alphabet = sorted(set(corpus))
    if vocab_size < len(alphabet) + 1:
        raise InvalidArgumentError(
            f"vocab_size={vocab_size} is below alphabet size + BOS = {len(alphabet) + 1}")
    tokens = [BOS] + alphabet
    known = set(tokens)
    merges: list[tuple[str, str]] = []

    chunk_freq = Counter(pretokenize(corpus))
    words = [list(c) for c in chunk_freq]
    freqs = list(chunk_freq.values())
    counts: Counter = Counter()
    where = defaultdict(set)
    for wid, w in enumerate(words):
        for pair, c in _pairs(w).items():
            counts[pair] += c * freqs[wid]
            where[pair].add(wid)
    heap = [(-c, pair) for pair, c in counts.items()]
    heapq.heapify(heap)

    while len(tokens) < vocab_size and heap:
        neg, pair = heapq.heappop(heap)
        if counts.get(pair, 0) != -neg:
            continue
        if -neg < 2:
            break
        a, b = pair
        merges.append(pair)
        if a + b not in known:
            tokens.append(a + b)
            known.add(a + b)
        touched = set()
        for wid in sorted(where.pop(pair, ())):
            old = words[wid]
            new = _merge_symbols(old, a, b)
            if new == old:
                continue
            f = freqs[wid]
            for p, c in _pairs(old).items():
                counts[p] -= c * f
                touched.add(p)
            for p, c in _pairs(new).items():
                counts[p] += c * f
                where[p].add(wid)
                touched.add(p)
            words[wid] = new
        counts.pop(pair, None)
        for p in touched:
            c = counts.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                counts.pop(p, None)
    return BpeModel(Vocab(tokens), merges)


def bpe_encode(model: BpeModel, text: str) -> np.ndarray:
    ids = model.vocab.ids
    out = [ids[s] for chunk in pretokenize(text) for s in model._encode_chunk(chunk)]
    return np.array(out, dtype=np.int64)


def bpe_decode(model: BpeModel, ids) -> str:
    """Concatenate token strings; BOS ids are dropped."""
    bos = model.bos_id
    toks = model.vocab.tokens
    return "".join(toks[int(i)] for i in ids if int(i) != bos)
