"""Dense linear algebra over GF(2).

Matrices are stored as ``uint8`` arrays for interop with numpy; inversion and
rank work on rows packed into Python integers (bit ``j`` of a row is column
``j``), which is fast enough for the n <= 64 sizes used here.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GenerationFailure, InvalidArgumentError, SingularMatrixError

DEFAULT_MAX_ATTEMPTS = 1000


class F2Matrix:
    """Square matrix with entries in GF(2).

    Parameters
    ----------
    entries : array_like of shape (n, n)
        Values must be 0 or 1.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        arr = np.asarray(entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise InvalidArgumentError(f"expected a non-empty square matrix, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidArgumentError("entries must be 0 or 1")
        arr = arr.astype(np.uint8, copy=True)
        arr.setflags(write=False)
        self._entries = arr

    @property
    def n(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        """Read-only ``(n, n)`` uint8 view."""
        return self._entries

    def packed_rows(self) -> list[int]:
        packed = np.packbits(self._entries, axis=1, bitorder="little")
        return [int.from_bytes(row.tobytes(), "little") for row in packed]

    @classmethod
    def from_packed_rows(cls, rows: Sequence[int], n: int) -> "F2Matrix":
        width = (n + 7) // 8
        raw = np.frombuffer(b"".join(r.to_bytes(width, "little") for r in rows), dtype=np.uint8)
        bits = np.unpackbits(raw.reshape(n, width), axis=1, bitorder="little")
        return cls(bits[:, :n])

    def __eq__(self, other):
        if not isinstance(other, F2Matrix):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self._entries, other._entries))

    def __hash__(self):
        return hash((self.n, self._entries.tobytes()))

    def __repr__(self):
        rows = ", ".join("".join(map(str, r)) for r in self._entries)
        return f"F2Matrix([{rows}])"

    def to_text(self) -> str:
        lines = [str(self.n)] + ["".join(str(int(b)) for b in row) for row in self._entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "F2Matrix":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise InvalidArgumentError("empty matrix text")
        n = int(lines[0])
        rows = lines[1:]
        if len(rows) != n or any(len(r) != n or set(r) - {"0", "1"} for r in rows):
            raise InvalidArgumentError(f"malformed {n}x{n} matrix text")
        return cls([[int(c) for c in r] for r in rows])


@dataclass(frozen=True)
class SparsityStats:
    nnz: int
    n: int

    @property
    def zeros(self) -> int:
        return self.n * self.n - self.nnz

    @property
    def sparsity(self) -> float:
        """Fraction of zero entries."""
        return 1.0 - self.nnz / (self.n * self.n)


def mat_identity(n: int) -> F2Matrix:
    if n < 1:
        raise InvalidArgumentError(f"invalid dimension {n}")
    return F2Matrix(np.eye(n, dtype=np.uint8))


def mat_vec_mul(a: F2Matrix, x) -> np.ndarray:
    """Compute ``a @ x`` over GF(2).

    ``x`` may be a single bit vector of length n or a stack of them with
    shape ``(..., n)``; each trailing vector is multiplied independently.
    """
    x = np.asarray(x)
    if x.shape[-1:] != (a.n,):
        raise InvalidArgumentError(f"vector length {x.shape[-1:]} does not match n={a.n}")
    return ((x.astype(np.int64) @ a.entries.T.astype(np.int64)) & 1).astype(np.uint8)


def mat_mul(a: F2Matrix, b: F2Matrix) -> F2Matrix:
    if a.n != b.n:
        raise InvalidArgumentError(f"dimension mismatch: {a.n} vs {b.n}")
    prod = a.entries.astype(np.int64) @ b.entries.astype(np.int64)
    return F2Matrix(prod & 1)


def _eliminate(rows: list[int], n: int, aug: list[int] | None):
    """In-place Gauss-Jordan on packed rows; returns the rank.

    The pivot for column c is the first row at or below the current pivot
    row with bit c set.
    """
    rank = 0
    for col in range(n):
        bit = 1 << col
        pivot = next((r for r in range(rank, n) if rows[r] & bit), None)
        if pivot is None:
            continue
        if pivot != rank:
            rows[rank], rows[pivot] = rows[pivot], rows[rank]
            if aug is not None:
                aug[rank], aug[pivot] = aug[pivot], aug[rank]
        prow = rows[rank]
        paug = aug[rank] if aug is not None else 0
        for r in range(n):
            if r != rank and rows[r] & bit:
                rows[r] ^= prow
                if aug is not None:
                    aug[r] ^= paug
        rank += 1
    return rank


def rank(a: F2Matrix) -> int:
    return _eliminate(a.packed_rows(), a.n, None)


def is_invertible(a: F2Matrix) -> bool:
    return rank(a) == a.n


def invert(a: F2Matrix) -> F2Matrix:
    """Inverse over GF(2) by Gauss-Jordan elimination.

    Raises
    ------
    SingularMatrixError
        If ``a`` has rank below n; the achieved rank is attached.
    """
    n = a.n
    rows = a.packed_rows()
    aug = [1 << i for i in range(n)]
    r = _eliminate(rows, n, aug)
    if r < n:
        raise SingularMatrixError(r, n)
    return F2Matrix.from_packed_rows(aug, n)


def sparsity(a: F2Matrix) -> SparsityStats:
    return SparsityStats(nnz=int(a.entries.sum(dtype=np.int64)), n=a.n)


def _flip(entries: np.ndarray, flat_positions: np.ndarray) -> np.ndarray:
    out = entries.copy().reshape(-1)
    out[flat_positions] ^= 1
    return out.reshape(entries.shape)


def gen_sparse_invertible(n: int, k: int, rng: np.random.Generator,
                          max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> F2Matrix:
    """Random invertible matrix with roughly ``k`` nonzeros.

    Starts from the identity and flips ``k - n`` distinct positions chosen
    uniformly among all n*n entries (diagonal included, so the realized nnz
    can fall below ``k``). Draws are repeated from the same generator until
    the result is invertible.
    """
    if n < 1:
        raise InvalidArgumentError(f"invalid dimension {n}")
    n_flips = k - n
    if n_flips < 0 or n_flips > n * n:
        raise InvalidArgumentError(f"need n <= k <= n + n*n, got n={n}, k={k}")
    ident = np.eye(n, dtype=np.uint8)
    if n_flips == 0:
        return F2Matrix(ident)
    for _ in range(max_attempts):
        pos = rng.choice(n * n, size=n_flips, replace=False)
        cand = F2Matrix(_flip(ident, pos))
        if is_invertible(cand):
            return cand
    raise GenerationFailure(f"no invertible {n}x{n} matrix found for k={k}", max_attempts)


def perturb_invertible(m: F2Matrix, e: int, rng: np.random.Generator,
                       max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> F2Matrix:
    """Flip exactly ``e`` distinct entries of ``m``, keeping it invertible."""
    n = m.n
    if not 0 <= e <= n * n:
        raise InvalidArgumentError(f"flip count {e} outside [0, {n * n}]")
    if e == 0:
        return m
    for _ in range(max_attempts):
        pos = rng.choice(n * n, size=e, replace=False)
        cand = F2Matrix(_flip(m.entries, pos))
        if is_invertible(cand):
            return cand
    raise GenerationFailure(f"could not keep matrix invertible with {e} flips", max_attempts)


@dataclass(frozen=True)
class ScanRow:
    k: int
    mean_nnz_inverse: float
    std_nnz_inverse: float
    trials: int
    mean_nnz: float


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one trial, fixed by ``(seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def sparsity_scan(n: int, k_values: Iterable[int], trials: int, seed: int = 0) -> list[ScanRow]:
    """Mean nnz of the inverse of random sparse invertible matrices, per k."""
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    out = []
    for k in k_values:
        if k < n:
            raise InvalidArgumentError(f"k={k} below n={n}")
        fwd = np.empty(trials)
        inv = np.empty(trials)
        for t in range(trials):
            a = gen_sparse_invertible(n, k, trial_rng(seed, k, t))
            fwd[t] = sparsity(a).nnz
            inv[t] = sparsity(invert(a)).nnz
        std = float(inv.std(ddof=1)) if trials > 1 else 0.0
        out.append(ScanRow(k, float(inv.mean()), std, trials, float(fwd.mean())))
    return out


def scan_to_csv(rows: Sequence[ScanRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "mean_nnz_inverse", "std_nnz_inverse", "trials"])
    for r in rows:
        w.writerow([r.k, repr(r.mean_nnz_inverse), repr(r.std_nnz_inverse), r.trials])
    return buf.getvalue()
