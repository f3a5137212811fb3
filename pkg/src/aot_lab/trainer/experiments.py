"""Paired FW/BW training and the three synthetic experiments."""

from __future__ import annotations

import copy
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from ..datapipe import Direction, SentenceSet, shuffle_split
from ..errors import ConsistencyError, InvalidArgumentError
from ..estimators import AutoregressiveTransformer
from ..f2linalg import (F2Matrix, gen_sparse_invertible, invert, mat_vec_mul, perturb_invertible,
                        sparsity, trial_rng)
from ..langgen import (LinearLangSpec, PrimeLangSpec, Vocab, gen_linear_batch, gen_prime_batch,
                       mult_toy_language)
from ..oracle import entropy, linear_language_entropy_floor, prime_entropy_report
from .runlog import RunLog
from .spec import ExperimentSpec, LanguageSpec

FLOOR_SE_MULTIPLIER = 4.0
FLOOR_ABS_TOL = 1e-3


# -- languages ---------------------------------------------------------------

@dataclass
class Language:
    """A sampler plus its exact entropy per sentence."""

    kind: str
    vocab: Vocab
    length: int
    entropy: float
    linear: LinearLangSpec | None = None
    primes: PrimeLangSpec | None = None

    @property
    def floor_per_token(self) -> float:
        return self.entropy / self.length

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "linear":
            return gen_linear_batch(self.linear, count, rng)
        if self.kind == "primes":
            return gen_prime_batch(self.primes, count, rng)
        toy = mult_toy_language()
        return toy.sentences[rng.integers(0, len(toy), size=count)]


def resolve_matrix(lang: LanguageSpec, *keys: int) -> F2Matrix:
    """The language's matrix: from ``matrix_file`` or generated from
    ``(matrix_seed, k_offset, *keys)``."""
    if lang.matrix_file:
        return F2Matrix.from_text(Path(lang.matrix_file).read_text())
    return gen_sparse_invertible(lang.m, lang.m + lang.k_offset,
                                 trial_rng(lang.matrix_seed, lang.k_offset, *keys))


def build_language(lang: LanguageSpec, matrix: F2Matrix | None = None) -> Language:
    if lang.kind == "linear":
        matrix = matrix if matrix is not None else resolve_matrix(lang)
        spec = LinearLangSpec(matrix, lang.noise_p, lang.pad_count, lang.noise_scope)
        return Language("linear", spec.vocab, spec.length, linear_language_entropy_floor(spec), linear=spec)
    if lang.kind == "primes":
        spec = PrimeLangSpec(lang.k)
        return Language("primes", spec.vocab, spec.length, math.log(spec.n_pairs), primes=spec)
    if lang.kind == "mult_toy":
        toy = mult_toy_language()
        return Language("mult_toy", toy.vocab, toy.length, entropy(toy))
    raise InvalidArgumentError(f"unknown language kind {lang.kind!r}")


def make_dataset(language: Language, n_train: int, n_val: int, seed: int) -> tuple[SentenceSet, SentenceSet]:
    raw = language.sample(n_train + n_val, np.random.default_rng(np.random.SeedSequence([seed, 1])))
    return shuffle_split(raw, seed, n_val)


# -- paired runs -------------------------------------------------------------

def make_estimator(spec: ExperimentSpec, direction, seed: int, vocab_size: int,
                   n_steps: int | None = None) -> AutoregressiveTransformer:
    return AutoregressiveTransformer(
        model=spec.model, vocab_size=vocab_size, direction=Direction.parse(direction).value,
        n_steps=n_steps or spec.steps, batch_size=spec.batch_size, lr=spec.lr,
        warmup_steps=spec.warmup_steps, restart_period=spec.restart_period, t_mult=spec.t_mult,
        min_lr=spec.min_lr, weight_decay=spec.weight_decay, dropout=spec.dropout,
        grad_clip=spec.grad_clip, eval_every=spec.eval_every, seed=seed, dropout_seed=seed)


def check_floor(log: RunLog, floor_per_token: float):
    """Raise if a run's final validation loss beats the entropy floor by more
    than sampling noise allows."""
    fin = log.final
    tol = FLOOR_SE_MULTIPLIER * fin.sentence_se + FLOOR_ABS_TOL
    if fin.loss < floor_per_token - tol:
        raise ConsistencyError(
            f"{log.direction} run reports {fin.loss:.5f} nats/token, below the entropy floor "
            f"{floor_per_token:.5f} (tolerance {tol:.5f})")


def check_paired(fw: RunLog, bw: RunLog):
    if fw.stream_checksum != bw.stream_checksum:
        raise ConsistencyError("FW and BW runs consumed different batch streams")
    if fw.dropout_checksum != bw.dropout_checksum:
        raise ConsistencyError("FW and BW runs consumed different dropout streams")


@dataclass
class PairResult:
    models: dict
    logs: dict
    floor: float

    @property
    def fw(self) -> RunLog:
        return self.logs["fw"]

    @property
    def bw(self) -> RunLog:
        return self.logs["bw"]


def train_directions(spec: ExperimentSpec, language: Language, train: SentenceSet, val: SentenceSet,
                     seed: int, directions=("fw", "bw")) -> PairResult:
    """Train one model per direction on identical streams and seeds."""
    models, logs = {}, {}
    for d in directions:
        d = Direction.parse(d).value
        est = make_estimator(spec, d, seed, len(language.vocab)).fit(train, X_val=val)
        check_floor(est.log_, language.floor_per_token)
        models[d], logs[d] = est, est.log_
    if "fw" in logs and "bw" in logs:
        check_paired(logs["fw"], logs["bw"])
    return PairResult(models, logs, language.floor_per_token)


def train_pair(spec: ExperimentSpec, seed: int | None = None) -> PairResult:
    seed = spec.seeds[0] if seed is None else seed
    language = build_language(spec.language)
    train, val = make_dataset(language, spec.train_budget, spec.n_val, spec.data_seed)
    return train_directions(spec, language, train, val, seed, ("fw", "bw"))


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- sparsity scan -----------------------------------------------------------

def _scan_one(args):
    spec, k, seed = args
    lang = replace(spec.language, k_offset=k)
    matrix = resolve_matrix(lang, seed)
    language = build_language(lang, matrix)
    train, val = make_dataset(language, spec.train_budget, spec.n_val, spec.data_seed + seed)
    pair = train_directions(spec, language, train, val, seed, spec.directions)
    nnz, nnz_inv = sparsity(matrix).nnz, sparsity(invert(matrix)).nnz
    return [{"k": k, "seed": seed, "direction": d, "nnz": nnz, "nnz_inverse": nnz_inv,
             "final_loss": log.final_loss, "floor": pair.floor, "log": log}
            for d, log in pair.logs.items()]


def sparsity_scan_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[dict]:
    """Final loss per (k offset, seed, direction) for matrices with m + k nonzeros.

    Each seed draws its own matrix and initialization.
    """
    if spec.language.kind != "linear":
        raise InvalidArgumentError("the sparsity scan needs a linear language")
    grid = [(spec, k, s) for k in spec.k_offsets for s in spec.seeds]
    return [row for rows in _map(_scan_one, grid, jobs) for row in rows]


def summarize(rows: list[dict], key: str, value: str = "final_loss") -> list[dict]:
    """Mean and sample std of ``value`` grouped by ``(key, direction)``."""
    out = []
    groups = sorted({(r[key], r["direction"]) for r in rows})
    for kv, d in groups:
        vals = np.array([r[value] for r in rows if r[key] == kv and r["direction"] == d])
        out.append({key: kv, "direction": d, "mean": float(vals.mean()),
                    "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0, "n": len(vals)})
    return out


def spearman_permutation_test(x, y) -> tuple[float, float]:
    """Spearman rho and its one-sided (rho > 0) permutation p-value.

    Exact over all orderings for up to 8 points, otherwise 20000 random
    permutations with a fixed seed.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    rho = float(stats.spearmanr(x, y).statistic)
    if len(x) <= 8:
        perms = (np.array(p) for p in itertools.permutations(range(len(y))))
        null = [stats.spearmanr(x, y[p]).statistic for p in perms]
    else:
        rng = np.random.default_rng(0)
        null = [stats.spearmanr(x, rng.permutation(y)).statistic for _ in range(20000)]
    null = np.asarray(null)
    p = float(np.mean(null >= rho - 1e-12))
    return rho, p


# -- sparse update -----------------------------------------------------------

def changed_rows(a: F2Matrix, b: F2Matrix) -> int:
    return int((a.entries != b.entries).any(axis=1).sum())


def clone_estimator(est: AutoregressiveTransformer) -> AutoregressiveTransformer:
    gen_state = est.model_.dropout_gen.get_state()
    saved = est.model_.dropout_gen
    est.model_.dropout_gen = None
    try:
        twin = copy.deepcopy(est)
    finally:
        est.model_.dropout_gen = saved
    twin.model_.dropout_gen = type(saved)()
    twin.model_.dropout_gen.set_state(gen_state)
    return twin


@dataclass
class UpdateResult:
    rows: list = field(default_factory=list)
    prior: PairResult | None = None
    matrix: F2Matrix | None = None


def sparse_update_experiment(spec: ExperimentSpec) -> UpdateResult:
    """Fine-tune converged FW/BW priors on sparsely perturbed matrices.

    One prior pair is trained with ``prior_seed``. For every flip count ``e``
    and every seed, the prior matrix is perturbed by ``e`` invertibility-
    preserving flips and both priors are fine-tuned on the new language for
    ``fine_steps`` steps, so means and stds run over perturbation draws and
    fine-tuning data/dropout seeds.
    """
    if spec.language.kind != "linear":
        raise InvalidArgumentError("the sparse-update experiment needs a linear language")
    matrix = resolve_matrix(spec.language)
    base = build_language(spec.language, matrix)
    train, val = make_dataset(base, spec.train_budget, spec.n_val, spec.data_seed)
    prior = train_directions(spec, base, train, val, spec.prior_seed)
    result = UpdateResult(prior=prior, matrix=matrix)
    inv = invert(matrix)
    n_fine = spec.fine_n_train or spec.fine_steps * spec.batch_size
    for e in spec.flips:
        for seed in spec.seeds:
            new_m = perturb_invertible(matrix, e, trial_rng(spec.language.matrix_seed, 1000 + e, seed))
            lang = build_language(spec.language, new_m)
            ftrain, fval = make_dataset(lang, n_fine, spec.n_val, spec.data_seed + 7919 * (seed + 1) + e)
            before, logs = {}, {}
            for d, est in prior.models.items():
                twin = clone_estimator(est)
                twin.model_.reseed_dropout(seed)
                before[d] = twin.loss(fval)
                twin.partial_fit(ftrain, X_val=fval, n_steps=spec.fine_steps, lr=spec.fine_lr,
                                 warmup_steps=spec.fine_warmup)
                check_floor(twin.log_, lang.floor_per_token)
                logs[d] = twin.log_
            if "fw" in logs and "bw" in logs:
                check_paired(logs["fw"], logs["bw"])
            rows_changed = {"fw": changed_rows(matrix, new_m), "bw": changed_rows(inv, invert(new_m))}
            for d, log in logs.items():
                result.rows.append({"e": e, "seed": seed, "direction": d,
                                    "loss_before": before[d], "final_loss": log.final_loss,
                                    "changed_rows": rows_changed[d], "floor": lang.floor_per_token,
                                    "log": log})
    return result


# -- primes --------------------------------------------------------------------

PRIME_FIELDS = ("p", "q", "rev", "sep")


def field_losses(per_position, primes: PrimeLangSpec) -> dict:
    """Sum per-position nats over each field; ``sep`` covers × and ↔ tokens."""
    per = np.asarray(per_position)
    f = primes.fields()
    return {"p": float(per[f["p"]].sum()), "q": float(per[f["q"]].sum()),
            "rev": float(per[f["rev"]].sum()),
            "sep": float(per[f["times"]].sum() + per[f["arrow"]].sum())}


@dataclass
class PrimeResult:
    fields: dict  # direction -> field -> nats
    oracle: object
    pair: PairResult

    def total(self, direction) -> float:
        return sum(self.fields[direction].values())


def prime_experiment(spec: ExperimentSpec, seed: int | None = None) -> PrimeResult:
    if spec.language.kind != "primes":
        raise InvalidArgumentError("the prime experiment needs a prime language")
    pair = train_pair(spec, seed)
    primes = PrimeLangSpec(spec.language.k)
    fields = {d: field_losses(log.final.per_position, primes) for d, log in pair.logs.items()}
    return PrimeResult(fields, prime_entropy_report(spec.language.k), pair)
