"""Command-line entry point: ``aot-lab <command> --config file.json``.

Exit codes: 0 success, 2 bad configuration, 3 missing input, 4 numeric
fault, 5 internal-consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from . import oracle
from .bpe import bpe_encode, bpe_train
from .datapipe import Direction, SplitConfig, prepare_batch, reverse_chars, shuffle_split, split_array
from .errors import (ConsistencyError, InfiniteLossError, InvalidArgumentError, NumericFaultError,
                     ResourceLimitError)
from .f2linalg import mat_vec_mul
from .langgen import FiniteLanguage, LinearLangSpec, Vocab, mult_toy_language
from .plotting import line_plot
from .shards import checksum, write_shard
from .trainer.experiments import (build_language, prime_experiment, resolve_matrix,
                                  sparse_update_experiment, sparsity_scan_experiment,
                                  spearman_permutation_test, summarize, train_pair)
from .trainer.spec import _LANGUAGE_SCHEMA, ExperimentSpec, LanguageSpec, apply_paper_scale

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC, EXIT_CONSISTENCY = 0, 2, 3, 4, 5
SEED_ENV = "AOT_LAB_SEED"

GEN_SCHEMA = {
    "type": "object", "additionalProperties": False, "required": ["language"],
    "properties": {"language": _LANGUAGE_SCHEMA,
                   "count": {"type": "integer", "minimum": 1},
                   "seed": {"type": "integer", "minimum": 0},
                   "name": {"type": "string", "minLength": 1}},
}

ORACLE_SCHEMA = {
    "type": "object", "additionalProperties": False, "required": ["language"],
    "properties": {"language": _LANGUAGE_SCHEMA,
                   "sentence": {"type": "string"},
                   "chain_rule": {"type": "boolean"},
                   "cap": {"type": "integer", "minimum": 1}},
}

PIPELINE_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {"input": {"type": "string"},
                   "vocab_size": {"type": "integer", "minimum": 2},
                   "context_n": {"type": "integer", "minimum": 2},
                   "stride": {"type": ["integer", "null"], "minimum": 1},
                   "seed": {"type": "integer", "minimum": 0},
                   "n_val": {"type": "integer", "minimum": 0},
                   "direction": {"enum": ["fw", "bw"]},
                   "reverse_chars": {"type": "boolean"}},
}


class ConfigError(InvalidArgumentError):
    pass


class MissingInputError(FileNotFoundError):
    pass


# -- helpers -----------------------------------------------------------------

def _read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


def _validate(data: dict, schema: dict, what: str):
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid {what} config at {where}: {exc.message}") from None


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _check_inputs(lang: LanguageSpec):
    if lang.matrix_file and not Path(lang.matrix_file).is_file():
        raise MissingInputError(f"matrix file not found: {lang.matrix_file}")


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


def _load_experiment(args, kind: str) -> ExperimentSpec:
    spec = ExperimentSpec.from_dict(_read_json(args.config))
    if args.paper_scale:
        spec = apply_paper_scale(spec, kind)
    seed = _env_seed()
    if seed is not None:
        spec = replace(spec, seeds=(seed,), prior_seed=seed, data_seed=seed)
    _check_inputs(spec.language)
    return spec


def _write_logs(out: Path, logs: dict, prefix: str = "runlog"):
    for d, log in logs.items():
        _write(out, f"{prefix}_{d}.csv", log.to_csv())


def _curves_svg(logs: dict, title: str) -> str:
    series = {d.upper(): log.validation_curve() for d, log in logs.items()}
    return line_plot(series, "step", "validation loss (nats/token)", title)


# -- commands ----------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _read_json(args.config)
    _validate(cfg, GEN_SCHEMA, "gen")
    lang = LanguageSpec(**cfg["language"])
    _check_inputs(lang)
    seed = _env_seed()
    seed = cfg.get("seed", 0) if seed is None else seed
    count = cfg.get("count", 1000)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    out = Path(args.out)
    if lang.kind == "mult_toy":
        toy = mult_toy_language()
        sentences, vocab = toy.sentences, toy.vocab
    else:
        language = build_language(lang)
        sentences, vocab = language.sample(count, rng), language.vocab
        if language.linear is not None:
            _write(out, f"{cfg.get('name', lang.kind)}.matrix", language.linear.matrix.to_text())
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.get('name', lang.kind)}.bin"
    header = write_shard(path, sentences, vocab)
    print(f"wrote {path}: count={header.count} length={header.length} "
          f"vocab={header.vocab_size} sha256={checksum(sentences)}")
    return EXIT_OK


def _linear_support(spec: LinearLangSpec, cap: int) -> FiniteLanguage:
    if spec.p != 0.0:
        raise ResourceLimitError("per-position decomposition of noisy linear languages is not enumerated")
    if 2 ** spec.m > cap:
        raise ResourceLimitError(f"linear language support 2**{spec.m} exceeds the enumeration cap {cap}")
    xs = np.array(list(itertools.product((0, 1), repeat=spec.m)), dtype=np.int64)
    pads = np.full((len(xs), spec.pad_count), spec.vocab["_"])
    sents = np.concatenate([xs, pads, mat_vec_mul(spec.matrix, xs)], axis=1)
    return FiniteLanguage(sents, np.full(len(xs), 1.0 / len(xs)), spec.vocab)


def cmd_oracle(args) -> int:
    cfg = _read_json(args.config)
    _validate(cfg, ORACLE_SCHEMA, "oracle")
    lang = LanguageSpec(**cfg["language"])
    _check_inputs(lang)
    cap = cfg.get("cap", oracle.DEFAULT_SUPPORT_CAP)
    out = Path(args.out)
    summary: dict = {"kind": lang.kind}
    if lang.kind == "primes":
        report = oracle.prime_entropy_report(lang.k)
        _write(out, "prime_entropy.json", report.to_json())
        print(report.to_json(), end="")
        return EXIT_OK
    if lang.kind == "mult_toy":
        finite = mult_toy_language()
    else:
        spec = build_language(lang).linear
        summary["entropy_nats"] = oracle.linear_language_entropy_floor(spec)
        summary["exact"] = spec.m <= oracle.MAX_EXACT_LINEAR_M or spec.p == 0.0
        if spec.p != 0.0:
            _write(out, "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
            print(json.dumps(summary, sort_keys=True))
            return EXIT_OK
        finite = _linear_support(spec, cap)
    decomps = [oracle.exact_decomposition(finite, d, cap) for d in (Direction.FW, Direction.BW)]
    _write(out, "decomposition.csv", oracle.decomposition_csv(decomps))
    summary["entropy_nats"] = oracle.entropy(finite)
    summary["fw_total"], summary["bw_total"] = decomps[0].total, decomps[1].total
    if cfg.get("sentence"):
        ids = finite.vocab.encode(list(cfg["sentence"]))
        summary["sentence"] = {d.value: oracle.sentence_decomposition(finite, ids, d, cap).tolist()
                               for d in (Direction.FW, Direction.BW)}
    for dec in decomps:
        print(f"{dec.direction.value}: " + " ".join(f"{v:.4f}" for v in dec.per_position)
              + f"  total={dec.total:.6f}")
    if cfg.get("chain_rule"):
        gap = abs(decomps[0].total - decomps[1].total)
        summary["chain_rule_gap"] = gap
        print(f"|H_fw - H_bw| = {gap:.3e}")
    _write(out, "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _read_json(args.config) if args.config else {}
    _validate(cfg, PIPELINE_SCHEMA, "pipeline")
    flags = {"input": args.input, "vocab_size": args.vocab_size, "context_n": args.context_n,
             "stride": args.stride, "seed": args.seed, "direction": args.direction,
             "reverse_chars": args.reverse_chars or None}
    cfg.update({k: v for k, v in flags.items() if v is not None})
    if "input" not in cfg:
        raise ConfigError("pipeline needs --input (or 'input' in the config)")
    src = Path(cfg["input"])
    if not src.is_file():
        raise MissingInputError(f"input text not found: {src}")
    seed = _env_seed()
    seed = cfg.get("seed", 0) if seed is None else seed
    text = src.read_text(encoding="utf-8")
    if cfg.get("reverse_chars"):
        text = reverse_chars(text)
    model = bpe_train(text, cfg.get("vocab_size", 512))
    ids = bpe_encode(model, text)
    split = SplitConfig(cfg.get("context_n", 64), cfg.get("stride"))
    sentences = split_array(ids, split)
    if len(sentences) == 0:
        raise ConfigError(f"input has {len(ids)} tokens, fewer than one window of {split.window}")
    n_val = min(cfg.get("n_val", len(sentences) // 10), len(sentences) - 1)
    train, val = shuffle_split(sentences, seed, n_val)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "bpe.txt")
    for name, part in (("train", train), ("val", val)):
        payload = part.sentences
        if cfg.get("direction"):
            payload = prepare_batch(payload, cfg["direction"], model.bos_id)
        write_shard(out / f"{name}.bin", payload.reshape(len(part), -1), model.vocab)
    print(f"tokens={len(ids)} sentences={len(sentences)} train={len(train)} val={len(val)} "
          f"vocab={len(model.vocab)} sha256={checksum(sentences)}")
    return EXIT_OK


def _print_pair(logs: dict, floor: float):
    print(f"{'direction':<10}{'final loss':>12}{'floor':>10}")
    for d, log in logs.items():
        print(f"{d:<10}{log.final_loss:>12.5f}{floor:>10.5f}")


def cmd_train(args) -> int:
    spec = _load_experiment(args, "train")
    out = Path(args.out)
    rows = []
    for seed in spec.seeds:
        pair = train_pair(spec, seed)
        _write_logs(out / f"seed{seed}", pair.logs)
        _write(out / f"seed{seed}", "curves.svg", _curves_svg(pair.logs, f"seed {seed}"))
        _print_pair(pair.logs, pair.floor)
        rows += [(seed, d, _fmt(log.final_loss), _fmt(pair.floor)) for d, log in pair.logs.items()]
    _write(out, "summary.csv", _csv(["seed", "direction", "final_loss", "floor"], rows))
    return EXIT_OK


def cmd_scan(args) -> int:
    spec = _load_experiment(args, "scan")
    out = Path(args.out)
    rows = sparsity_scan_experiment(spec, jobs=args.jobs)
    for r in rows:
        _write(out / "runs", f"k{r['k']}_seed{r['seed']}_{r['direction']}.csv", r["log"].to_csv())
    keys = ("k", "seed", "direction", "nnz", "nnz_inverse", "final_loss", "floor")
    _write(out, "scan.csv", _csv(keys, [[r[k] if k not in ("final_loss", "floor") else _fmt(r[k])
                                         for k in keys] for r in rows]))
    summary = summarize(rows, "k")
    _write(out, "scan_summary.csv", _csv(("k", "direction", "mean", "std", "n"),
                                         [(s["k"], s["direction"], _fmt(s["mean"]), _fmt(s["std"]), s["n"])
                                          for s in summary]))
    series = {}
    for d in spec.directions:
        pts = [s for s in summary if s["direction"] == d]
        series[d.upper()] = ([s["k"] for s in pts], [s["mean"] for s in pts])
    _write(out, "scan.svg", line_plot(series, "nonzeros above m (k)", "final loss (nats/token)"))
    print(f"{'k':>4} {'dir':>4} {'mean':>9} {'std':>9}")
    for s in summary:
        print(f"{s['k']:>4} {s['direction']:>4} {s['mean']:>9.5f} {s['std']:>9.5f}")
    for d, (ks, means) in series.items():
        if len(ks) > 1:
            rho, p = spearman_permutation_test(ks, means)
            print(f"{d}: spearman rho={rho:.3f} p={p:.4f}")
    return EXIT_OK


def cmd_update(args) -> int:
    spec = _load_experiment(args, "update")
    out = Path(args.out)
    result = sparse_update_experiment(spec)
    _write_logs(out / "prior", result.prior.logs)
    for r in result.rows:
        _write(out / "runs", f"e{r['e']}_seed{r['seed']}_{r['direction']}.csv", r["log"].to_csv())
    keys = ("e", "seed", "direction", "changed_rows", "loss_before", "final_loss", "floor")
    _write(out, "update.csv", _csv(keys, [[_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in keys]
                                          for r in result.rows]))
    summary = summarize(result.rows, "e")
    dirs = sorted({s["direction"] for s in summary})
    print("e    " + "".join(f"{d.upper():>20}" for d in dirs))
    for e in spec.flips:
        cells = {s["direction"]: s for s in summary if s["e"] == e}
        print(f"{e:<5}" + "".join(f"{cells[d]['mean']:>12.4f}±{cells[d]['std']:<7.4f}" for d in dirs))
    return EXIT_OK


def cmd_primes(args) -> int:
    spec = _load_experiment(args, "primes")
    out = Path(args.out)
    res = prime_experiment(spec)
    _write_logs(out, res.pair.logs)
    _write(out, "curves.svg", _curves_svg(res.pair.logs, f"primes k={spec.language.k}"))
    _write(out, "prime_entropy.json", res.oracle.to_json())
    rows = [(d, f, _fmt(v)) for d, fields in res.fields.items() for f, v in fields.items()]
    _write(out, "fields.csv", _csv(("direction", "field", "nats"), rows))
    print(f"{'field':<6}" + "".join(f"{d.upper():>10}" for d in res.fields) + f"{'oracle':>10}")
    ref = {"p": res.oracle.H_p, "q": res.oracle.H_q_given_p, "rev": 0.0, "sep": 0.0}
    for f in ("p", "q", "rev", "sep"):
        print(f"{f:<6}" + "".join(f"{res.fields[d][f]:>10.4f}" for d in res.fields) + f"{ref[f]:>10.4f}")
    print(f"{'total':<6}" + "".join(f"{res.total(d):>10.4f}" for d in res.fields)
          + f"{res.oracle.H_pair:>10.4f}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "oracle": cmd_oracle, "pipeline": cmd_pipeline, "train": cmd_train,
            "scan": cmd_scan, "update": cmd_update, "primes": cmd_primes}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aot-lab", description="Arrow-of-time experiments on synthetic languages.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers across seeds/trials")
    parser.add_argument("--paper-scale", action="store_true", help="use the full-scale reference settings")
    pipe = parser.add_argument_group("pipeline options")
    pipe.add_argument("--input")
    pipe.add_argument("--vocab-size", type=int)
    pipe.add_argument("--context-n", type=int)
    pipe.add_argument("--stride", type=int)
    pipe.add_argument("--seed", type=int)
    pipe.add_argument("--direction", choices=["fw", "bw"])
    pipe.add_argument("--reverse-chars", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "pipeline" and not args.config:
        print(f"aot-lab {args.command}: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("aot-lab: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"aot-lab: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericFaultError, InfiniteLossError) as exc:
        print(f"aot-lab: numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConsistencyError as exc:
        print(f"aot-lab: consistency check failed: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except (InvalidArgumentError, ResourceLimitError) as exc:
        print(f"aot-lab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
