"""Serializable experiment descriptions (JSON, schema-validated)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import jsonschema

from ..errors import InvalidArgumentError

SCHEMA_VERSION = 1

_LANGUAGE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["linear", "primes", "mult_toy"]},
        "m": {"type": ["integer", "null"], "minimum": 1, "maximum": 64},
        "k_offset": {"type": "integer", "minimum": 0},
        "matrix_seed": {"type": "integer", "minimum": 0},
        "matrix_file": {"type": ["string", "null"]},
        "noise_p": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "noise_scope": {"enum": ["all", "y_only"]},
        "pad_count": {"type": "integer", "minimum": 0},
        "k": {"type": ["integer", "null"], "minimum": 1, "maximum": 8},
    },
}

_MODEL_DIMS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["d_embed", "n_heads", "n_layers"],
    "properties": {k: {"type": "integer", "minimum": 1}
                   for k in ("d_embed", "n_heads", "n_layers", "mlp_ratio")},
}

SPEC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["language"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "language": _LANGUAGE_SCHEMA,
        "model": {"oneOf": [{"type": "string"}, _MODEL_DIMS]},
        "batch_size": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 1},
        "n_train": {"type": ["integer", "null"], "minimum": 1},
        "n_val": {"type": "integer", "minimum": 1},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "warmup_steps": {"type": "integer", "minimum": 0},
        "restart_period": {"type": ["integer", "null"], "minimum": 1},
        "t_mult": {"type": "integer", "minimum": 1},
        "min_lr": {"type": "number", "minimum": 0},
        "weight_decay": {"type": "number", "minimum": 0},
        "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "grad_clip": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "eval_every": {"type": "integer", "minimum": 0},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "directions": {"type": "array", "items": {"enum": ["fw", "bw"]}, "minItems": 1,
                       "uniqueItems": True},
        "data_seed": {"type": "integer", "minimum": 0},
        "k_offsets": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "flips": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "prior_seed": {"type": "integer", "minimum": 0},
        "fine_steps": {"type": "integer", "minimum": 1},
        "fine_lr": {"type": "number", "exclusiveMinimum": 0},
        "fine_warmup": {"type": "integer", "minimum": 0},
        "fine_n_train": {"type": ["integer", "null"], "minimum": 1},
    },
}


@dataclass(frozen=True)
class LanguageSpec:
    kind: str = "linear"
    m: int | None = 12
    k_offset: int = 0
    matrix_seed: int = 0
    matrix_file: str | None = None
    noise_p: float = 0.0
    noise_scope: str = "all"
    pad_count: int = 7
    k: int | None = None


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to replay a training experiment.

    ``k_offsets`` drives the sparsity scan; ``flips``/``fine_*`` drive the
    sparse-update experiment; both are ignored elsewhere.
    """

    language: LanguageSpec = field(default_factory=LanguageSpec)
    model: object = "pico"
    batch_size: int = 64
    steps: int = 1000
    n_train: int | None = None
    n_val: int = 2000
    lr: float = 3e-3
    warmup_steps: int = 100
    restart_period: int | None = None
    t_mult: int = 1
    min_lr: float = 0.0
    weight_decay: float = 0.01
    dropout: float = 0.0
    grad_clip: float | None = 1.0
    eval_every: int = 100
    seeds: tuple = (0,)
    directions: tuple = ("fw", "bw")
    data_seed: int = 0
    k_offsets: tuple = (0, 4, 10, 20, 40)
    flips: tuple = (2, 4, 6)
    prior_seed: int = 0
    fine_steps: int = 400
    fine_lr: float = 8e-6
    fine_warmup: int = 10
    fine_n_train: int | None = None

    @property
    def train_budget(self) -> int:
        """Training sentences to generate (one pass over fresh data by default)."""
        return self.n_train if self.n_train is not None else self.steps * self.batch_size

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        for key in ("seeds", "directions", "k_offsets", "flips"):
            d[key] = list(d[key])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        validate_spec_dict(data)
        data = dict(data)
        data.pop("schema_version", None)
        lang = LanguageSpec(**data.pop("language"))
        for key in ("seeds", "directions", "k_offsets", "flips"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(language=lang, **data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def with_seeds(self, seeds) -> "ExperimentSpec":
        return replace(self, seeds=tuple(seeds))


def validate_spec_dict(data: dict):
    try:
        jsonschema.validate(data, SPEC_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidArgumentError(f"invalid experiment spec at {where}: {exc.message}") from None
    lang = data["language"]
    if lang["kind"] == "linear" and not lang.get("m", LanguageSpec.m):
        raise InvalidArgumentError("linear language needs m")
    if lang["kind"] == "primes" and not lang.get("k"):
        raise InvalidArgumentError("prime language needs k")


SPEC_FIELDS = tuple(f.name for f in fields(ExperimentSpec))


# Full-scale reference settings, for users with the compute. Keys override a spec.
PAPER_SCALE = {
    "scan": {"language": {"kind": "linear", "m": 25, "noise_p": 0.0},
             "model": "gpt1", "batch_size": 200, "n_train": 600_000, "steps": 3000,
             "lr": 1e-4, "dropout": 0.1,
             "k_offsets": [0, 2, 4, 8, 10, 14, 18, 20, 25, 30, 35, 40, 45, 50]},
    "update": {"language": {"kind": "linear", "m": 20, "k_offset": 6, "noise_p": 0.01},
               "model": "gpt1", "batch_size": 200, "lr": 1e-4, "dropout": 0.1,
               "flips": [2, 4, 6], "fine_steps": 400, "fine_lr": 8e-6, "fine_warmup": 10},
    "primes": {"language": {"kind": "primes", "k": 5}, "model": "medium", "lr": 1e-4,
               "dropout": 0.1, "n_train": 100_000_000},
    "train": {"model": "gpt1", "batch_size": 200, "lr": 1e-4, "dropout": 0.1},
}


def apply_paper_scale(spec: ExperimentSpec, kind: str) -> ExperimentSpec:
    over = dict(PAPER_SCALE.get(kind, PAPER_SCALE["train"]))
    lang = over.pop("language", None)
    d = spec.to_dict()
    if lang:
        d["language"] = {**d["language"], **lang}
    d.update(over)
    return ExperimentSpec.from_dict(d)
