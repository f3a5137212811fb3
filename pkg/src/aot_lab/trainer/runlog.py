from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class EvalRecord:
    step: int
    loss: float
    per_position: np.ndarray
    sentence_se: float


@dataclass
class RunLog:
    """Training trajectory of one model.

    ``per_position`` losses are stored in natural payload order, so FW and BW
    logs line up position by position.
    """

    direction: str
    seed: int
    config_hash: str
    train: list = field(default_factory=list)  # (step, lr, loss)
    evals: list = field(default_factory=list)  # EvalRecord
    stream_checksum: str = ""
    dropout_checksum: str = ""

    @property
    def final(self) -> EvalRecord:
        if not self.evals:
            raise ValueError("run has no evaluations")
        return self.evals[-1]

    @property
    def final_loss(self) -> float:
        return self.final.loss

    def validation_curve(self):
        return [e.step for e in self.evals], [e.loss for e in self.evals]

    def to_csv(self) -> str:
        n_pos = len(self.evals[0].per_position) if self.evals else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "lr", "split", "loss"] + [f"pos_{i}" for i in range(n_pos)])
        rows = [(s, 0, lr, "train", loss, None) for s, lr, loss in self.train]
        rows += [(e.step, 1, "", "val", e.loss, e.per_position) for e in self.evals]
        for step, _, lr, split, loss, per in sorted(rows, key=lambda r: (r[0], r[1])):
            extra = [repr(float(v)) for v in per] if per is not None else [""] * n_pos
            w.writerow([step, repr(lr) if lr != "" else "", split, repr(float(loss))] + extra)
        return buf.getvalue()
