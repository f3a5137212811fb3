"""Single-run training loop shared by every experiment."""

from __future__ import annotations

import copy
import hashlib

import numpy as np
import torch

from ..datapipe import Direction, SentenceSet, prepare_batch, to_natural_order
from ..errors import InvalidArgumentError
from ..nn import Transformer, loss_and_per_token
from .optim import LrSchedule, OptimizerState, adamw_step, lr_at
from .runlog import EvalRecord, RunLog


class BatchStream:
    """Endless in-order pass over a sentence set; wraps around at the end.

    The running checksum covers the payload of every batch handed out, before
    any direction is applied.
    """

    def __init__(self, sset: SentenceSet, batch_size: int):
        if batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if len(sset) == 0:
            raise InvalidArgumentError("cannot stream an empty sentence set")
        self.sset = sset
        self.batch_size = batch_size
        self.cursor = 0
        self._hash = hashlib.sha256()

    def next(self) -> np.ndarray:
        n = len(self.sset)
        idx = (self.cursor + np.arange(self.batch_size)) % n
        self.cursor = (self.cursor + self.batch_size) % n
        payload = self.sset.sentences[idx]
        self._hash.update(np.ascontiguousarray(payload, dtype="<u2").tobytes())
        return payload

    @property
    def checksum(self) -> str:
        return self._hash.hexdigest()

    def __deepcopy__(self, memo):
        twin = copy.copy(self)
        twin.sset = copy.deepcopy(self.sset, memo)
        twin._hash = self._hash.copy()
        return twin


def dropout_checksum(model: Transformer) -> str:
    return hashlib.sha256(model.dropout_gen.get_state().numpy().tobytes()).hexdigest()


def decay_mask(model: Transformer) -> list[bool]:
    return [p.dim() >= 2 for p in model.parameters()]


@torch.no_grad()
def evaluate(model: Transformer, sset: SentenceSet, direction, bos_id: int, batch_size: int = 512):
    """Mean loss, per-position losses (natural order) and the standard error
    of the per-sentence mean loss on ``sset``."""
    was_training = model.training
    model.eval()
    per_sentence = []
    per_pos_sum = None
    for start in range(0, len(sset), batch_size):
        x = torch.from_numpy(prepare_batch(sset.sentences[start:start + batch_size], direction, bos_id))
        _, per = loss_and_per_token(model(x[:, :-1]), x[:, 1:])
        per = per.double().numpy()
        per_sentence.append(per.mean(axis=1))
        s = per.sum(axis=0)
        per_pos_sum = s if per_pos_sum is None else per_pos_sum + s
    model.train(was_training)
    per_sentence = np.concatenate(per_sentence)
    per_pos = to_natural_order(per_pos_sum / len(sset), direction)
    se = float(per_sentence.std(ddof=1) / np.sqrt(len(per_sentence))) if len(per_sentence) > 1 else 0.0
    return float(per_sentence.mean()), per_pos, se


def train_steps(model: Transformer, state: OptimizerState, stream: BatchStream, *,
                direction, bos_id: int, n_steps: int, schedule: LrSchedule, log: RunLog,
                val_set: SentenceSet | None = None, eval_every: int = 0,
                grad_clip: float | None = 1.0, step_offset: int = 0) -> RunLog:
    """Run ``n_steps`` optimizer steps, appending to ``log``.

    The schedule is indexed from 0 for this call; logged step numbers are
    shifted by ``step_offset``. Validation runs every ``eval_every`` steps
    (if positive) and always after the last step.
    """
    direction = Direction.parse(direction)
    params = list(model.parameters())
    mask = decay_mask(model)
    model.train()
    for i in range(n_steps):
        x = torch.from_numpy(prepare_batch(stream.next(), direction, bos_id))
        loss, _ = loss_and_per_token(model(x[:, :-1]), x[:, 1:])
        for p in params:
            p.grad = None
        loss.backward()
        grads = [p.grad for p in params]
        if grad_clip:
            total = torch.sqrt(sum((g.double() ** 2).sum() for g in grads if g is not None))
            if total > grad_clip:
                scale = grad_clip / (float(total) + 1e-12)
                grads = [None if g is None else g * scale for g in grads]
        lr = lr_at(i, schedule)
        adamw_step(params, grads, state, lr, mask)
        step = step_offset + i + 1
        log.train.append((step, lr, float(loss.detach())))
        last = i == n_steps - 1
        if val_set is not None and (last or (eval_every and step % eval_every == 0)):
            mean, per_pos, se = evaluate(model, val_set, direction, bos_id)
            log.evals.append(EvalRecord(step, mean, per_pos, se))
    log.stream_checksum = stream.checksum
    log.dropout_checksum = dropout_checksum(model)
    return log
