"""scikit-learn compatible wrappers.

:class:`AutoregressiveTransformer` trains a forward or backward model on
fixed-length payload sentences; :class:`BpeTokenizer` learns and applies a
character-level BPE vocabulary. Both follow the usual ``fit`` /
``transform`` / ``score`` conventions and expose ``get_params``.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_sentences
from .bpe import bpe_decode, bpe_encode, bpe_train
from .datapipe import Direction, SentenceSet, prepare_batch, reverse_chars, to_natural_order
from .errors import InvalidArgumentError
from .nn import Transformer, TransformerConfig
from .trainer.loop import BatchStream, evaluate, train_steps
from .trainer.optim import LrSchedule, OptimizerState
from .trainer.runlog import RunLog, config_hash


class AutoregressiveTransformer(BaseEstimator):
    """Decoder-only transformer reading sentences forward or backward.

    Parameters
    ----------
    model : str or dict
        Preset name (see :data:`aot_lab.nn.PRESETS`) or a dict with
        ``d_embed``, ``n_heads`` and ``n_layers``.
    vocab_size : int
        Number of payload token ids; the BOS id is ``vocab_size``.
    direction : {"fw", "bw"}
    n_steps, batch_size : int
        Optimizer steps and sentences per step for :meth:`fit`.
    lr, warmup_steps, restart_period, t_mult, min_lr
        Learning-rate schedule; ``restart_period=None`` means a single cosine
        decay that ends with the last step.
    seed : int
        Parameter initialization seed. ``dropout_seed`` defaults to it.

    Sentences are consumed in the order given; shuffle beforehand (see
    :func:`aot_lab.datapipe.shuffle_split`).
    """

    def __init__(self, model="pico", vocab_size=None, direction="fw", n_steps=1000,
                 batch_size=64, lr=1e-3, warmup_steps=100, restart_period=None, t_mult=1,
                 min_lr=0.0, weight_decay=0.01, dropout=0.1, grad_clip=1.0, eval_every=0,
                 seed=0, dropout_seed=None, precision="float32"):
        self.model = model
        self.vocab_size = vocab_size
        self.direction = direction
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.lr = lr
        self.warmup_steps = warmup_steps
        self.restart_period = restart_period
        self.t_mult = t_mult
        self.min_lr = min_lr
        self.weight_decay = weight_decay
        self.dropout = dropout
        self.grad_clip = grad_clip
        self.eval_every = eval_every
        self.seed = seed
        self.dropout_seed = dropout_seed
        self.precision = precision

    # -- construction ------------------------------------------------------

    def _config(self, length: int) -> TransformerConfig:
        vocab = check_positive_int(self.vocab_size, "vocab_size") + 1
        common = dict(vocab_size=vocab, context_length=length + 1, dropout=self.dropout,
                      precision=self.precision)
        if isinstance(self.model, str):
            return TransformerConfig.named(self.model, **common)
        if isinstance(self.model, dict):
            return TransformerConfig(**self.model, **common)
        raise InvalidArgumentError("model must be a preset name or a dict of sizes")

    def _schedule(self, n_steps, lr, warmup) -> LrSchedule:
        if self.restart_period is None:
            return LrSchedule.single_cycle(lr, warmup, n_steps, self.min_lr)
        return LrSchedule(lr, warmup, self.restart_period, self.t_mult, self.min_lr)

    @property
    def bos_id(self) -> int:
        return int(self.vocab_size)

    def _as_set(self, X) -> SentenceSet:
        if isinstance(X, SentenceSet):
            check_sentences(X.sentences, self.vocab_size)
            return X
        return SentenceSet(check_sentences(X, self.vocab_size))

    def initialize(self, length: int):
        """Build a fresh model for payloads of ``length`` tokens."""
        self.direction_ = Direction.parse(self.direction)
        self.config_ = self._config(length)
        dseed = self.seed if self.dropout_seed is None else self.dropout_seed
        self.model_ = Transformer(self.config_, seed=self.seed, dropout_seed=dseed)
        self.length_ = length
        self.opt_state_ = OptimizerState(weight_decay=self.weight_decay)
        self.log_ = RunLog(self.direction_.value, self.seed,
                           config_hash({"params": self.get_params(), "length": length}))
        self.steps_done_ = 0
        return self

    # -- training ----------------------------------------------------------

    def fit(self, X, y=None, X_val=None):
        """Train from scratch for ``n_steps`` steps on ``X``."""
        train = self._as_set(X)
        self.initialize(train.sentences.shape[1])
        stream = BatchStream(train, check_positive_int(self.batch_size, "batch_size"))
        val = None if X_val is None else self._as_set(X_val)
        steps = check_positive_int(self.n_steps, "n_steps")
        train_steps(self.model_, self.opt_state_, stream, direction=self.direction_,
                    bos_id=self.bos_id, n_steps=steps,
                    schedule=self._schedule(steps, self.lr, self.warmup_steps),
                    log=self.log_, val_set=val, eval_every=self.eval_every,
                    grad_clip=self.grad_clip)
        self.stream_ = stream
        self.steps_done_ = steps
        return self

    def partial_fit(self, X, y=None, X_val=None, n_steps=None, lr=None, warmup_steps=None,
                    reset_optimizer=True):
        """Continue training on ``X`` with a fresh schedule (fine-tuning).

        Defaults to the estimator's own ``n_steps``/``lr``/``warmup_steps``.
        The optimizer moments are reset unless ``reset_optimizer=False``.
        """
        train = self._as_set(X)
        if not hasattr(self, "model_"):
            self.initialize(train.sentences.shape[1])
        elif train.sentences.shape[1] != self.length_:
            raise InvalidArgumentError(f"sentence length changed from {self.length_}")
        steps = check_positive_int(self.n_steps if n_steps is None else n_steps, "n_steps")
        lr = self.lr if lr is None else lr
        warmup = self.warmup_steps if warmup_steps is None else warmup_steps
        if reset_optimizer:
            self.opt_state_ = OptimizerState(weight_decay=self.weight_decay)
        stream = BatchStream(train, check_positive_int(self.batch_size, "batch_size"))
        val = None if X_val is None else self._as_set(X_val)
        train_steps(self.model_, self.opt_state_, stream, direction=self.direction_,
                    bos_id=self.bos_id, n_steps=steps, schedule=self._schedule(steps, lr, warmup),
                    log=self.log_, val_set=val, eval_every=self.eval_every,
                    grad_clip=self.grad_clip, step_offset=self.steps_done_)
        self.stream_ = stream
        self.steps_done_ += steps
        return self

    # -- inference ---------------------------------------------------------

    def _check_X(self, X) -> SentenceSet:
        check_is_fitted(self, "model_")
        sset = self._as_set(X)
        if sset.sentences.shape[1] != self.length_:
            raise InvalidArgumentError(f"expected sentences of length {self.length_}")
        return sset

    def evaluate(self, X):
        """``(mean loss, per-position losses in natural order, standard error)``."""
        sset = self._check_X(X)
        return evaluate(self.model_, sset, self.direction_, self.bos_id)

    def loss(self, X) -> float:
        """Mean cross-entropy per token, in nats."""
        return self.evaluate(X)[0]

    def per_position_loss(self, X) -> np.ndarray:
        return self.evaluate(X)[1]

    def score(self, X, y=None) -> float:
        """Negative mean loss (higher is better)."""
        return -self.loss(X)

    @torch.no_grad()
    def predict_log_proba(self, X) -> np.ndarray:
        """Log-probabilities of every payload position, ``(N, length, vocab_size)``.

        Entry ``[s, i]`` is the model's distribution for payload token ``i``
        given the context it reads in its own direction. BOS is never a
        valid payload token, so its column is dropped.
        """
        sset = self._check_X(X)
        model = self.model_
        was_training = model.training
        model.eval()
        out = []
        for start in range(0, len(sset), 512):
            x = torch.from_numpy(prepare_batch(sset.sentences[start:start + 512], self.direction_, self.bos_id))
            logits = model(x[:, :-1]).double()
            logp = torch.log_softmax(logits, dim=-1)[..., :self.bos_id].numpy()
            out.append(to_natural_order(logp.swapaxes(1, 2), self.direction_).swapaxes(1, 2))
        model.train(was_training)
        return np.concatenate(out)


class BpeTokenizer(TransformerMixin, BaseEstimator):
    """Character-level BPE as a transformer: text in, token-id arrays out.

    ``reverse=True`` reverses every text by code point before fitting and
    encoding (and restores the order in :meth:`inverse_transform`).
    """

    def __init__(self, vocab_size=512, reverse=False):
        self.vocab_size = vocab_size
        self.reverse = reverse

    def _prep(self, text: str) -> str:
        return reverse_chars(text) if self.reverse else text

    def fit(self, X, y=None):
        corpus = X if isinstance(X, str) else "".join(X)
        self.model_ = bpe_train(self._prep(corpus), self.vocab_size)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        if isinstance(X, str):
            return bpe_encode(self.model_, self._prep(X))
        return [bpe_encode(self.model_, self._prep(t)) for t in X]

    def inverse_transform(self, X):
        check_is_fitted(self, "model_")
        if isinstance(X, np.ndarray) and X.ndim == 1:
            return self._prep(bpe_decode(self.model_, X))
        return [self._prep(bpe_decode(self.model_, ids)) for ids in X]

    @property
    def bos_id(self) -> int:
        check_is_fitted(self, "model_")
        return self.model_.bos_id
