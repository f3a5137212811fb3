import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from aot_lab._validation import check_positive_int, check_sentences
from aot_lab.datapipe import shuffle_split
from aot_lab.errors import InvalidArgumentError
from aot_lab.estimators import AutoregressiveTransformer, BpeTokenizer
from aot_lab.langgen import mult_toy_language
from aot_lab.oracle import exact_decomposition

TOY = mult_toy_language()


def quick(**kw):
    params = dict(model="femto", vocab_size=12, n_steps=20, batch_size=27, lr=3e-3,
                  warmup_steps=2, dropout=0.0)
    params.update(kw)
    return AutoregressiveTransformer(**params)


class TestTransformerEstimator:
    def test_params_and_clone(self):
        est = quick(direction="bw", seed=3)
        p = est.get_params()
        assert p["direction"] == "bw" and p["seed"] == 3 and p["model"] == "femto"
        twin = clone(est)
        assert twin.get_params() == p and not hasattr(twin, "model_")
        est.set_params(lr=1e-2)
        assert est.lr == 1e-2

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            quick().loss(TOY.sentences)

    def test_fit_score_and_shapes(self):
        est = quick().fit(TOY.sentences, X_val=TOY.sentences)
        assert est.steps_done_ == 20 and len(est.log_.train) == 20
        assert est.score(TOY.sentences) == pytest.approx(-est.loss(TOY.sentences))
        lp = est.predict_log_proba(TOY.sentences[:5])
        assert lp.shape == (5, 6, 12)
        # the BOS column is dropped, so rows sum to at most one
        mass = np.exp(lp).sum(axis=-1)
        assert (mass <= 1 + 1e-9).all() and (mass > 0.8).all()

    def test_per_position_natural_order(self):
        # the BW model's log-probs, read in natural order, must add up to its own loss
        est = quick(direction="bw", n_steps=5).fit(TOY.sentences)
        lp = est.predict_log_proba(TOY.sentences)
        nll = -np.take_along_axis(lp, TOY.sentences[..., None], axis=-1)[..., 0]
        np.testing.assert_allclose(nll.mean(axis=0), est.per_position_loss(TOY.sentences), atol=1e-5)

    def test_learns_toy_language_in_both_directions(self):
        train, _ = shuffle_split(TOY.sentences, 0, 0)
        floors = {}
        for d in ("fw", "bw"):
            est = quick(direction=d, model="pico", n_steps=400, lr=1e-2, warmup_steps=20).fit(train)
            floors[d] = exact_decomposition(TOY, d).total / 6
            assert est.loss(TOY.sentences) < floors[d] + 0.05
        assert floors["fw"] == pytest.approx(floors["bw"]) == pytest.approx(math.log(81) / 6)

    def test_partial_fit_continues(self):
        est = quick(n_steps=10).fit(TOY.sentences)
        est.partial_fit(TOY.sentences, n_steps=5, lr=1e-4, warmup_steps=0)
        assert est.steps_done_ == 15
        assert [s for s, *_ in est.log_.train] == list(range(1, 16))
        with pytest.raises(InvalidArgumentError):
            est.partial_fit(TOY.sentences[:, :4])

    def test_partial_fit_from_scratch(self):
        est = quick().partial_fit(TOY.sentences, n_steps=3)
        assert est.steps_done_ == 3

    def test_input_validation(self):
        with pytest.raises(InvalidArgumentError):
            quick().fit(TOY.sentences + 12)
        with pytest.raises(InvalidArgumentError):
            quick().fit(TOY.sentences[0])
        with pytest.raises(InvalidArgumentError):
            quick(direction="sideways").fit(TOY.sentences)
        with pytest.raises(InvalidArgumentError):
            quick(model=3).fit(TOY.sentences)

    def test_custom_dimensions(self):
        est = quick(model={"d_embed": 16, "n_heads": 2, "n_layers": 1}, n_steps=2).fit(TOY.sentences)
        assert est.config_.d_embed == 16 and est.config_.context_length == 7


class TestBpeTokenizer:
    TEXT = ["the cat sat", "the hat sat on the mat"]

    def test_roundtrip(self):
        tok = BpeTokenizer(vocab_size=30).fit(self.TEXT)
        ids = tok.transform(self.TEXT)
        assert tok.inverse_transform(ids) == self.TEXT
        assert tok.bos_id == 0

    def test_reverse(self):
        tok = BpeTokenizer(vocab_size=30, reverse=True).fit(self.TEXT)
        plain = BpeTokenizer(vocab_size=30).fit([t[::-1] for t in self.TEXT])
        assert tok.model_.merges == plain.model_.merges
        assert tok.inverse_transform(tok.transform("the mat")) == "the mat"

    def test_clone_and_unfitted(self):
        tok = BpeTokenizer(vocab_size=40, reverse=True)
        assert clone(tok).get_params() == {"vocab_size": 40, "reverse": True}
        with pytest.raises(NotFittedError):
            tok.transform("x")


def test_validation_helpers():
    assert check_sentences([[1, 2], [3, 4]], vocab_size=5, length=2).dtype == np.int64
    with pytest.raises(InvalidArgumentError):
        check_sentences([[1.5, 2]])
    with pytest.raises(InvalidArgumentError):
        check_sentences([[-1, 2]])
    with pytest.raises(InvalidArgumentError):
        check_sentences([[1, 2]], length=3)
    assert check_positive_int(3, "x") == 3
    for bad in (0, 2.5, True):
        with pytest.raises(InvalidArgumentError):
            check_positive_int(bad, "x")
