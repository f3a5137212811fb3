import math

import numpy as np
import pytest
import torch

from aot_lab.errors import InvalidArgumentError, NumericFaultError
from aot_lab.nn import (PRESETS, Transformer, TransformerConfig, load_checkpoint,
                        loss_and_per_token, parameter_count, save_checkpoint)
from aot_lab.nn import ops

from gradcheck import central_fd, check_grad, rand, rel_err


class TestGradients:
    def test_matmul(self):
        check_grad(ops.matmul, lambda g: [rand(g, 3, 4), rand(g, 4, 2)], 2)

    def test_add_and_mul(self):
        check_grad(ops.add, lambda g: [rand(g, 3, 4), rand(g, 4)], 2)
        check_grad(ops.mul, lambda g: [rand(g, 3, 4), rand(g, 3, 4)], 2)

    def test_linear(self):
        check_grad(ops.linear, lambda g: [rand(g, 2, 3), rand(g, 3, 4), rand(g, 4)], 3)

    def test_softmax_family(self):
        check_grad(ops.softmax, lambda g: [rand(g, 3, 5)], 1)
        check_grad(ops.log_softmax, lambda g: [rand(g, 3, 5)], 1)

    def test_layernorm(self):
        check_grad(ops.layernorm, lambda g: [rand(g, 3, 6), 1 + rand(g, 6) / 4, rand(g, 6)], 3)

    def test_gelu(self):
        check_grad(ops.gelu, lambda g: [2 * rand(g, 4, 5)], 1)

    def test_embedding(self):
        ids = torch.tensor([[0, 3, 3], [1, 2, 0]])
        check_grad(lambda w: ops.embedding(w, ids), lambda g: [rand(g, 4, 3)], 1)

    def test_cross_entropy(self):
        targets = torch.tensor([[0, 2], [1, 1]])
        check_grad(lambda z: ops.cross_entropy(z, targets), lambda g: [rand(g, 2, 2, 3)], 1)

    @pytest.mark.parametrize("explicit", [True, False])
    def test_attention(self, explicit):
        fn = ops.causal_attention_explicit if explicit else ops.causal_attention
        check_grad(fn, lambda g: [rand(g, 1, 2, 4, 3), rand(g, 1, 2, 4, 3), rand(g, 1, 2, 4, 3)], 3)

    def test_dropout_with_fixed_mask(self):
        def fn(x):
            return ops.dropout(x, 0.3, torch.Generator().manual_seed(5), True)
        check_grad(fn, lambda g: [rand(g, 4, 5)], 1)

    def test_attention_with_dropout(self):
        def fn(q, k, v):
            return ops.causal_attention(q, k, v, 0.2, torch.Generator().manual_seed(1), True)
        check_grad(fn, lambda g: [rand(g, 1, 1, 4, 2) for _ in range(3)], 3)

    def test_whole_model_float64(self):
        cfg = TransformerConfig(8, 2, 1, 5, 4, dropout=0.0, precision="float64")
        model = Transformer(cfg, seed=1)
        ids = torch.tensor([[3, 0, 1, 2], [3, 2, 2, 1]])
        targets = torch.tensor([[0, 1, 2, 0], [2, 2, 1, 0]])

        def loss_for(w):
            model.blocks[0]["fc_w"].data = w
            return loss_and_per_token(model(ids), targets)[0]

        w0 = model.blocks[0]["fc_w"].detach().clone()
        fd, probe = central_fd(loss_for, [w0.clone()], 0)
        model.blocks[0]["fc_w"].data = w0.clone()
        model.zero_grad()
        (loss_and_per_token(model(ids), targets)[0] * probe).sum().backward()
        assert rel_err(model.blocks[0]["fc_w"].grad, fd) < 1e-6


class TestOps:
    def test_softmax_limits(self):
        row = torch.tensor([[50.0, 0.0, 0.0]], dtype=torch.float64)
        out = ops.softmax(row)
        assert float(out[0, 1]) < 1e-21 and float(out.sum()) == pytest.approx(1.0)
        x = torch.zeros(1, 4, dtype=torch.float64, requires_grad=True)
        probe = torch.tensor([[1.0, -2.0, 0.5, 3.0]], dtype=torch.float64)
        (ops.softmax(x) * probe).sum().backward()
        assert abs(float(x.grad.sum())) < 1e-15

    def test_explicit_and_fused_attention_agree(self):
        g = torch.Generator().manual_seed(0)
        q, k, v = (torch.randn(2, 3, 6, 4, generator=g, dtype=torch.float64) for _ in range(3))
        torch.testing.assert_close(ops.causal_attention(q, k, v), ops.causal_attention_explicit(q, k, v))

    def test_dropout_identity_cases(self):
        x = torch.randn(3, 4)
        assert ops.dropout(x, 0.0, None, True) is x
        assert ops.dropout(x, 0.5, None, False) is x

    def test_loss_examples(self):
        logits = torch.zeros(1, 1, 2, dtype=torch.float64)
        assert float(loss_and_per_token(logits, torch.tensor([[0]]))[0]) == pytest.approx(math.log(2))
        assert float(loss_and_per_token(torch.zeros(1, 3, 7), torch.tensor([[1, 2, 3]]))[0]) == pytest.approx(math.log(7))
        onehot = torch.full((1, 2, 3), -1e4)
        onehot[0, 0, 1] = onehot[0, 1, 2] = 1e4
        assert float(loss_and_per_token(onehot, torch.tensor([[1, 2]]))[0]) == 0.0

    def test_shape_checks(self):
        with pytest.raises(InvalidArgumentError):
            ops.matmul(torch.zeros(2, 3), torch.zeros(2, 3))
        with pytest.raises(InvalidArgumentError):
            ops.cross_entropy(torch.zeros(2, 3), torch.zeros(3, dtype=torch.long))
        with pytest.raises(InvalidArgumentError):
            ops.embedding(torch.zeros(3, 2), torch.tensor([3]))
        with pytest.raises(NumericFaultError):
            ops.check_finite(torch.tensor([float("nan")]), "x")


def small_model(seed=0, **kw):
    cfg = TransformerConfig(32, 4, 2, 10, 7, **kw)
    return Transformer(cfg, seed=seed)


class TestModel:
    def test_causality(self):
        model = small_model(dropout=0.0).eval()
        ids = torch.randint(0, 7, (3, 10), generator=torch.Generator().manual_seed(0))
        base = model(ids)
        for t in range(10):
            edited = ids.clone()
            edited[:, t] = (edited[:, t] + 1) % 7
            out = model(edited)
            torch.testing.assert_close(out[:, :t], base[:, :t], rtol=0, atol=0)
            if t < 9:
                assert not torch.equal(out[:, t:], base[:, t:])

    def test_batch_rows_independent(self):
        model = small_model(dropout=0.0).eval()
        ids = torch.randint(0, 7, (4, 10), generator=torch.Generator().manual_seed(1))
        perm = torch.tensor([2, 0, 3, 1])
        torch.testing.assert_close(model(ids[perm]), model(ids)[perm])

    def test_initial_loss_near_uniform(self):
        for v in (7, 13, 50):
            cfg = TransformerConfig(64, 4, 2, 16, v)
            model = Transformer(cfg, seed=3).eval()
            g = torch.Generator().manual_seed(2)
            ids = torch.randint(0, v, (64, 16), generator=g)
            loss, _ = loss_and_per_token(model(ids[:, :-1]), ids[:, 1:])
            assert abs(float(loss.detach()) - math.log(v)) < 0.05 * math.log(v)

    def test_init_statistics(self):
        cfg = TransformerConfig(256, 4, 1, 8, 11)
        a, b = Transformer(cfg, seed=7), Transformer(cfg, seed=7)
        for (name, p), q in zip(a.named_parameters(), b.parameters()):
            assert torch.equal(p, q), name
        var = float(a.blocks[0]["proj_w"].double().var())
        assert abs(var - 2 / 256) < 0.1 * 2 / 256
        assert abs(float(a.tok_emb.double().var()) - 2 / 256) < 0.1 * 2 / 256
        for name, p in a.named_parameters():
            if name.endswith("_b"):
                assert not p.any(), name

    def test_eval_is_deterministic_and_dropout_reproducible(self):
        model = small_model(dropout=0.3)
        ids = torch.randint(0, 7, (2, 10), generator=torch.Generator().manual_seed(0))
        model.eval()
        torch.testing.assert_close(model(ids), model(ids), rtol=0, atol=0)
        model.train()
        model.reseed_dropout(4)
        first = model(ids)
        model.reseed_dropout(4)
        torch.testing.assert_close(model(ids), first, rtol=0, atol=0)

    def test_context_limit(self):
        with pytest.raises(InvalidArgumentError):
            small_model()(torch.zeros(1, 11, dtype=torch.long))
        with pytest.raises(InvalidArgumentError):
            TransformerConfig(30, 4, 1, 8, 5)


class TestSizes:
    # reference totals, vocabulary 50257 and context 256
    REFERENCE = {"nano": 4_921_872, "micro": 13_691_904, "mini": 22_017_408,
                 "small": 55_670_760, "gpt1": 162_447_360, "medium": 405_499_904}

    @pytest.mark.parametrize("name", sorted(REFERENCE))
    def test_parameter_count(self, name):
        cfg = TransformerConfig.named(name, 50257)
        assert abs(parameter_count(cfg) - self.REFERENCE[name]) <= 0.01 * self.REFERENCE[name]

    @pytest.mark.parametrize("name", ["nano", "pico", "femto"])
    def test_closed_form_matches_module(self, name):
        cfg = TransformerConfig.named(name, 101, context_length=40)
        assert Transformer(cfg).n_params() == parameter_count(cfg)

    def test_unknown_size(self):
        with pytest.raises(InvalidArgumentError):
            TransformerConfig.named("giant", 10)
        assert "xl" in PRESETS


def test_checkpoint_bit_exact(tmp_path):
    model = small_model(seed=5)
    save_checkpoint(model, tmp_path / "m.ckpt", extra={"step": 12})
    back, extra = load_checkpoint(tmp_path / "m.ckpt")
    assert extra == {"step": 12} and back.cfg == model.cfg
    for (name, p), q in zip(model.state_dict().items(), back.state_dict().values()):
        assert p.numpy().tobytes() == q.numpy().tobytes(), name
    ids = torch.randint(0, 7, (2, 10), generator=torch.Generator().manual_seed(0))
    torch.testing.assert_close(back.eval()(ids), model.eval()(ids), rtol=0, atol=0)
