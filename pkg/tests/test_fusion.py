"""Fusion machinery: cross-attention fusion, prototype fusion layers,
and the prototype classifier."""

import numpy as np
import pytest

from aiva import numerics as nm
from aiva.config import ModelConfig
from aiva.encoders import EncodedPair
from aiva.fusion import (
    cross_attention_fuse,
    forward_mspn,
    fusion_layer,
    init_cross_attention,
    init_fusion_params,
    init_prototypes,
)
from aiva.numerics import ShapeError, grad_check

F64 = np.float64
D = 16


def make_pair(rng, L=4, M=6, d=D, mask=None):
    if mask is None:
        mask = np.ones(L, dtype=np.int8)
    return EncodedPair(
        text_tokens=nm.tensor(rng.standard_normal((L, d)), dtype=F64),
        text_mask=mask,
        visual_tokens=nm.tensor(rng.standard_normal((M, d)), dtype=F64),
    )


@pytest.fixture
def cfg():
    return ModelConfig(d_model=D, n_heads=4, n_fusion_layers=2, n_classes=3, vocab_size=8)


@pytest.fixture
def params(cfg):
    return init_fusion_params(cfg, np.random.default_rng(0), F64, prototype_seed=1)


class TestInitPrototypes:
    def test_shape(self):
        assert init_prototypes(3, 64, seed=0).shape == (3, 64)

    def test_seed_determinism(self):
        a = init_prototypes(4, 8, seed=7, dtype=F64)
        b = init_prototypes(4, 8, seed=7, dtype=F64)
        assert np.array_equal(a.data, b.data)

    def test_different_seeds_differ(self):
        a = init_prototypes(4, 8, seed=7, dtype=F64)
        b = init_prototypes(4, 8, seed=8, dtype=F64)
        assert not np.array_equal(a.data, b.data)

    def test_too_few_classes(self):
        with pytest.raises(ValueError):
            init_prototypes(1, 8, seed=0)


class TestCrossAttentionFuse:
    def test_row_counts(self, params, cfg):
        rng = np.random.default_rng(0)
        pair = make_pair(rng, L=4, M=6)
        t_hat, v_hat, z0 = cross_attention_fuse(pair.text_tokens, pair.visual_tokens,
                                                params["caf"], cfg.n_heads)
        assert t_hat.shape == (4, D)
        assert v_hat.shape == (6, D)
        assert z0.shape == (10, D)

    def test_zero_value_projection_zeroes_outputs(self, cfg):
        rng = np.random.default_rng(1)
        caf = {"t": init_cross_attention(D, rng, F64), "v": init_cross_attention(D, rng, F64)}
        caf["t"]["wv"] = nm.zeros((D, D), requires_grad=True, dtype=F64)
        caf["v"]["wv"] = nm.zeros((D, D), requires_grad=True, dtype=F64)
        pair = make_pair(rng)
        weights = []
        t_hat, v_hat, _ = cross_attention_fuse(pair.text_tokens, pair.visual_tokens,
                                               caf, cfg.n_heads, collect_weights=weights)
        assert np.all(t_hat.data == 0) and np.all(v_hat.data == 0)
        for w in weights:  # attention itself stays row-stochastic
            assert np.allclose(w.data.sum(axis=1), 1.0, atol=1e-6)

    def test_attention_rows_stochastic_random_inputs(self, params, cfg):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            pair = make_pair(rng, L=int(rng.integers(1, 7)), M=int(rng.integers(1, 7)))
            weights = []
            cross_attention_fuse(pair.text_tokens, pair.visual_tokens, params["caf"],
                                 cfg.n_heads, collect_weights=weights)
            assert weights
            for w in weights:
                assert np.allclose(w.data.sum(axis=1), 1.0, atol=1e-6)

    def test_dimension_mismatch(self, params, cfg):
        rng = np.random.default_rng(0)
        T = nm.tensor(rng.standard_normal((4, D)), dtype=F64)
        V = nm.tensor(rng.standard_normal((6, D * 2)), dtype=F64)
        with pytest.raises(ShapeError):
            cross_attention_fuse(T, V, params["caf"], cfg.n_heads)


class TestFusionLayer:
    def test_zero_value_projection_is_pure_residual(self, cfg):
        rng = np.random.default_rng(2)
        layer = {"s": init_cross_attention(D, rng, F64)}
        layer["s"]["wv"] = nm.zeros((D, D), requires_grad=True, dtype=F64)
        z = nm.tensor(rng.standard_normal((10, D)), dtype=F64)
        s0 = init_prototypes(3, D, seed=0, dtype=F64)
        _, s1 = fusion_layer(z, s0, layer, cfg.n_heads, z_update="frozen")
        assert np.array_equal(s1.data, s0.data)  # exact, not approximate

    def test_row_counts_preserved(self, params, cfg):
        rng = np.random.default_rng(3)
        z = nm.tensor(rng.standard_normal((9, D)), dtype=F64)
        s = init_prototypes(3, D, seed=0, dtype=F64)
        z1, s1 = fusion_layer(z, s, params["fusion"]["layer0"], cfg.n_heads)
        assert z1.shape[0] == 9 and s1.shape == (3, D)

    def test_prototype_gradient(self, params, cfg):
        rng = np.random.default_rng(4)
        z = nm.tensor(rng.standard_normal((7, D)), dtype=F64)
        s0 = init_prototypes(3, D, seed=5, dtype=F64)
        w = nm.tensor(rng.standard_normal((3, D)), dtype=F64)

        def loss(t):
            _, s1 = fusion_layer(z, t, params["fusion"]["layer0"], cfg.n_heads)
            return nm.sum_all(nm.mul(s1, w))

        assert grad_check(loss, s0).max_rel_err < 1e-4


class TestForwardMspn:
    def test_prediction_is_distribution(self, params, cfg):
        rng = np.random.default_rng(5)
        res = forward_mspn(make_pair(rng), params, cfg)
        p = res.prediction.p_hat.data
        assert p.shape == (3,)
        assert np.all(p >= 0) and abs(p.sum() - 1.0) < 1e-6

    def test_zero_classifier_gives_uniform(self, params, cfg):
        rng = np.random.default_rng(6)
        zeroed = dict(params)
        zeroed["classifier"] = {
            "w1": nm.zeros((D, D // 2), dtype=F64),
            "b1": nm.zeros((D // 2,), dtype=F64),
            "w2": nm.zeros((D // 2, 1), dtype=F64),
            "b2": nm.zeros((1,), dtype=F64),
        }
        res = forward_mspn(make_pair(rng), zeroed, cfg)
        assert np.allclose(res.prediction.p_hat.data, 1.0 / 3.0, atol=1e-9)

    def test_deterministic(self, params, cfg):
        rng = np.random.default_rng(7)
        pair = make_pair(rng)
        a = forward_mspn(pair, params, cfg)
        b = forward_mspn(pair, params, cfg)
        assert np.array_equal(a.prediction.p_hat.data, b.prediction.p_hat.data)

    def test_argmax_matches_logits(self, params, cfg):
        rng = np.random.default_rng(8)
        res = forward_mspn(make_pair(rng), params, cfg)
        assert int(np.argmax(res.prediction.p_hat.data)) == int(np.argmax(res.prediction.logits.data))

    def test_logit_shift_invariance_of_argmax(self, params, cfg):
        rng = np.random.default_rng(9)
        res = forward_mspn(make_pair(rng), params, cfg)
        shifted = nm.softmax(nm.shift(res.prediction.logits, 3.5), axis=-1)
        assert int(np.argmax(shifted.data)) == int(np.argmax(res.prediction.p_hat.data))

    def test_residual_identity_through_all_layers(self, cfg):
        # zero value projections in every prototype branch: S_N == S_0
        rng = np.random.default_rng(10)
        params = init_fusion_params(cfg, rng, F64, prototype_seed=11)
        for layer in params["fusion"].values():
            layer["s"]["wv"] = nm.zeros((D, D), requires_grad=True, dtype=F64)
        res = forward_mspn(make_pair(rng), params, cfg)
        assert np.array_equal(res.s_final.data, params["prototypes"].data)

    def test_row_conservation_random_shapes(self, cfg):
        for seed in range(4):
            rng = np.random.default_rng(100 + seed)
            L, M = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            params = init_fusion_params(cfg, rng, F64, prototype_seed=seed)
            res = forward_mspn(make_pair(rng, L=L, M=M), params, cfg)
            assert res.z_final.shape[0] == L + M
            assert res.s_final.shape[0] == cfg.n_classes

    def test_all_attention_rows_stochastic(self, params, cfg):
        rng = np.random.default_rng(11)
        res = forward_mspn(make_pair(rng), params, cfg, collect_weights=True)
        assert len(res.attention_weights) > 0
        for w in res.attention_weights:
            assert np.allclose(w.data.sum(axis=1), 1.0, atol=1e-6)

    def test_no_caf_plain_concat(self):
        cfg = ModelConfig(d_model=D, n_heads=4, n_fusion_layers=1, n_classes=3,
                          use_caf=False, vocab_size=8)
        rng = np.random.default_rng(12)
        params = init_fusion_params(cfg, rng, F64, prototype_seed=0)
        assert "caf" not in params
        pair = make_pair(rng, L=3, M=5)
        res = forward_mspn(pair, params, cfg)
        assert res.z_final.shape[0] == 8

    def test_no_cmft_single_prototype_step(self):
        cfg = ModelConfig(d_model=D, n_heads=4, n_fusion_layers=3, n_classes=3,
                          use_cmft=False, vocab_size=8)
        rng = np.random.default_rng(13)
        params = init_fusion_params(cfg, rng, F64, prototype_seed=0)
        assert list(params["fusion"].keys()) == ["layer0"]
        assert "z" not in params["fusion"]["layer0"]
        pair = make_pair(rng)
        res = forward_mspn(pair, params, cfg)
        # fused tokens untouched: prototypes attended once to the raw fusion
        _, _, z0 = cross_attention_fuse(pair.text_tokens, pair.visual_tokens,
                                        params["caf"], cfg.n_heads,
                                        text_mask=pair.text_mask)
        assert np.allclose(res.z_final.data, z0.data)

    def test_classification_loss_gradient_end_to_end(self, params, cfg):
        from aiva.objectives import classification_loss
        rng = np.random.default_rng(15)
        pair = make_pair(rng, L=3, M=3)

        def loss(_t):
            res = forward_mspn(pair, params, cfg)
            p = nm.reshape(res.prediction.p_hat, (1, cfg.n_classes))
            return classification_loss(p, [1])

        for name in ("prototypes",):
            assert grad_check(loss, params[name]).max_rel_err < 1e-4, name
        for name in ("w1", "w2", "b1", "b2"):
            assert grad_check(loss, params["classifier"][name]).max_rel_err < 1e-4, name
        assert grad_check(loss, params["caf"]["t"]["wq"]).max_rel_err < 1e-4
        assert grad_check(loss, params["fusion"]["layer0"]["s"]["wv"]).max_rel_err < 1e-4

    def test_frozen_z_update_keeps_z0(self, cfg):
        frozen_cfg = ModelConfig(d_model=D, n_heads=4, n_fusion_layers=2, n_classes=3,
                                 z_update="frozen", vocab_size=8)
        rng = np.random.default_rng(14)
        params = init_fusion_params(frozen_cfg, rng, F64, prototype_seed=0)
        pair = make_pair(rng)
        res = forward_mspn(pair, params, frozen_cfg)
        _, _, z0 = cross_attention_fuse(pair.text_tokens, pair.visual_tokens,
                                        params["caf"], frozen_cfg.n_heads,
                                        text_mask=pair.text_mask)
        assert np.allclose(res.z_final.data, z0.data)
