import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusenet import numerics as nx
from fusenet.model import (
    ModelConfig,
    cross_attention,
    encode,
    forward,
    forward_streams,
    init_params,
    linear_attention,
    mix_ffn,
    parameter_shapes,
    patch_embed_normalize,
    predict_segmentation,
    project,
)
from fusenet.numerics import ShapeError, Tensor, finite_diff_check

SMALL = ModelConfig(image_size=(16, 16), feat_channels=4, token_dim=8, num_clusters=3)


def jitter(params, rng, scale=0.1):
    for p in params.values():
        p.data = p.data + rng.normal(0, scale, p.shape)
    return params


def softmax_np(x, axis):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


class TestConfig:
    def test_default_patch_gives_eight_by_eight_grid(self):
        cfg = ModelConfig()
        assert cfg.patch == 32 and cfg.grid == (8, 8) and cfg.num_tokens == 64

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"image_size": (20, 16), "patch_size": 3}, "divisible"),
            ({"num_clusters": 1}, "num_clusters"),
            ({"alpha": 0.0}, "alpha"),
        ],
    )
    def test_invalid(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            ModelConfig(**kwargs)

    def test_init_is_seeded(self):
        a, b = init_params(SMALL, 3), init_params(SMALL, 3)
        assert all(np.array_equal(a[k].data, b[k].data) for k in a)
        c = init_params(SMALL, 4)
        assert not np.array_equal(a["enc.conv.weight"].data, c["enc.conv.weight"].data)

    def test_init_bounds(self):
        params = init_params(SMALL, 0)
        for name, (shape, kind) in parameter_shapes(SMALL).items():
            assert params[name].shape == shape
            if kind == "zeros":
                assert not params[name].data.any()
            elif kind == "ones":
                assert np.all(params[name].data == 1.0)
        w = params["enc.conv.weight"].data
        assert np.abs(w).max() <= np.sqrt(6.0 / (3 * 3 * 3))

    def test_head_token_rows_start_at_zero(self):
        head = init_params(SMALL, 0)["head.weight"].data
        assert not head[: 2 * SMALL.token_dim].any()
        assert head[2 * SMALL.token_dim :].any()


class TestStages:
    def test_encode_shape_and_sharing(self, rng):
        params = init_params(SMALL, 0)
        img = rng.uniform(size=(16, 16, 3))
        a, b = encode(Tensor(img), params, SMALL), encode(Tensor(img), params, SMALL)
        assert a.shape == (16, 16, 4)
        np.testing.assert_array_equal(a.data, b.data)

    def test_encode_gradients(self, rng):
        cfg = ModelConfig(image_size=(8, 8), feat_channels=3, token_dim=4, num_clusters=2)
        params = jitter(init_params(cfg, 0), rng)
        img = Tensor(rng.uniform(size=(8, 8, 3)))
        w = rng.normal(size=(8, 8, 3))
        for name in ("enc.conv.weight", "enc.bn2.gamma", "enc.bn2.beta"):

            def f(t, name=name):
                trial = dict(params)
                trial[name] = t
                return (encode(img, trial, cfg) * w).sum()

            assert finite_diff_check(f, params[name].data) < 1e-4, name

    def test_project_zero_branch_keeps_residual(self, rng):
        params = init_params(SMALL, 0)
        params["proj.fc2.weight"] = Tensor(np.zeros((4, 4)))
        params["proj.fc2.bias"] = Tensor(np.zeros(4))
        x = rng.normal(size=(16, 16, 4))
        out = project(Tensor(x), params, SMALL)
        ln = nx.layer_norm(Tensor(x.reshape(-1, 4)), params["proj.ln.gamma"], params["proj.ln.beta"], SMALL.eps)
        expected = nx.batch_norm(nx.reshape(ln, (16, 16, 4)), params["proj.bn.gamma"], params["proj.bn.beta"], SMALL.eps)
        np.testing.assert_allclose(out.data, expected.data, atol=1e-12)

    def test_project_gradient(self, rng):
        params = jitter(init_params(SMALL, 0), rng)
        w = rng.normal(size=(16, 16, 4))
        f = lambda t: (project(t, params, SMALL) * w).sum()
        assert finite_diff_check(f, rng.normal(size=(16, 16, 4))) < 1e-4

    def test_patch_tokens_unit_norm_and_count(self, rng):
        cfg = ModelConfig(image_size=(256, 256), feat_channels=2, token_dim=8, num_clusters=2)
        assert cfg.patch == 32
        params = init_params(cfg, 0)
        tok = patch_embed_normalize(Tensor(rng.normal(size=(256, 256, 2))), params, cfg)
        assert tok.shape == (64, 8)
        np.testing.assert_allclose(np.linalg.norm(tok.data, axis=1), 1.0, atol=1e-9)

    def test_patch_tokens_scale_invariant(self, rng):
        params = init_params(SMALL, 0)
        feat = rng.normal(size=(16, 16, 4))
        a = patch_embed_normalize(Tensor(feat), params, SMALL).data
        b = patch_embed_normalize(Tensor(10.0 * feat), params, SMALL).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_linear_attention_loop_oracle(self, rng):
        q, k, v = rng.normal(size=(6, 4)), rng.normal(size=(6, 4)), rng.normal(size=(6, 5))
        sq, sk = softmax_np(q, 1), softmax_np(k, 0)
        oracle = np.zeros((6, 5))
        for i in range(6):
            for j in range(5):
                for a in range(4):
                    oracle[i, j] += sq[i, a] * sum(sk[n, a] * v[n, j] for n in range(6))
        out = linear_attention(Tensor(q), Tensor(k), Tensor(v)).data
        np.testing.assert_allclose(out, oracle, atol=1e-10)

    def test_cross_attention_shape_and_asymmetry(self, rng):
        params = jitter(init_params(SMALL, 0), rng)
        x1, x2 = Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=(4, 8)))
        a = cross_attention(x1, x2, params, SMALL)
        b = cross_attention(x2, x1, params, SMALL)
        assert a.shape == (4, 16)
        assert not np.allclose(a.data, b.data)

    def test_cross_attention_shape_mismatch(self):
        params = init_params(SMALL, 0)
        with pytest.raises(ShapeError):
            cross_attention(Tensor(np.zeros((4, 8))), Tensor(np.zeros((3, 8))), params, SMALL)

    def test_mix_ffn_zero_weights(self, rng):
        params = init_params(SMALL, 0)
        for name in ("ffn.fc1.weight", "ffn.fc2.weight", "ffn.dw.weight"):
            params[name] = Tensor(np.zeros(params[name].shape))
        out = mix_ffn(Tensor(rng.normal(size=(4, 16))), params, SMALL)
        assert out.shape == (4, 16)
        assert not out.data.any()

    def test_mix_ffn_gradient(self, rng):
        params = jitter(init_params(SMALL, 0), rng)
        w = rng.normal(size=(4, 16))
        f = lambda t: (mix_ffn(t, params, SMALL) * w).sum()
        assert finite_diff_check(f, rng.normal(size=(4, 16))) < 1e-4


class TestForward:
    def test_contracts(self, rng):
        params = jitter(init_params(SMALL, 0), rng)
        img, aug = rng.uniform(size=(16, 16, 3)), rng.uniform(size=(16, 16, 3))
        out = forward(img, aug, params, SMALL)
        assert out.P.shape == (16, 16, 3)
        assert out.P.data.min() >= 0
        np.testing.assert_allclose(out.P.data.sum(axis=2), 1.0, atol=1e-9)
        for t in (out.I, out.A):
            assert t.shape == (SMALL.num_tokens, 8)
            np.testing.assert_allclose(np.linalg.norm(t.data, axis=1), 1.0, atol=1e-9)

    def test_default_token_shape(self):
        cfg = ModelConfig(image_size=(256, 256), feat_channels=2, token_dim=8, num_clusters=2)
        assert cfg.num_tokens == 64

    def test_symmetric_streams_with_identity_view(self, rng):
        cfg = ModelConfig(image_size=(16, 16), feat_channels=4, token_dim=8, num_clusters=3, alpha=1.0)
        params = jitter(init_params(cfg, 0), rng)
        img = rng.uniform(size=(16, 16, 3))
        s = forward_streams(img, img, params, cfg)
        np.testing.assert_allclose(s.image_logits.data, s.aug_logits.data, atol=1e-10, rtol=0)

    def test_weight_sharing_moves_both_streams(self, rng):
        cfg = ModelConfig(image_size=(16, 16), feat_channels=4, token_dim=8, num_clusters=3, alpha=1.0)
        params = jitter(init_params(cfg, 0), rng)
        img = rng.uniform(size=(16, 16, 3))
        params["head.bias"].data[1] += 5.0
        s = forward_streams(img, img, params, cfg)
        np.testing.assert_allclose(s.image_logits.data, s.aug_logits.data, atol=1e-10, rtol=0)

    def test_misaligned_views_rejected(self, rng):
        params = init_params(SMALL, 0)
        with pytest.raises(ShapeError, match="aligned"):
            forward(np.zeros((16, 16, 3)), np.zeros((16, 8, 3)), params, SMALL)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.01, 100.0))
    def test_argmax_invariant_to_positive_logit_scale(self, seed, c):
        r = np.random.default_rng(seed)
        logits = r.normal(size=(6, 5, 4))
        base = predict_segmentation(nx.softmax(Tensor(logits), axis=2))
        scaled = predict_segmentation(nx.softmax(Tensor(c * logits), axis=2))
        np.testing.assert_array_equal(base, scaled)


class TestPredict:
    def test_hand_cases(self):
        assert predict_segmentation(np.array([[[0.1, 0.7, 0.2]]]))[0, 0] == 1
        assert predict_segmentation(np.array([[[0.5, 0.5]]]))[0, 0] == 0

    def test_one_hot_recovered(self, rng):
        idx = rng.integers(0, 5, size=(7, 6))
        np.testing.assert_array_equal(predict_segmentation(np.eye(5)[idx]), idx)
