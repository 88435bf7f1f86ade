import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusenet.losses import (
    LossWeights,
    boundary_loss,
    clip_loss,
    clip_target,
    clustering_ce,
    down_up,
    joint_loss,
)
from fusenet.model import ModelConfig, forward, init_params
from fusenet.numerics import Tensor, finite_diff_check, resize_bilinear_array


def random_P(r, h=6, w=5, k=4):
    e = np.exp(r.normal(size=(h, w, k)) * 2)
    return e / e.sum(axis=2, keepdims=True)


def unit_rows(r, n, d):
    x = r.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def ce_scan(P):
    h, w, _ = P.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            total -= np.log(max(P[i, j]))
    return total / (h * w)


class TestClusteringCE:
    def test_one_hot_is_zero(self, rng):
        P = np.eye(3)[rng.integers(0, 3, size=(4, 4))]
        assert clustering_ce(Tensor(P)).item() == pytest.approx(0.0, abs=1e-12)

    def test_uniform_is_log_k(self):
        assert clustering_ce(Tensor(np.full((3, 3, 5), 0.2))).item() == pytest.approx(np.log(5), abs=1e-12)

    def test_matches_scan_on_100_maps(self):
        r = np.random.default_rng(0)
        for _ in range(100):
            P = random_P(r)
            assert abs(clustering_ce(Tensor(P)).item() - ce_scan(P)) < 1e-12

    def test_nonnegative_and_exact_zero_guarded(self):
        P = np.zeros((2, 2, 3))
        P[..., 0] = 1.0
        assert np.isfinite(clustering_ce(Tensor(P)).item())

    def test_gradient_with_frozen_target(self, rng):
        P = random_P(rng)
        target = np.eye(4)[P.argmax(axis=2)]
        assert finite_diff_check(lambda t: clustering_ce(t, target), P) < 1e-6


class TestClipLoss:
    def test_orthonormal_gram_oracle(self):
        # I = A orthonormal: logits = Id / T and the target is softmax(Id / T),
        # so the loss is the mean row entropy of that softmax
        for n, t in ((4, 0.5), (6, 0.5), (5, 0.25)):
            Q, _ = np.linalg.qr(np.random.default_rng(n).normal(size=(n, n)))
            S = np.exp(np.eye(n) / t)
            S /= S.sum(axis=1, keepdims=True)
            entropy = -np.mean(np.sum(S * np.log(S), axis=1))
            assert abs(clip_loss(Tensor(Q), Tensor(Q), t).item() - entropy) < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_row_permutation_invariance(self, seed):
        r = np.random.default_rng(seed)
        I, A = unit_rows(r, 6, 4), unit_rows(r, 6, 4)
        perm = r.permutation(6)
        a = clip_loss(Tensor(I), Tensor(A)).item()
        b = clip_loss(Tensor(I[perm]), Tensor(A[perm])).item()
        assert a == pytest.approx(b, abs=1e-12)

    def test_single_token_is_zero(self, rng):
        I, A = unit_rows(rng, 1, 3), unit_rows(rng, 1, 3)
        assert clip_loss(Tensor(I), Tensor(A)).item() == pytest.approx(0.0, abs=1e-15)

    def test_target_rows_are_distributions(self, rng):
        S = clip_target(unit_rows(rng, 5, 3), unit_rows(rng, 5, 3), 0.5)
        np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-12)

    def test_rejects_unnormalised_rows(self, rng):
        with pytest.raises(ValueError, match="L2"):
            clip_loss(Tensor(rng.normal(size=(3, 4))), Tensor(unit_rows(rng, 3, 4)))

    def test_gradient_with_frozen_target(self, rng):
        I, A = unit_rows(rng, 5, 3), unit_rows(rng, 5, 3)
        S = clip_target(I, A, 0.5)
        # the row-norm validation would reject finite-difference probes
        f = lambda t: clip_loss(t, Tensor(A), 0.5, tol=1e-3, target=S)
        assert finite_diff_check(f, I) < 1e-6


def boundary_oracle(P, beta):
    h, w, k = P.shape
    back = resize_bilinear_array(resize_bilinear_array(P, h // beta, w // beta), h, w)
    total = 0.0
    for i in range(h):
        for j in range(w):
            for c in range(k):
                total += abs(back[i, j, c] - P[i, j, c])
    return total / (h * w * k), np.abs(back - P).sum(axis=2)


class TestBoundaryLoss:
    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.sampled_from([1, 2, 4, 8]))
    def test_constant_map_is_exactly_zero(self, values, beta):
        P = np.broadcast_to(np.array(values), (16, 16, 3)).copy()
        assert boundary_loss(Tensor(P), beta).item() == 0.0

    def test_vertical_edge_oracle_and_locality(self):
        P = np.zeros((32, 32, 2))
        P[:, :13, 0] = 1.0
        P[:, 13:, 1] = 1.0
        value = boundary_loss(Tensor(P), 8).item()
        expected, per_pixel = boundary_oracle(P, 8)
        assert value == pytest.approx(expected, abs=1e-12)
        assert value > 0
        cols = np.nonzero(per_pixel.sum(axis=0) > 1e-12)[0]
        assert np.all(np.abs(cols + 0.5 - 13) <= 8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_nonnegative(self, seed):
        P = random_P(np.random.default_rng(seed), 8, 8, 3)
        assert boundary_loss(Tensor(P), 4).item() >= 0.0

    def test_down_up_shape(self, rng):
        assert down_up(Tensor(random_P(rng, 16, 12, 3)), 4).shape == (16, 12, 3)

    def test_map_smaller_than_beta(self, rng):
        with pytest.raises(ValueError, match="smaller"):
            boundary_loss(Tensor(random_P(rng, 8, 8, 2)), 16)

    def test_gradient_with_frozen_sign(self, rng):
        P = random_P(rng, 8, 8, 3)
        sign = np.sign(down_up(Tensor(P), 4).data - P)
        assert finite_diff_check(lambda t: boundary_loss(t, 4, sign), P) < 1e-6


def _network_terms(seed=0):
    cfg = ModelConfig(image_size=(16, 16), feat_channels=4, token_dim=8, num_clusters=3)
    r = np.random.default_rng(seed)
    params = init_params(cfg, seed)
    for p in params.values():
        p.data = p.data + r.normal(0, 0.1, p.shape)
    img = r.uniform(size=(16, 16, 3))
    return forward(img, np.clip(img * 0.9 + 0.05, 0, 1), params, cfg)


class TestJointLoss:
    def test_ce_only_equals_clustering_ce(self):
        out = _network_terms()
        total, terms = joint_loss(out.P, out.I, out.A, LossWeights(1.0, 0.0, 0.0, beta=4))
        assert total.item() == clustering_ce(out.P).item()
        assert terms["clip"] == 0.0 and terms["boundary"] == 0.0

    def test_default_weights_combination(self):
        out = _network_terms()
        a = clustering_ce(out.P).item()
        b = clip_loss(out.I, out.A, 0.5).item()
        c = boundary_loss(out.P, 4).item()
        total, _ = joint_loss(out.P, out.I, out.A, LossWeights(2.5, 0.5, 0.5, beta=4))
        assert total.item() == pytest.approx(2.5 * a + 0.5 * b + 0.5 * c, abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.tuples(st.floats(0.1, 5), st.floats(0, 5), st.floats(0, 5)), st.floats(0.1, 10))
    def test_linear_in_weights(self, lams, factor):
        out = _network_terms()
        w = LossWeights(*lams, beta=4)
        a = joint_loss(out.P, out.I, out.A, w)[0].item()
        b = joint_loss(out.P, out.I, out.A, w.scaled(factor))[0].item()
        assert b == pytest.approx(factor * a, abs=1e-12 * max(1.0, abs(b)))

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            LossWeights(0, 0, 0)

    def test_network_gradients_of_clip_and_boundary(self):
        cfg = ModelConfig(image_size=(16, 16), feat_channels=4, token_dim=8, num_clusters=3)
        r = np.random.default_rng(2)
        params = init_params(cfg, 2)
        for p in params.values():
            p.data = p.data + r.normal(0, 0.1, p.shape)
        img = r.uniform(size=(16, 16, 3))
        aug = np.clip(img * 0.9 + 0.05, 0, 1)
        out = forward(img, aug, params, cfg)
        S = clip_target(out.I.data, out.A.data, 0.5)
        sign = np.sign(down_up(out.P, 4).data - out.P.data)
        for name in ("patch.weight", "head.weight", "attn.qk.weight"):

            def f(t, name=name):
                trial = dict(params)
                trial[name] = t
                o = forward(img, aug, trial, cfg)
                return clip_loss(o.I, o.A, 0.5, target=S) + boundary_loss(o.P, 4, sign)

            assert finite_diff_check(f, params[name].data) < 1e-4, name
