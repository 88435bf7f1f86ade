"""Dual-stream forward pass.

Both streams (original image and augmented view) run through one shared set
of weights: encoder, projection block, patch embedding, cross-attention and
the decoding head.  The two per-stream logit maps are summed and softmaxed
into the soft prediction map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor

Params = dict[str, Tensor]


@dataclass(frozen=True)
class ModelConfig:
    image_size: tuple[int, int] = (256, 256)
    in_channels: int = 3
    feat_channels: int = 64
    token_dim: int = 64
    num_clusters: int = 16
    alpha: float = 3.0
    patch_size: int | None = None  # None -> image height // 8
    ffn_expansion: int = 4
    eps: float = 1e-5
    head_init_scale: float = 0.01

    def __post_init__(self):
        h, w = self.image_size
        p = self.patch
        if p < 1 or h % p or w % p:
            raise ValueError(f"image size {h}x{w} is not divisible by patch size {p}")
        if self.num_clusters < 2:
            raise ValueError("num_clusters must be at least 2")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.token_dim < 2 or self.feat_channels < 2:
            raise ValueError("token_dim and feat_channels must be at least 2")
        if self.head_init_scale <= 0:
            raise ValueError("head_init_scale must be positive")

    @property
    def patch(self) -> int:
        return self.patch_size if self.patch_size is not None else max(1, self.image_size[0] // 8)

    @property
    def grid(self) -> tuple[int, int]:
        return self.image_size[0] // self.patch, self.image_size[1] // self.patch

    @property
    def num_tokens(self) -> int:
        gh, gw = self.grid
        return gh * gw


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], str]]:
    """Name -> (shape, init kind) for every trainable tensor."""
    c, d, t, k = cfg.in_channels, cfg.feat_channels, cfg.token_dim, cfg.num_clusters
    p = cfg.patch
    w2 = 2 * t
    hidden = cfg.ffn_expansion * w2
    return {
        # encoder; convs feeding a norm carry no bias (it would be cancelled)
        "enc.conv.weight": ((3, 3, c, d), "weight"),
        "enc.bn1.gamma": ((d,), "ones"),
        "enc.bn1.beta": ((d,), "zeros"),
        "enc.dw.weight": ((1, 1, d), "weight"),
        "enc.bn2.gamma": ((d,), "ones"),
        "enc.bn2.beta": ((d,), "zeros"),
        # projection block
        "proj.fc1.weight": ((d, d), "weight"),
        "proj.fc1.bias": ((d,), "zeros"),
        "proj.fc2.weight": ((d, d), "weight"),
        "proj.fc2.bias": ((d,), "zeros"),
        "proj.ln.gamma": ((d,), "ones"),
        "proj.ln.beta": ((d,), "zeros"),
        "proj.bn.gamma": ((d,), "ones"),
        "proj.bn.beta": ((d,), "zeros"),
        # patch embedding
        "patch.weight": ((p * p * d, t), "weight"),
        "patch.bias": ((t,), "zeros"),
        # cross-attention
        "attn.ln_in.gamma": ((t,), "ones"),
        "attn.ln_in.beta": ((t,), "zeros"),
        "attn.qk.weight": ((t, 2 * t), "weight"),
        "attn.qk.bias": ((2 * t,), "zeros"),
        "attn.v.weight": ((t, t), "weight"),
        "attn.v.bias": ((t,), "zeros"),
        "attn.out.weight": ((t, w2), "weight"),
        "attn.out.bias": ((w2,), "zeros"),
        "attn.ln_e.gamma": ((w2,), "ones"),
        "attn.ln_e.beta": ((w2,), "zeros"),
        "attn.ln_t.gamma": ((w2,), "ones"),
        "attn.ln_t.beta": ((w2,), "zeros"),
        # MixFFN
        "ffn.fc1.weight": ((w2, hidden), "weight"),
        "ffn.fc1.bias": ((hidden,), "zeros"),
        "ffn.dw.weight": ((3, 3, hidden), "weight"),
        "ffn.dw.bias": ((hidden,), "zeros"),
        "ffn.fc2.weight": ((hidden, w2), "weight"),
        "ffn.fc2.bias": ((w2,), "zeros"),
        # decoding head: BN over [upsampled tokens || encoder features] -> K logits
        "head.bn.gamma": ((w2 + d,), "ones"),
        "head.bn.beta": ((w2 + d,), "zeros"),
        "head.weight": ((w2 + d, k), "head"),
        "head.bias": ((k,), "zeros"),
    }


def _fan_in(shape: tuple[int, ...]) -> int:
    if len(shape) == 4:  # (k, k, cin, cout)
        return shape[0] * shape[1] * shape[2]
    if len(shape) == 3:  # depthwise (k, k, c)
        return shape[0] * shape[1]
    return shape[0]


def init_params(cfg: ModelConfig, seed: int = 0) -> Params:
    """Seeded initialisation: U(+-sqrt(6/fan_in)) weights, zero biases, unit norms.

    The head is the exception.  Its pixel-feature rows are drawn at
    ``head_init_scale`` times the usual bound and its token rows start at
    zero, so the first partition follows pixel colour and the learned,
    centroid-like part of the head dominates after a few steps.
    """
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, (shape, kind) in parameter_shapes(cfg).items():
        if kind in ("weight", "head"):
            bound = math.sqrt(6.0 / _fan_in(shape))
            value = rng.uniform(-bound, bound, size=shape)
            if kind == "head":
                value *= cfg.head_init_scale
                value[: 2 * cfg.token_dim] = 0.0
        elif kind == "ones":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params[name] = Tensor(value, requires_grad=True)
    return params


def _check_image(img: Tensor, cfg: ModelConfig) -> None:
    expected = (*cfg.image_size, cfg.in_channels)
    if img.shape != expected:
        raise ShapeError(f"image has shape {img.shape}, model expects {expected}")


def encode(img: Tensor, params: Params, cfg: ModelConfig) -> Tensor:
    """3x3 conv -> BN -> 1x1 depthwise conv -> BN; (H, W, C) -> (H, W, D)."""
    _check_image(img, cfg)
    x = nx.conv2d(img, params["enc.conv.weight"], padding="edge")
    x = nx.batch_norm(x, params["enc.bn1.gamma"], params["enc.bn1.beta"], cfg.eps)
    x = nx.depthwise_conv2d(x, params["enc.dw.weight"])
    return nx.batch_norm(x, params["enc.bn2.gamma"], params["enc.bn2.beta"], cfg.eps)


def project(x: Tensor, params: Params, cfg: ModelConfig) -> Tensor:
    """LN(fc2(GELU(fc1(x))) + x) per pixel, then a batch norm over the image."""
    h, w, d = x.shape
    flat = nx.reshape(x, (h * w, d))
    z = nx.linear(flat, params["proj.fc1.weight"], params["proj.fc1.bias"])
    z = nx.linear(nx.gelu(z), params["proj.fc2.weight"], params["proj.fc2.bias"])
    z = nx.layer_norm(z + flat, params["proj.ln.gamma"], params["proj.ln.beta"], cfg.eps)
    z = nx.reshape(z, (h, w, d))
    return nx.batch_norm(z, params["proj.bn.gamma"], params["proj.bn.beta"], cfg.eps)


def patchify(feat: Tensor, p: int) -> Tensor:
    """(H, W, D) -> (H/p * W/p, p*p*D), patches in row-major grid order."""
    h, w, d = feat.shape
    if h % p or w % p:
        raise ShapeError(f"feature map {h}x{w} is not divisible by patch size {p}")
    x = nx.reshape(feat, (h // p, p, w // p, p, d))
    x = nx.transpose(x, (0, 2, 1, 3, 4))
    return nx.reshape(x, ((h // p) * (w // p), p * p * d))


def patch_embed_normalize(feat: Tensor, params: Params, cfg: ModelConfig) -> Tensor:
    """Flatten p x p patches, project to ``token_dim`` and L2-normalise each token."""
    tokens = nx.linear(patchify(feat, cfg.patch), params["patch.weight"], params["patch.bias"])
    return nx.l2_normalize(tokens)


def mix_ffn(t: Tensor, params: Params, cfg: ModelConfig) -> Tensor:
    """Expand -> 3x3 depthwise conv on the token grid -> GELU -> contract."""
    n, width = t.shape
    gh, gw = cfg.grid
    if gh * gw != n:
        gh = gw = math.isqrt(n)
        if gh * gw != n:
            raise ShapeError(f"mix_ffn: {n} tokens do not form a grid")
    z = nx.linear(t, params["ffn.fc1.weight"], params["ffn.fc1.bias"])
    hidden = z.shape[1]
    z = nx.reshape(z, (gh, gw, hidden))
    z = nx.depthwise_conv2d(z, params["ffn.dw.weight"], params["ffn.dw.bias"])
    z = nx.gelu(nx.reshape(z, (n, hidden)))
    return nx.linear(z, params["ffn.fc2.weight"], params["ffn.fc2.bias"])


def linear_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax_features(Q) @ (softmax_tokens(K)^T @ V)."""
    return nx.matmul(nx.softmax(q, axis=1), nx.matmul(nx.transpose(nx.softmax(k, axis=0)), v))


def cross_attention(x1: Tensor, x2: Tensor, params: Params, cfg: ModelConfig) -> Tensor:
    """Shared-weight cross-attention block; returns (N, 2 * token_dim)."""
    if x1.shape != x2.shape:
        raise ShapeError(f"cross_attention: stream shapes differ, {x1.shape} vs {x2.shape}")
    t = x1.shape[1]
    g, b = params["attn.ln_in.gamma"], params["attn.ln_in.beta"]
    n1 = nx.layer_norm(x1, g, b, cfg.eps)
    n2 = nx.layer_norm(x2, g, b, cfg.eps)
    qk = nx.linear(n1, params["attn.qk.weight"], params["attn.qk.bias"])
    q, k = qk[:, :t], qk[:, t:]
    v = nx.linear(n2, params["attn.v.weight"], params["attn.v.bias"])
    e = linear_attention(q, k, v)
    x = nx.concat([n1, n2], axis=1)
    e = nx.linear(e, params["attn.out.weight"], params["attn.out.bias"])
    t_ = x + nx.layer_norm(e, params["attn.ln_e.gamma"], params["attn.ln_e.beta"], cfg.eps)
    return t_ + mix_ffn(nx.layer_norm(t_, params["attn.ln_t.gamma"], params["attn.ln_t.beta"], cfg.eps), params, cfg)


def decode_stream(tokens: Tensor, feat: Tensor, params: Params, cfg: ModelConfig) -> Tensor:
    """Token grid -> bilinear upsample -> concat pixel features -> BN -> 1x1 conv to K logits.

    ``feat`` is the stream's encoder output.  The BN removes the spatial mean
    of every head input, so no channel can shift one cluster's logit
    uniformly over the whole image.
    """
    h, w, _ = feat.shape
    gh, gw = cfg.grid
    grid = nx.reshape(tokens, (gh, gw, tokens.shape[1]))
    z = nx.concat([nx.resize_bilinear(grid, h, w), feat], axis=2)
    z = nx.batch_norm(z, params["head.bn.gamma"], params["head.bn.beta"], cfg.eps)
    z = nx.reshape(z, (h * w, z.shape[2]))
    logits = nx.linear(z, params["head.weight"], params["head.bias"])
    return nx.reshape(logits, (h, w, cfg.num_clusters))


class StreamOutputs(NamedTuple):
    image_logits: Tensor
    aug_logits: Tensor
    I: Tensor
    A: Tensor


class ForwardOutput(NamedTuple):
    P: Tensor
    I: Tensor
    A: Tensor


def forward_streams(img, aug, params: Params, cfg: ModelConfig) -> StreamOutputs:
    img, aug = nx.as_tensor(img), nx.as_tensor(aug)
    if img.shape != aug.shape:
        raise ShapeError(f"image {img.shape} and augmented view {aug.shape} are not pixel-aligned")
    e_img, e_aug = encode(img, params, cfg), encode(aug, params, cfg)
    tok_i = patch_embed_normalize(project(e_img, params, cfg), params, cfg)
    tok_a = patch_embed_normalize(project(e_aug, params, cfg), params, cfg)
    out_i = cross_attention(cfg.alpha * tok_i, tok_a, params, cfg)
    out_a = cross_attention(cfg.alpha * tok_a, tok_i, params, cfg)
    return StreamOutputs(
        decode_stream(out_i, e_img, params, cfg),
        decode_stream(out_a, e_aug, params, cfg),
        tok_i,
        tok_a,
    )


def forward(img, aug, params: Params, cfg: ModelConfig) -> ForwardOutput:
    """Soft prediction map P (H, W, K) plus the two token sequences I and A."""
    s = forward_streams(img, aug, params, cfg)
    return ForwardOutput(nx.softmax(s.image_logits + s.aug_logits, axis=2), s.I, s.A)


def predict_segmentation(P) -> np.ndarray:
    """Per-pixel argmax over clusters; ties go to the lowest index."""
    data = P.data if isinstance(P, Tensor) else np.asarray(P)
    return np.argmax(data, axis=-1)
