"""Finite-difference verification of every backward rule and of the full loss.

Each primitive is checked in isolation: its output is contracted with a fixed
random weight by a probe node outside the op registry, so corrupting one rule
(see :func:`numerics.corrupt_backward`) fails exactly that row.  The
end-to-end check differentiates the joint loss w.r.t. every model parameter
with the argmax target, the edge-loss sign pattern and the contrastive soft
target frozen at the base point: they are constants of the objective, and
freezing them keeps the loss smooth under small perturbations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics as nx
from .losses import LossWeights, clip_target, down_up, joint_loss, one_hot_argmax
from .model import ModelConfig, forward, init_params
from .numerics import Tensor

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    entries: int
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < TOLERANCE)


def _probe(y: Tensor, weight: np.ndarray) -> Tensor:
    """sum(y * weight) as a single node whose backward is never corrupted."""
    return nx._node("probe", np.array((y.data * weight).sum()), (y,), lambda g: (g * weight,))


def _away_from_zero(r: np.random.Generator, shape, low: float = 0.5) -> np.ndarray:
    return r.choice([-1.0, 1.0], size=shape) * r.uniform(low, 1.5, size=shape)


# name -> builder(rng) returning (fn(*inputs) -> Tensor, list of input arrays)
def _cases() -> dict[str, Callable]:
    def conv(r):
        b = Tensor(r.normal(size=3))
        return (lambda x, k: nx.conv2d(x, k, b, padding="edge") + nx.conv2d(x, k)), [
            r.normal(size=(5, 4, 2)),
            r.normal(size=(3, 3, 2, 3)),
        ]

    def norm(fn, shape):
        def build(r):
            c = shape[-1]
            return fn, [r.normal(size=shape), r.normal(size=c), r.normal(size=c)]

        return build

    return {
        "add": lambda r: (nx.add, [r.normal(size=(3, 4)), r.normal(size=(4,))]),
        "sub": lambda r: (nx.sub, [r.normal(size=(3, 4)), r.normal(size=(3, 1))]),
        "mul": lambda r: (nx.mul, [r.normal(size=(3, 4)), r.normal(size=(4,))]),
        "div": lambda r: (nx.div, [r.normal(size=(3, 4)), _away_from_zero(r, (3, 4))]),
        "exp": lambda r: (nx.exp, [r.normal(size=(3, 4))]),
        "log": lambda r: (nx.log, [r.uniform(0.5, 2.0, size=(3, 4))]),
        "tanh": lambda r: (nx.tanh, [r.normal(size=(3, 4))]),
        "abs": lambda r: (nx.tabs, [_away_from_zero(r, (3, 4))]),
        "gelu": lambda r: (nx.gelu, [r.normal(size=(3, 4))]),
        "sum": lambda r: ((lambda x: nx.tsum(x, axis=1)), [r.normal(size=(3, 4))]),
        "reshape": lambda r: ((lambda x: nx.reshape(x, (2, 6))), [r.normal(size=(3, 4))]),
        "transpose": lambda r: ((lambda x: nx.transpose(x, (1, 2, 0))), [r.normal(size=(2, 3, 4))]),
        "getitem": lambda r: ((lambda x: nx.getitem(x, (slice(1, 3), [0, 2, 2]))), [r.normal(size=(3, 4))]),
        "concat": lambda r: ((lambda a, b: nx.concat([a, b], axis=1)), [r.normal(size=(3, 2)), r.normal(size=(3, 4))]),
        "matmul": lambda r: (nx.matmul, [r.normal(size=(3, 4)), r.normal(size=(4, 5))]),
        "linear": lambda r: (nx.linear, [r.normal(size=(5, 4)), r.normal(size=(4, 3)), r.normal(size=3)]),
        "conv2d": conv,
        "depthwise_conv2d": lambda r: (
            nx.depthwise_conv2d,
            [r.normal(size=(4, 5, 2)), r.normal(size=(3, 3, 2)), r.normal(size=2)],
        ),
        "batch_norm": norm(nx.batch_norm, (4, 3, 3)),
        "layer_norm": norm(nx.layer_norm, (3, 5)),
        "softmax": lambda r: ((lambda x: nx.softmax(x, axis=1)), [r.normal(size=(3, 4))]),
        "log_softmax": lambda r: ((lambda x: nx.log_softmax(x, axis=0)), [r.normal(size=(3, 4))]),
        "l2_normalize": lambda r: (nx.l2_normalize, [r.normal(size=(3, 4))]),
        "resize_bilinear": lambda r: ((lambda x: nx.resize_bilinear(x, 3, 7)), [r.normal(size=(5, 4, 2))]),
    }


PRIMITIVES = tuple(_cases())


def check_primitive(name: str, seed: int = 0) -> CheckResult:
    """Max relative error over all inputs of one primitive."""
    start = time.perf_counter()
    r = np.random.default_rng([seed, PRIMITIVES.index(name)])
    fn, inputs = _cases()[name](r)
    weight = r.normal(size=fn(*[Tensor(a) for a in inputs]).shape)
    worst, entries = 0.0, 0
    for i in range(len(inputs)):

        def f(t, i=i):
            args = [t if j == i else Tensor(a) for j, a in enumerate(inputs)]
            return _probe(fn(*args), weight)

        worst = max(worst, nx.finite_diff_check(f, inputs[i]))
        entries += inputs[i].size
    return CheckResult(name, worst, entries, time.perf_counter() - start)


def end_to_end_setup(size: int = 16, seed: int = 0):
    """Small model, image pair and frozen constants for the joint-loss check."""
    cfg = ModelConfig(image_size=(size, size), feat_channels=4, token_dim=8, num_clusters=3)
    weights = LossWeights(beta=max(1, size // 4))
    r = np.random.default_rng(seed)
    img = r.uniform(0, 1, size=(size, size, 3))
    aug = np.clip(img * 0.8 + 0.1 + r.normal(0, 0.02, img.shape), 0, 1)
    params = init_params(cfg, seed)
    # move off the initial point: zero head rows and unit norms are special
    for p in params.values():
        p.data = p.data + r.normal(0.0, 0.1, p.shape)
    out = forward(img, aug, params, cfg)
    frozen = {
        "target": one_hot_argmax(out.P.data),
        "edge_sign": np.sign(down_up(out.P, weights.beta).data - out.P.data),
        "clip_targets": clip_target(out.I.data, out.A.data, weights.temperature),
    }
    return cfg, weights, img, aug, params, frozen


def check_end_to_end(size: int = 16, seed: int = 0) -> CheckResult:
    start = time.perf_counter()
    cfg, weights, img, aug, params, frozen = end_to_end_setup(size, seed)
    worst, entries = 0.0, 0
    for name, p in params.items():
        base = p.data.copy()

        def f(t, name=name):
            trial = dict(params)
            trial[name] = t
            out = forward(img, aug, trial, cfg)
            return joint_loss(out.P, out.I, out.A, weights, **frozen)[0]

        worst = max(worst, nx.finite_diff_check(f, base))
        entries += base.size
    return CheckResult("joint_loss[end-to-end]", worst, entries, time.perf_counter() - start)


def run_suite(size: int = 16, seed: int = 0, corrupt: tuple[str, ...] = ()) -> list[CheckResult]:
    """All primitive checks followed by the end-to-end check."""
    with nx.corrupt_backward(*corrupt):
        results = [check_primitive(name, seed) for name in PRIMITIVES]
        results.append(check_end_to_end(size, seed))
    return results


def format_report(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'op':<{width}}  max_rel_err  entries  status"]
    for r in results:
        status = "ok" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {r.max_rel_error:11.3e}  {r.entries:7d}  {status}")
    return "\n".join(lines)
