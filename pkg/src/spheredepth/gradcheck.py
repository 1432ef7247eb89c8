"""Central finite-difference gradient checking for every differentiable op.

The numeric side is the independent oracle: it re-evaluates the forward
function at perturbed inputs and never touches the backward code.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import PaddingMode, Tensor


def numeric_gradient(f: Callable[[Sequence[np.ndarray]], float],
                     arrays: Sequence[np.ndarray], index: int,
                     eps: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function w.r.t. arrays[index]."""
    base = [a.copy() for a in arrays]
    g = np.zeros_like(base[index])
    flat = base[index].ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(base)
        flat[i] = orig - eps
        fm = f(base)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def check_op(build: Callable[[Sequence[Tensor]], Tensor],
             arrays: Sequence[np.ndarray], eps: float = 1e-6) -> float:
    """Max relative error between backprop and finite differences over all
    inputs of a scalar-valued graph builder."""
    tensors = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]
    loss = build(tensors)
    ad.backward(loss)

    def f(arrs):
        return float(build([Tensor(a) for a in arrs]).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        num = numeric_gradient(f, [a.astype(np.float64) for a in arrays], i, eps)
        ana = t.grad if t.grad is not None else np.zeros_like(num)
        scale = max(np.abs(num).max(), np.abs(ana).max(), 1e-8)
        worst = max(worst, float(np.abs(ana - num).max() / scale))
    return worst


def run_all(seed: int = 0) -> dict[str, float]:
    """Gradient-check the full operator set plus the pose exponential map.
    Returns op name -> max relative error."""
    from .posenet import exp_map
    from .resample import warp_to_reference

    rng = np.random.default_rng(seed)
    results = {}

    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3)) * 0.5
    b = rng.standard_normal(3) * 0.1
    results["conv2d_zero"] = check_op(
        lambda ts: ad.sum_(ad.conv2d(ts[0], ts[1], ts[2], 1, PaddingMode.ZERO)),
        [x, w, b])
    results["conv2d_wrap"] = check_op(
        lambda ts: ad.sum_(ad.conv2d(ts[0], ts[1], ts[2], 2, PaddingMode.WRAP)),
        [x, w, b])
    results["pixel_shuffle"] = check_op(
        lambda ts: ad.sum_(ad.mul(ad.pixel_shuffle(ts[0], 2), ts[1])),
        [rng.standard_normal((1, 8, 3, 3)), rng.standard_normal((1, 2, 6, 6))])
    results["downsample2x"] = check_op(
        lambda ts: ad.sum_(ad.mul(ad.downsample2x(ts[0]), ts[1])),
        [rng.standard_normal((2, 4, 6)), rng.standard_normal((2, 2, 3))])

    a = rng.standard_normal((4, 3))
    c = rng.standard_normal((4, 3))
    pos = np.abs(rng.standard_normal((4, 3))) + 0.5
    frac = rng.uniform(-0.9, 0.9, (4, 3))
    unary = {
        "add": lambda ts: ad.sum_(ad.mul(ad.add(ts[0], ts[1]), ts[1])),
        "sub": lambda ts: ad.sum_(ad.mul(ad.sub(ts[0], ts[1]), ts[1])),
        "mul": lambda ts: ad.sum_(ad.mul(ts[0], ts[1])),
        "div": lambda ts: ad.sum_(ad.div(ts[0], ts[1])),
        "sigmoid": lambda ts: ad.sum_(ad.mul(ad.sigmoid(ts[0]), ts[1])),
        "relu": lambda ts: ad.sum_(ad.mul(ad.relu(ts[0]), ts[1])),
        "mean": lambda ts: ad.mul(ad.mean(ts[0]), float(np.pi)),
        "concat": lambda ts: ad.sum_(ad.mul(ad.concat([ts[0], ts[1]], axis=0),
                                            ad.concat([ts[1], ts[0]], axis=0))),
        "matmul": lambda ts: ad.sum_(ad.matmul(ts[0], ts[1])),
    }
    results["add"] = check_op(unary["add"], [a, c])
    results["sub"] = check_op(unary["sub"], [a, c])
    results["mul"] = check_op(unary["mul"], [a, c])
    results["div"] = check_op(unary["div"], [a, pos])
    results["sigmoid"] = check_op(unary["sigmoid"], [a, c])
    results["relu"] = check_op(unary["relu"], [a + 0.05, c])  # keep off the kink
    results["mean"] = check_op(unary["mean"], [a])
    results["concat"] = check_op(unary["concat"], [a, c])
    results["matmul"] = check_op(unary["matmul"],
                                 [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))])
    results["abs"] = check_op(lambda ts: ad.sum_(ad.abs_(ts[0])), [a + 0.2 * np.sign(a)])
    results["log"] = check_op(lambda ts: ad.sum_(ad.log(ts[0])), [pos])
    results["sqrt"] = check_op(lambda ts: ad.sum_(ad.sqrt(ts[0])), [pos])
    results["asin"] = check_op(lambda ts: ad.sum_(ad.asin(ts[0])), [frac])
    results["atan2"] = check_op(lambda ts: ad.sum_(ad.atan2(ts[0], ts[1])), [a, pos])

    img = rng.standard_normal((1, 2, 5, 6))
    grid = np.stack([rng.uniform(0.2, 4.6, (1, 3, 4)),
                     rng.uniform(0.2, 3.6, (1, 3, 4))], axis=-1)
    # keep clear of the bilinear lattice where the derivative jumps
    grid += np.where(np.abs(grid - np.round(grid)) < 0.05, 0.1, 0.0)
    results["grid_sample"] = check_op(
        lambda ts: ad.sum_(ad.grid_sample(ts[0], ts[1], wrap_longitude=True)),
        [img, grid], eps=1e-6)

    v = rng.standard_normal(6) * 0.5
    proj = rng.standard_normal((3, 3))
    results["exp_map"] = check_op(
        lambda ts: ad.sum_(ad.mul(exp_map(ts[0])[0], Tensor(proj))), [v])
    v_small = np.concatenate([rng.standard_normal(3) * 1e-6, rng.standard_normal(3)])
    results["exp_map_small_angle"] = check_op(
        lambda ts: ad.sum_(ad.mul(exp_map(ts[0])[0], Tensor(proj))), [v_small])

    target = rng.uniform(0, 1, (2, 4, 8))
    depth = rng.uniform(1.0, 3.0, (4, 8))
    R = np.eye(3)
    t = np.array([0.02, -0.01, 0.03])
    results["warp_depth"] = check_op(
        lambda ts: ad.sum_(warp_to_reference(Tensor(target), ts[0], Tensor(R),
                                             Tensor(t))[0]),
        [depth], eps=1e-5)
    return results
