"""Central finite-difference verification of the analytic gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelShape, bce_loss, flatten, forward, init_params, loss_and_grad, unflatten

SMALL_SHAPE = ModelShape(seq_len=6, embed_dim=3, hidden=4, dense=8)


@dataclass
class GradCheckReport:
    n_params: int
    max_rel_error: float
    worst_index: int
    analytic: np.ndarray
    numeric: np.ndarray

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


# A step-1e-5 central difference of an O(1) double-precision loss carries
# ~1e-11 absolute roundoff, so coordinates below this magnitude are compared
# against the floor instead of their own size.
RELATIVE_FLOOR = 1e-6


def relative_error(a: np.ndarray, n: np.ndarray, floor: float = RELATIVE_FLOOR) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor)."""
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(features, labels, vec: np.ndarray, shape: ModelShape, step: float = 1e-5):
    grad = np.empty_like(vec)
    work = vec.copy()
    for i in range(vec.size):
        orig = work[i]
        work[i] = orig + step
        lp = bce_loss(forward(features, unflatten(work, shape), keep_cache=False)[0], labels)
        work[i] = orig - step
        lm = bce_loss(forward(features, unflatten(work, shape), keep_cache=False)[0], labels)
        work[i] = orig
        grad[i] = (lp - lm) / (2.0 * step)
    return grad


def check_gradients(
    shape: ModelShape = SMALL_SHAPE,
    seed: int = 0,
    batch: int = 3,
    step: float = 1e-5,
    param_scale: float = 1.0,
) -> GradCheckReport:
    """Compare backward() with central differences on every coordinate.

    Inputs are random (no padding) and parameters are the seeded init scaled
    by ``param_scale`` with random biases, so no coordinate is trivially zero.
    """
    rng = np.random.default_rng(seed)
    params = init_params(seed, shape)
    vec = flatten(params) * param_scale
    vec += rng.normal(scale=0.1, size=vec.size)
    features = rng.normal(size=(batch, shape.seq_len, shape.embed_dim))
    labels = rng.integers(0, 2, size=batch)
    _, analytic = loss_and_grad(features, labels, unflatten(vec, shape))
    numeric = numeric_gradient(features, labels, vec, shape, step)
    rel = relative_error(analytic, numeric)
    worst = int(np.argmax(rel))
    return GradCheckReport(vec.size, float(rel[worst]), worst, analytic, numeric)
