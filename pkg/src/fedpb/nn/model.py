"""Stacked BiLSTM phishing classifier with exact backpropagation.

Architecture: embedded sequence (T x d) -> BiLSTM (all steps) -> BiLSTM
(all steps) -> BiLSTM (last step) -> dense + ReLU -> dense + sigmoid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import EmptyDataset, LengthMismatch, ShapeMismatch
from . import kernels

GATES = ("input", "forget", "candidate", "output")
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class ModelShape:
    """Architecture descriptor; also stored in checkpoints."""

    seq_len: int = 200
    embed_dim: int = 100
    hidden: int = 100
    dense: int = 200
    layers: int = 3

    def layer_input_dim(self, layer: int) -> int:
        return self.embed_dim if layer == 0 else 2 * self.hidden

    def tensor_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Every parameter tensor in canonical flattening order."""
        h = self.hidden
        shapes = []
        for layer in range(self.layers):
            d_in = self.layer_input_dim(layer)
            for direction in ("fwd", "bwd"):
                for gate in GATES:
                    prefix = f"lstm{layer}.{direction}.{gate}"
                    shapes.append((f"{prefix}.W", (d_in, h)))
                    shapes.append((f"{prefix}.U", (h, h)))
                    shapes.append((f"{prefix}.b", (h,)))
        shapes.append(("dense.W", (2 * h, self.dense)))
        shapes.append(("dense.b", (self.dense,)))
        shapes.append(("out.W", (self.dense, 1)))
        shapes.append(("out.b", (1,)))
        return shapes

    @property
    def num_params(self) -> int:
        return int(sum(np.prod(s) for _, s in self.tensor_shapes()))

    def to_dict(self) -> dict:
        return asdict(self)


FULL_SHAPE = ModelShape()


@dataclass
class LstmCellParams:
    """One LSTM direction. Gate axis first: W (4, d_in, h), U (4, h, h), b (4, h)."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def d_in(self) -> int:
        return self.W.shape[1]

    @property
    def d_h(self) -> int:
        return self.U.shape[1]

    def fused(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Kernel layout: W (d_in, 4h), U (h, 4h), b (4h,)."""
        d_in, h = self.d_in, self.d_h
        W = np.ascontiguousarray(self.W.transpose(1, 0, 2).reshape(d_in, 4 * h))
        U = np.ascontiguousarray(self.U.transpose(1, 0, 2).reshape(h, 4 * h))
        return W, U, self.b.reshape(4 * h).copy()

    @classmethod
    def from_fused(cls, W, U, b) -> "LstmCellParams":
        d_in, h4 = W.shape
        h = h4 // 4
        return cls(
            W=np.ascontiguousarray(W.reshape(d_in, 4, h).transpose(1, 0, 2)),
            U=np.ascontiguousarray(U.reshape(h, 4, h).transpose(1, 0, 2)),
            b=np.ascontiguousarray(b.reshape(4, h)),
        )

    def check(self):
        if (
            self.W.ndim != 3
            or self.W.shape[0] != 4
            or self.U.shape != (4, self.d_h, self.d_h)
            or self.b.shape != (4, self.d_h)
            or self.W.shape[2] != self.d_h
        ):
            raise ShapeMismatch(
                f"inconsistent LSTM tensors W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )


@dataclass
class ModelParams:
    shape: ModelShape
    cells: list[LstmCellParams]  # layer-major, forward direction first
    dense_W: np.ndarray
    dense_b: np.ndarray
    out_W: np.ndarray
    out_b: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        out = []
        for cell in self.cells:
            for g in range(4):
                out += [cell.W[g], cell.U[g], cell.b[g]]
        out += [self.dense_W, self.dense_b, self.out_W, self.out_b]
        return out

    def copy(self) -> "ModelParams":
        return unflatten(flatten(self), self.shape)


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_in, fan_out = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(seed: int, shape: ModelShape = FULL_SHAPE) -> ModelParams:
    """Glorot-uniform weights, zero biases except forget-gate biases of 1."""
    rng = np.random.default_rng(seed)
    h = shape.hidden
    cells = []
    for layer in range(shape.layers):
        d_in = shape.layer_input_dim(layer)
        for _ in range(2):
            W = np.empty((4, d_in, h))
            U = np.empty((4, h, h))
            b = np.zeros((4, h))
            for g in range(4):
                W[g] = _glorot(rng, (d_in, h))
                U[g] = _glorot(rng, (h, h))
            b[1] = 1.0
            cells.append(LstmCellParams(W, U, b))
    return ModelParams(
        shape=shape,
        cells=cells,
        dense_W=_glorot(rng, (2 * h, shape.dense)),
        dense_b=np.zeros(shape.dense),
        out_W=_glorot(rng, (shape.dense, 1)),
        out_b=np.zeros(1),
    )


def flatten(params: ModelParams) -> np.ndarray:
    return np.concatenate([t.ravel() for t in params.tensors()])


def unflatten(vec: np.ndarray, shape: ModelShape) -> ModelParams:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.size != shape.num_params:
        raise LengthMismatch(f"expected {shape.num_params} values, got {vec.size}")
    pos = 0
    pieces = []
    for _, s in shape.tensor_shapes():
        n = int(np.prod(s))
        pieces.append(vec[pos : pos + n].reshape(s).copy())
        pos += n
    cells = []
    it = iter(pieces)
    for _ in range(2 * shape.layers):
        Ws, Us, bs = [], [], []
        for _g in range(4):
            Ws.append(next(it))
            Us.append(next(it))
            bs.append(next(it))
        cells.append(LstmCellParams(np.stack(Ws), np.stack(Us), np.stack(bs)))
    dense_W, dense_b, out_W, out_b = it
    return ModelParams(shape, cells, dense_W, dense_b, out_W, out_b)


# --- reference single-sample operations -------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_cell_step(x, h, c, p: LstmCellParams):
    """One LSTM step for a single sample; returns (h', c')."""
    x, h, c = (np.asarray(a, dtype=np.float64) for a in (x, h, c))
    if x.shape != (p.d_in,) or h.shape != (p.d_h,) or c.shape != (p.d_h,):
        raise ShapeMismatch(
            f"x{x.shape} h{h.shape} c{c.shape} vs d_in={p.d_in} d_h={p.d_h}"
        )
    pre = [x @ p.W[g] + h @ p.U[g] + p.b[g] for g in range(4)]
    i, f, g, o = _sigmoid(pre[0]), _sigmoid(pre[1]), np.tanh(pre[2]), _sigmoid(pre[3])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def bilstm_layer(seq, fwd: LstmCellParams, bwd: LstmCellParams, return_sequences: bool):
    """Bidirectional layer over one sequence (T, d_in).

    Returns (T, 2h) when return_sequences, else the forward state after the
    last position concatenated with the backward state after position 0.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1 or seq.shape[1] != fwd.d_in or bwd.d_in != fwd.d_in:
        raise ShapeMismatch(f"sequence {seq.shape} vs d_in={fwd.d_in}")
    X = np.ascontiguousarray(seq[:, None, :])
    hf = kernels.lstm_forward_states(_project(X, *fwd.fused()), fwd.fused()[1], False)[:, 0, :]
    hb = kernels.lstm_forward_states(_project(X, *bwd.fused()), bwd.fused()[1], True)[:, 0, :]
    if return_sequences:
        return np.concatenate([hf, hb], axis=1)
    return np.concatenate([hf[-1], hb[0]])


# --- batched forward / backward ---------------------------------------------


@dataclass
class ForwardCache:
    params: ModelParams
    fused: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    inputs: list[np.ndarray] = field(default_factory=list)  # per layer, (T, B, D)
    states: list[tuple] = field(default_factory=list)  # per cell, kernel outputs
    last: np.ndarray | None = None  # (B, 2h)
    hidden: np.ndarray | None = None  # post-ReLU dense activations (B, dense)
    prob: np.ndarray | None = None  # (B,)


def _as_batch(features, shape: ModelShape) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != shape.embed_dim:
        raise ShapeMismatch(f"features {np.shape(features)} vs embed_dim={shape.embed_dim}")
    if x.shape[1] < 1:
        raise ShapeMismatch("empty sequence")
    return np.ascontiguousarray(x.transpose(1, 0, 2))


def _check(params: ModelParams):
    for cell in params.cells:
        cell.check()


def _project(X: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gate pre-activations from the input alone: X (T, B, D) @ W + b."""
    T, B, D = X.shape
    return (X.reshape(T * B, D) @ W + b).reshape(T, B, W.shape[1])


def _previous_states(Hs: np.ndarray, reverse: bool) -> np.ndarray:
    """Hidden state each step received: Hs shifted one step against the scan, zeros at the start."""
    prev = np.zeros_like(Hs)
    if reverse:
        prev[:-1] = Hs[1:]
    else:
        prev[1:] = Hs[:-1]
    return prev


def _logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def forward(features, params: ModelParams, keep_cache: bool = True):
    """Phishing probability per sample.

    features: (T, d) or (B, T, d). Returns (probabilities (B,), cache); the
    cache is None when keep_cache is false.
    """
    _check(params)
    shape = params.shape
    X = _as_batch(features, shape)
    fused = [cell.fused() for cell in params.cells]
    cache = ForwardCache(params, fused) if keep_cache else None
    layer_in = X
    for layer in range(shape.layers):
        if layer_in.shape[2] != params.cells[2 * layer].d_in:
            raise ShapeMismatch(f"layer {layer} input width {layer_in.shape[2]}")
        outs = []
        for direction in range(2):
            W, U, b = fused[2 * layer + direction]
            Z = _project(layer_in, W, U, b)
            if keep_cache:
                st = kernels.lstm_forward(Z, U, direction == 1)
                cache.states.append(st)
                outs.append(st[0])
            else:
                outs.append(kernels.lstm_forward_states(Z, U, direction == 1))
        if keep_cache:
            cache.inputs.append(layer_in)
        if layer < shape.layers - 1:
            layer_in = np.ascontiguousarray(np.concatenate(outs, axis=2))
        else:
            last = np.ascontiguousarray(np.concatenate([outs[0][-1], outs[1][0]], axis=1))
    hidden = kernels.dense_forward(last, params.dense_W, params.dense_b, True)
    logit = kernels.dense_forward(hidden, params.out_W, params.out_b, False)[:, 0]
    prob = _logistic(logit)
    if keep_cache:
        cache.last, cache.hidden, cache.prob = last, hidden, prob
    return prob, cache


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def backward(cache: ForwardCache, y) -> np.ndarray:
    """Gradient of the mean clamped BCE w.r.t. every parameter, flattened."""
    params = cache.params
    shape = params.shape
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    p = cache.prob
    B = p.shape[0]
    if y.shape != (B,):
        raise ShapeMismatch(f"labels {y.shape} for batch of {B}")
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    dlogit = np.where(inside, p - y, 0.0) / B

    dhidden, g_out_W, g_out_b = kernels.dense_backward(
        np.ascontiguousarray(dlogit[:, None]), cache.hidden, params.out_W
    )
    dhidden = dhidden * (cache.hidden > 0.0)
    dlast, g_dense_W, g_dense_b = kernels.dense_backward(
        np.ascontiguousarray(dhidden), cache.last, params.dense_W
    )

    h = shape.hidden
    T = cache.inputs[0].shape[0]
    cell_grads: list = [None] * (2 * shape.layers)
    dout = None  # gradient w.r.t. the current layer's (T, B, 2h) output
    for layer in range(shape.layers - 1, -1, -1):
        if layer == shape.layers - 1:
            dHf = np.zeros((T, B, h))
            dHb = np.zeros((T, B, h))
            dHf[-1] = dlast[:, :h]
            dHb[0] = dlast[:, h:]
        else:
            dHf = np.ascontiguousarray(dout[:, :, :h])
            dHb = np.ascontiguousarray(dout[:, :, h:])
        layer_in = cache.inputs[layer]
        D = layer_in.shape[2]
        X2 = layer_in.reshape(T * B, D)
        dx_total = None
        for direction, dH in ((0, dHf), (1, dHb)):
            idx = 2 * layer + direction
            W, U, _ = cache.fused[idx]
            Hs, Cs, TCs, Gs = cache.states[idx]
            dZ = kernels.lstm_backward(dH, Cs, TCs, Gs, U, direction == 1)
            dZ2 = dZ.reshape(T * B, 4 * h)
            dU = _previous_states(Hs, direction == 1).reshape(T * B, h).T @ dZ2
            cell_grads[idx] = LstmCellParams.from_fused(X2.T @ dZ2, dU, dZ2.sum(axis=0))
            if layer > 0:
                dX = (dZ2 @ W.T).reshape(T, B, D)
                dx_total = dX if dx_total is None else dx_total + dX
        dout = dx_total

    grad = ModelParams(shape, cell_grads, g_dense_W, g_dense_b, g_out_W, g_out_b)
    return flatten(grad)


def loss_and_grad(features, labels, params: ModelParams) -> tuple[float, np.ndarray]:
    p, cache = forward(features, params)
    return bce_loss(p, labels), backward(cache, labels)


def predict_proba(features, params: ModelParams, chunk: int = 128) -> np.ndarray:
    features = np.asarray(features)
    if features.ndim == 2:
        features = features[None]
    out = [
        forward(features[i : i + chunk], params, keep_cache=False)[0]
        for i in range(0, features.shape[0], chunk)
    ]
    return np.concatenate(out) if out else np.empty(0)


def evaluate(params: ModelParams, features, labels) -> float:
    """Accuracy with the rule p >= 0.5 -> phishing."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    p = predict_proba(features, params)
    return float(np.mean((p >= 0.5).astype(int) == labels))
