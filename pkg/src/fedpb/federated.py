"""Federated averaging loop plus centralized and standalone baselines.

Random streams are keyed by (experiment seed, purpose, client id, round) so
results do not depend on the order in which clients are trained.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .embedding import EmbeddingTable, EncodedSample, stack
from .errors import (
    EmptyClient,
    EmptyDataset,
    EmptyUpdateSet,
    InvalidSelection,
    LengthMismatch,
)
from .nn.model import ModelShape, bce_loss, backward, flatten, forward, init_params, predict_proba, unflatten
from .nn.optim import AdamState, adam_step, clip_by_global_norm
from .partition import ClientDataset

SELECT_STREAM = 11
SHUFFLE_STREAM = 12
VALIDATION_STREAM = 13


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    local_epochs: int = 1
    patience: int | None = 10
    max_epochs: int = 50
    val_fraction: float = 0.1
    clip_norm: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class RoundRecord:
    round: int
    accuracy: float
    mean_loss: float
    selected: tuple[int, ...] = ()


@dataclass
class LocalUpdate:
    client_id: int
    delta: np.ndarray
    n_k: int
    loss: float = float("nan")


@dataclass
class ServerState:
    global_params: np.ndarray
    seed: int
    round: int = 0
    rng: np.random.Generator | None = None
    history: list[RoundRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng([self.seed, SELECT_STREAM])


def shuffle_rng(seed: int, client_id: int, round_: int) -> np.random.Generator:
    return np.random.default_rng([seed, SHUFFLE_STREAM, client_id, round_])


class Trainer:
    """Binds a model shape, the shared embedding and hyperparameters."""

    def __init__(self, shape: ModelShape, table: EmbeddingTable, cfg: TrainConfig = TrainConfig()):
        if table.dim != shape.embed_dim:
            raise LengthMismatch(f"embedding dim {table.dim} != model embed_dim {shape.embed_dim}")
        self.shape = shape
        self.table = table
        self.cfg = cfg

    def features(self, idx: np.ndarray) -> np.ndarray:
        return self.table.vectors[idx]

    def new_adam(self) -> AdamState:
        c = self.cfg
        return AdamState.zeros(self.shape.num_params, beta1=c.beta1, beta2=c.beta2, eps=c.eps)

    def batch_step(self, vec, adam, idx, y):
        p, cache = forward(self.features(idx), unflatten(vec, self.shape))
        grad = clip_by_global_norm(backward(cache, y), self.cfg.clip_norm)
        vec, adam = adam_step(vec, grad, adam, self.cfg.lr)
        return vec, bce_loss(p, y)

    def train_epoch(self, vec, adam, idx, y, rng) -> tuple[np.ndarray, float]:
        """One shuffled pass in mini-batches; returns (params, sample-weighted mean loss)."""
        order = rng.permutation(len(y))
        total, bs = 0.0, self.cfg.batch_size
        for start in range(0, len(order), bs):
            sel = order[start : start + bs]
            vec, loss = self.batch_step(vec, adam, idx[sel], y[sel])
            total += loss * len(sel)
        return vec, total / max(len(y), 1)

    def predict(self, vec, samples_or_idx) -> np.ndarray:
        idx = stack(samples_or_idx)[0] if isinstance(samples_or_idx, list) else samples_or_idx
        return predict_proba(self.features(idx), unflatten(vec, self.shape))

    def evaluate(self, vec, samples: Sequence[EncodedSample] | tuple) -> float:
        idx, y = stack(list(samples)) if not isinstance(samples, tuple) else samples
        if len(y) == 0:
            raise EmptyDataset("cannot evaluate on an empty dataset")
        p = predict_proba(self.features(idx), unflatten(vec, self.shape))
        return float(np.mean((p >= 0.5).astype(np.int64) == y))

    def loss(self, vec, samples_or_arrays) -> float:
        idx, y = samples_or_arrays if isinstance(samples_or_arrays, tuple) else stack(list(samples_or_arrays))
        p = predict_proba(self.features(idx), unflatten(vec, self.shape))
        return bce_loss(p, y)


# --- federated protocol ------------------------------------------------------


def select_clients(K: int, K_selected: int, rng: np.random.Generator) -> list[int]:
    """Uniform sample without replacement, returned in ascending id order."""
    if not 1 <= K_selected <= K:
        raise InvalidSelection(f"K_selected={K_selected} must be in [1, K={K}]")
    return sorted(int(k) for k in rng.choice(K, size=K_selected, replace=False))


def local_train(
    trainer: Trainer,
    client: ClientDataset,
    global_params: np.ndarray,
    rng: np.random.Generator,
) -> LocalUpdate:
    """Train a copy of the global model on one client with a fresh Adam state."""
    if client.n == 0:
        raise EmptyClient(f"client {client.client_id} has no samples")
    idx, y = client.arrays
    vec = np.array(global_params, dtype=np.float64, copy=True)
    adam = trainer.new_adam()
    losses = []
    for _ in range(trainer.cfg.local_epochs):
        vec, loss = trainer.train_epoch(vec, adam, idx, y, rng)
        losses.append(loss)
    mean_loss = float(np.mean(losses)) if losses else float("nan")
    return LocalUpdate(client.client_id, vec - global_params, client.n, mean_loss)


def fedavg_aggregate(global_params: np.ndarray, updates: Sequence[LocalUpdate]) -> np.ndarray:
    """G + sum_k (n_k / n_total) * delta_k, summed in ascending client-id order."""
    if not updates:
        raise EmptyUpdateSet("no local updates to aggregate")
    for u in updates:
        if u.delta.shape != global_params.shape:
            raise LengthMismatch(
                f"client {u.client_id} delta {u.delta.shape} vs global {global_params.shape}"
            )
        if u.n_k < 1:
            raise EmptyClient(f"client {u.client_id} reported n_k={u.n_k}")
    ordered = sorted(updates, key=lambda u: u.client_id)
    total = float(sum(u.n_k for u in ordered))
    step = np.zeros_like(global_params)
    for u in ordered:
        step += (float(u.n_k) / total) * u.delta
    return global_params + step


def aggregation_weights(updates: Sequence[LocalUpdate]) -> np.ndarray:
    total = float(sum(u.n_k for u in updates))
    return np.array([float(u.n_k) / total for u in sorted(updates, key=lambda u: u.client_id)])


def run_round(
    server: ServerState,
    trainer: Trainer,
    clients: Sequence[ClientDataset],
    test: tuple[np.ndarray, np.ndarray],
    K_selected: int,
    map_fn: Callable = map,
) -> RoundRecord:
    """Select, train locally from the same G_t, aggregate, evaluate."""
    selected = select_clients(len(clients), K_selected, server.rng)
    G = server.global_params
    r = server.round

    def work(k):
        return local_train(trainer, clients[k], G, shuffle_rng(server.seed, k, r))

    updates = list(map_fn(work, selected))
    server.global_params = fedavg_aggregate(G, updates)
    acc = trainer.evaluate(server.global_params, test)
    record = RoundRecord(r + 1, acc, float(np.mean([u.loss for u in updates])), tuple(selected))
    server.history.append(record)
    server.round += 1
    return record


def run_federated(
    trainer: Trainer,
    clients: Sequence[ClientDataset],
    test: Sequence[EncodedSample],
    rounds: int,
    K_selected: int,
    seed: int,
    on_round: Callable[[ServerState, RoundRecord], None] | None = None,
) -> ServerState:
    server = ServerState(flatten(init_params(seed, trainer.shape)), seed)
    test_arrays = stack(list(test))
    for _ in range(rounds):
        rec = run_round(server, trainer, clients, test_arrays, K_selected)
        if on_round is not None:
            on_round(server, rec)
    return server


# --- centralized / standalone baselines -------------------------------------


class EarlyStopping:
    """Stop once validation loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int | None):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record an epoch's validation loss; True means stop now."""
        if val_loss < self.best:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
            return False
        self.wait += 1
        return self.patience is not None and self.wait >= self.patience


def validation_split(samples: list[EncodedSample], fraction: float, seed: int):
    """Stratified hold-out: round(fraction * n_c) per class, at least one where possible."""
    if fraction <= 0.0:
        return list(samples), []
    rng = np.random.default_rng([seed, VALIDATION_STREAM])
    train, val = [], []
    for label in (1, 0):
        pool = [s for s in samples if s.label == label]
        pool = [pool[i] for i in rng.permutation(len(pool))]
        n_val = min(max(1, round(fraction * len(pool))), len(pool) - 1) if len(pool) > 1 else 0
        val += pool[:n_val]
        train += pool[n_val:]
    order = rng.permutation(len(train))
    train = [train[i] for i in order]
    return train, val


@dataclass
class BaselineResult:
    params: np.ndarray  # best-validation-loss parameters
    history: list[RoundRecord]
    val_losses: list[float]
    best_epoch: int
    stopped_early: bool


def train_centralized(
    trainer: Trainer,
    train: list[EncodedSample],
    test: Sequence[EncodedSample],
    seed: int,
    client_id: int = 0,
    reset_optimizer_each_epoch: bool = False,
    eval_tail: int | None = None,
    on_epoch: Callable[[int, np.ndarray], None] | None = None,
) -> BaselineResult:
    """Epoch loop with early stopping on a held-out validation split.

    Test accuracy is recorded after every epoch, or only for the final
    ``eval_tail`` epochs (others are NaN) when that is set. With
    ``reset_optimizer_each_epoch`` and no validation split the run
    reproduces a one-client, one-epoch-per-round federated run.
    """
    if not train:
        raise EmptyClient("no training samples")
    cfg = trainer.cfg
    fit, val = validation_split(train, cfg.val_fraction, seed)
    idx, y = stack(fit)
    val_arrays = stack(val) if val else (idx, y)
    test_arrays = stack(list(test))
    vec = flatten(init_params(seed, trainer.shape))
    adam = trainer.new_adam()
    stopper = EarlyStopping(cfg.patience)
    best = vec.copy()
    history, val_losses = [], []
    tail: deque = deque(maxlen=eval_tail or 1)
    stopped = False
    for epoch in range(cfg.max_epochs):
        if reset_optimizer_each_epoch:
            adam = trainer.new_adam()
        vec, loss = trainer.train_epoch(vec, adam, idx, y, shuffle_rng(seed, client_id, epoch))
        if on_epoch is not None:
            on_epoch(epoch, vec)
        if eval_tail is None:
            acc = trainer.evaluate(vec, test_arrays)
        else:
            acc = float("nan")
            tail.append((epoch, vec.copy()))
        history.append(RoundRecord(epoch + 1, acc, loss))
        vl = trainer.loss(vec, val_arrays)
        val_losses.append(vl)
        improved = vl < stopper.best
        if stopper.update(epoch + 1, vl):
            stopped = True
            break
        if improved:
            best = vec.copy()
    if eval_tail is not None:
        for epoch, snapshot in tail:
            history[epoch].accuracy = trainer.evaluate(snapshot, test_arrays)
    return BaselineResult(best, history, val_losses, stopper.best_epoch, stopped)


def train_standalone(
    trainer: Trainer,
    client: ClientDataset,
    test: Sequence[EncodedSample],
    seed: int,
    eval_tail: int | None = None,
) -> BaselineResult:
    """Centralized training restricted to one client's data."""
    if client.n == 0:
        raise EmptyClient(f"client {client.client_id} has no samples")
    return train_centralized(
        trainer, client.samples, test, seed, client_id=client.client_id, eval_tail=eval_tail
    )
