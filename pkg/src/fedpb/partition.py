"""Balanced train/test split and client partitioning under label skew.

Heterogeneity level alpha = |2 P_k - 1| where P_k is a client's phishing
fraction; every client shares the same alpha and half of them (by a seeded
draw) are phishing-majority.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .embedding import EncodedSample, stack
from .errors import ConfigInvalid, EmptyClass, InsufficientClassSamples, TooManyClients

TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class SplitSpec:
    K: int
    alpha: float = 0.0
    seed: int = 0
    train_fraction: float = TRAIN_FRACTION

    def __post_init__(self):
        if self.K < 1:
            raise ConfigInvalid("K", f"must be >= 1, got {self.K}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigInvalid("alpha", f"must lie in [0, 1], got {self.alpha}")


@dataclass
class ClientDataset:
    client_id: int
    samples: list[EncodedSample]

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def P_k(self) -> float:
        """Actual phishing fraction of this client's data."""
        if not self.samples:
            return 0.0
        return sum(s.label for s in self.samples) / len(self.samples)

    @property
    def alpha(self) -> float:
        return abs(2.0 * self.P_k - 1.0)

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return stack(self.samples)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _permute(items: list, rng: np.random.Generator) -> list:
    return [items[i] for i in rng.permutation(len(items))]


def balance_and_split(
    phishing: list[EncodedSample],
    legitimate: list[EncodedSample],
    seed: int,
    train_fraction: float = TRAIN_FRACTION,
) -> tuple[list[EncodedSample], list[EncodedSample]]:
    """Subsample the larger class, then split each class floor(n * fraction) / rest.

    With 594 + 594 samples this gives 475 + 475 = 950 train and 238 test.
    """
    if not phishing or not legitimate:
        raise EmptyClass("both classes need at least one sample")
    rng = _rng(seed, 1)
    n = min(len(phishing), len(legitimate))
    classes = []
    for pool in (phishing, legitimate):
        keep = np.sort(rng.choice(len(pool), size=n, replace=False))
        classes.append(_permute([pool[i] for i in keep], rng))
    n_train = math.floor(n * train_fraction)
    train = _permute(classes[0][:n_train] + classes[1][:n_train], rng)
    test = _permute(classes[0][n_train:] + classes[1][n_train:], rng)
    return train, test


def client_sizes(total: int, K: int) -> list[int]:
    """Equal shares; the remainder goes one each to the first clients."""
    base, extra = divmod(total, K)
    return [base + (1 if k < extra else 0) for k in range(K)]


def _split_by_label(train: list[EncodedSample]):
    phish = [s for s in train if s.label == 1]
    legit = [s for s in train if s.label == 0]
    return phish, legit


def partition_iid(train: list[EncodedSample], K: int, seed: int) -> list[ClientDataset]:
    phish, legit = _split_by_label(train)
    if K < 1:
        raise ConfigInvalid("K", f"must be >= 1, got {K}")
    if K > min(len(phish), len(legit)):
        raise TooManyClients(f"K={K} exceeds the smaller class size {min(len(phish), len(legit))}")
    rng = _rng(seed, 2)
    phish, legit = _permute(phish, rng), _permute(legit, rng)
    sizes = client_sizes(len(train), K)
    n_phish = client_sizes(len(phish), K)
    clients = []
    pi = li = 0
    for k in range(K):
        p, l = n_phish[k], sizes[k] - n_phish[k]
        samples = phish[pi : pi + p] + legit[li : li + l]
        pi, li = pi + p, li + l
        clients.append(ClientDataset(k, _permute(samples, rng)))
    return clients


def alpha_to_probability(alpha: float, majority_class: int) -> float:
    """Phishing fraction P_k for a client whose majority class is given."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigInvalid("alpha", f"must lie in [0, 1], got {alpha}")
    return (1.0 + alpha) / 2.0 if majority_class == 1 else (1.0 - alpha) / 2.0


def majority_count(alpha: float, size: int) -> int:
    """round(size * (1 + alpha) / 2), ties toward the majority class."""
    x = round(size * (1.0 + alpha) / 2.0, 9)
    return min(size, int(math.floor(x + 0.5)))


def assign_majorities(K: int, sizes: list[int], rng: np.random.Generator) -> list[int]:
    """Majority class per client; half the clients each way.

    Clients holding the remainder sample and the rest are alternated
    separately so that both majority groups get the same size mix.
    """
    big = [k for k in range(K) if sizes[k] > min(sizes)]
    small = [k for k in range(K) if sizes[k] == min(sizes)]
    order = list(rng.permutation(big)) + list(rng.permutation(small))
    first = int(rng.integers(0, 2))
    majority = [0] * K
    for pos, k in enumerate(order):
        majority[int(k)] = first if pos % 2 == 0 else 1 - first
    return majority


def partition_heterogeneous(
    train: list[EncodedSample], K: int, alpha: float, seed: int
) -> list[ClientDataset]:
    spec = SplitSpec(K, alpha, seed)
    phish, legit = _split_by_label(train)
    rng = _rng(spec.seed, 3)
    phish, legit = _permute(phish, rng), _permute(legit, rng)
    sizes = client_sizes(len(train), K)
    majority = assign_majorities(K, sizes, rng)
    n_phish = []
    for k in range(K):
        top = majority_count(alpha, sizes[k])
        n_phish.append(top if majority[k] == 1 else sizes[k] - top)
    need_p, need_l = sum(n_phish), len(train) - sum(n_phish)
    if need_p > len(phish) or need_l > len(legit):
        raise InsufficientClassSamples(
            f"alpha={alpha}, K={K} needs {need_p} phishing / {need_l} legitimate, "
            f"have {len(phish)} / {len(legit)}"
        )
    clients = []
    pi = li = 0
    for k in range(K):
        p, l = n_phish[k], sizes[k] - n_phish[k]
        samples = phish[pi : pi + p] + legit[li : li + l]
        pi, li = pi + p, li + l
        clients.append(ClientDataset(k, _permute(samples, rng)))
    return clients


def partition(train: list[EncodedSample], spec: SplitSpec) -> list[ClientDataset]:
    if spec.alpha == 0.0:
        return partition_iid(train, spec.K, spec.seed)
    return partition_heterogeneous(train, spec.K, spec.alpha, spec.seed)


def manifest(clients: list[ClientDataset]) -> dict:
    return {
        "clients": [
            {
                "client_id": c.client_id,
                "P_k": c.P_k,
                "n": c.n,
                "source_ids": [s.source_id for s in c.samples],
            }
            for c in clients
        ]
    }


def write_manifest(clients: list[ClientDataset], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest(clients), fh, indent=1)
