"""Small differentiable classifiers over flat weight vectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, Partition

MODEL_KINDS = ("logistic", "mlp")


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _ce_and_delta(logits, y):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    lp = _log_softmax(logits)
    n = y.size
    loss = -lp[np.arange(n), y].mean()
    delta = np.exp(lp)
    delta[np.arange(n), y] -= 1.0
    return float(loss), delta / n


@dataclass(frozen=True)
class LogisticModel:
    """Multinomial logistic regression; weights are a (C, d+1) matrix, bias last."""

    dim: int
    num_classes: int
    kind: str = "logistic"

    @property
    def num_params(self) -> int:
        return self.num_classes * (self.dim + 1)

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.num_params)

    def _unpack(self, w):
        W = np.asarray(w, dtype=float).reshape(self.num_classes, self.dim + 1)
        return W[:, :-1], W[:, -1]

    def logits(self, w, x):
        W, b = self._unpack(w)
        return x @ W.T + b

    def loss_grad(self, w, x, y):
        W, b = self._unpack(w)
        loss, delta = _ce_and_delta(x @ W.T + b, y)
        g = np.concatenate([delta.T @ x, delta.sum(axis=0)[:, None]], axis=1)
        return loss, g.ravel()


@dataclass(frozen=True)
class MLPModel:
    """One tanh hidden layer."""

    dim: int
    num_classes: int
    hidden: int = 16
    kind: str = "mlp"

    @property
    def num_params(self) -> int:
        return self.hidden * (self.dim + 1) + self.num_classes * (self.hidden + 1)

    def init(self, rng: np.random.Generator) -> np.ndarray:
        w1 = rng.normal(scale=1.0 / np.sqrt(self.dim), size=(self.hidden, self.dim + 1))
        w1[:, -1] = 0.0
        w2 = np.zeros((self.num_classes, self.hidden + 1))
        return np.concatenate([w1.ravel(), w2.ravel()])

    def _unpack(self, w):
        w = np.asarray(w, dtype=float)
        n1 = self.hidden * (self.dim + 1)
        W1 = w[:n1].reshape(self.hidden, self.dim + 1)
        W2 = w[n1:].reshape(self.num_classes, self.hidden + 1)
        return W1, W2

    def logits(self, w, x):
        W1, W2 = self._unpack(w)
        h = np.tanh(x @ W1[:, :-1].T + W1[:, -1])
        return h @ W2[:, :-1].T + W2[:, -1]

    def loss_grad(self, w, x, y):
        W1, W2 = self._unpack(w)
        h = np.tanh(x @ W1[:, :-1].T + W1[:, -1])
        loss, delta = _ce_and_delta(h @ W2[:, :-1].T + W2[:, -1], y)
        g2 = np.concatenate([delta.T @ h, delta.sum(axis=0)[:, None]], axis=1)
        dh = (delta @ W2[:, :-1]) * (1.0 - h * h)
        g1 = np.concatenate([dh.T @ x, dh.sum(axis=0)[:, None]], axis=1)
        return loss, np.concatenate([g1.ravel(), g2.ravel()])


def make_model(kind: str, dim: int, num_classes: int, hidden: int = 16):
    if kind == "logistic":
        return LogisticModel(dim, num_classes)
    if kind == "mlp":
        return MLPModel(dim, num_classes, hidden)
    raise ValueError(f"unknown model kind {kind!r}; valid: {', '.join(MODEL_KINDS)}")


def local_loss(model, w, shard: Dataset) -> float:
    if len(shard) == 0:
        raise ValueError("empty shard")
    return model.loss_grad(w, shard.x, shard.y)[0]


def local_gradient(model, w, shard: Dataset) -> np.ndarray:
    """Full-batch gradient of the shard's mean loss."""
    if len(shard) == 0:
        raise ValueError("empty shard")
    return model.loss_grad(w, shard.x, shard.y)[1]


def shards_of(data: Dataset, partition: Partition) -> list:
    return [data.subset(s) for s in partition.shards]


def global_loss(model, w, shards: Sequence[Dataset]) -> float:
    """Unweighted mean of the local losses (shards are equal-sized)."""
    return float(np.mean([local_loss(model, w, s) for s in shards]))


def accuracy(model, w, data: Dataset) -> float:
    return float(np.mean(np.argmax(model.logits(w, data.x), axis=1) == data.y))
