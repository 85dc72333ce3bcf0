"""Desk-scale realization of cell genotypes as trainable computation graphs.

Each edge op acts on a d-vector: conv-family ops are learned d x d linear
maps followed by ReLU, skip is the identity, none is the zero map, and
pool ops multiply by a fixed circulant 3-tap averaging matrix. A node's
value is the sum of its incoming edge outputs; the cell output feeds a
linear classification head. This keeps exactly the structural semantics
weight inheritance needs (per-edge parameter identity) without any of the
image-pipeline cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .evaluator import EvalKind, EvalResult
from .genotype import Genotype, InDegreeRule
from .mutation import MutationRecord, apply_record

__all__ = [
    "DivergenceError",
    "TrainMode",
    "TrainConfig",
    "CellModel",
    "BlobsDataset",
    "realize",
    "forward",
    "loss_and_grads",
    "train",
    "accuracy",
    "inherit_weights",
    "TrainerEvaluator",
]


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class TrainMode(str, Enum):
    SCRATCH = "scratch"
    INHERIT = "inherit"


@dataclass(frozen=True)
class TrainConfig:
    mode: TrainMode
    epochs: int
    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 128

    @classmethod
    def scratch(cls, epochs: int = 40, lr: float = 0.025, **kw) -> "TrainConfig":
        """Full training; the learning rate follows a cosine anneal to zero."""
        return cls(TrainMode.SCRATCH, epochs=epochs, lr=lr, **kw)

    @classmethod
    def inherit(cls, epochs: int = 20, lr: float = 0.01, **kw) -> "TrainConfig":
        """Reduced training for children that inherit weights; constant lr."""
        return cls(TrainMode.INHERIT, epochs=epochs, lr=lr, **kw)


def _op_behavior(name: str) -> str:
    if name == "none":
        return "zero"
    if name == "skip_connect":
        return "identity"
    if "pool" in name:
        return "smooth"
    return "learned"  # conv family


_POOL_CACHE: dict[int, np.ndarray] = {}


def _pool_matrix(d: int) -> np.ndarray:
    """Circulant 3-tap averaging matrix (parameter-free smoothing)."""
    if d not in _POOL_CACHE:
        m = np.zeros((d, d))
        for i in range(d):
            for j in (i - 1, i, i + 1):
                m[i, j % d] = 1.0 / 3.0
        _POOL_CACHE[d] = m
    return _POOL_CACHE[d]


def edge_param_keys(g: Genotype) -> list[tuple[int, tuple | None]]:
    """Per canonical edge: its index and parameter key (None for op without weights).

    Keys are (src, dst, op, occurrence) so parallel identical edges stay
    distinguishable.
    """
    counts: dict[tuple[int, int, int], int] = {}
    out = []
    for idx, e in enumerate(g.edges):
        if _op_behavior(g.space.ops[e.op]) == "learned":
            base = (e.src, e.dst, e.op)
            k = counts.get(base, 0)
            counts[base] = k + 1
            out.append((idx, base + (k,)))
        else:
            out.append((idx, None))
    return out


def _kaiming(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


class CellModel:
    """Parameter tensors for one genotype: per-edge weight matrices plus a head."""

    def __init__(self, genotype: Genotype, width: int, n_classes: int = 3):
        self.genotype = genotype
        self.width = width
        self.n_classes = n_classes
        self.params: dict[tuple, np.ndarray] = {}
        self.head_w = np.zeros((n_classes, width))
        self.head_b = np.zeros(n_classes)

    def named_params(self) -> list[tuple[object, np.ndarray]]:
        items: list[tuple[object, np.ndarray]] = [(k, v) for k, v in self.params.items()]
        items.append(("head_w", self.head_w))
        items.append(("head_b", self.head_b))
        return items


def realize(
    g: Genotype, width: int, rng: np.random.Generator, n_classes: int = 3
) -> CellModel:
    """Fresh model for a genotype; weights drawn Normal(0, sqrt(2/width))."""
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    model = CellModel(g, width, n_classes)
    for _, key in edge_param_keys(g):
        if key is not None:
            model.params[key] = _kaiming(rng, (width, width), width)
    model.head_w = _kaiming(rng, (n_classes, width), width)
    model.head_b = np.zeros(n_classes)
    return model


def forward(model: CellModel, X: np.ndarray):
    """Logits for a batch plus the cache needed for the backward pass."""
    g = model.genotype
    space = g.space
    node_values: dict[int, np.ndarray] = {
        node: X for node in range(space.num_inputs)
    }
    edge_out: dict[int, np.ndarray] = {}
    edge_pre: dict[int, np.ndarray] = {}
    keys = edge_param_keys(g)
    pool = _pool_matrix(model.width)

    for idx, e in enumerate(g.edges):
        x = node_values[e.src]
        behavior = _op_behavior(space.ops[e.op])
        if behavior == "learned":
            pre = x @ model.params[keys[idx][1]].T
            edge_pre[idx] = pre
            out = np.maximum(pre, 0.0)
        elif behavior == "identity":
            out = x
        elif behavior == "smooth":
            out = x @ pool.T
        else:
            out = np.zeros_like(x)
        edge_out[idx] = out
        if e.dst in node_values:
            node_values[e.dst] = node_values[e.dst] + out
        else:
            node_values[e.dst] = out

    if space.in_degree_rule is InDegreeRule.COMPLETE:
        cell_out = node_values[space.output_node]
    else:
        cell_out = sum(node_values[n] for n in space.intermediate_nodes)
    logits = cell_out @ model.head_w.T + model.head_b
    cache = (node_values, edge_out, edge_pre, cell_out)
    return logits, cache


def loss_and_grads(
    model: CellModel, X: np.ndarray, y: np.ndarray, weight_decay: float = 0.0
):
    """Mean cross-entropy plus L2 penalty, with gradients for every parameter.

    Gradients flow by reverse traversal of the cell DAG (nodes in
    decreasing index order, so every consumer is processed before its
    producers).
    """
    g = model.genotype
    space = g.space
    logits, (node_values, edge_out, edge_pre, cell_out) = forward(model, X)

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    n = X.shape[0]
    loss = -float(log_probs[np.arange(n), y].mean())

    grads: dict[object, np.ndarray] = {}
    d_logits = np.exp(log_probs)
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n

    grads["head_w"] = d_logits.T @ cell_out
    grads["head_b"] = d_logits.sum(axis=0)
    d_cell = d_logits @ model.head_w

    node_grads: dict[int, np.ndarray] = {}
    if space.in_degree_rule is InDegreeRule.COMPLETE:
        node_grads[space.output_node] = d_cell
    else:
        for node in space.intermediate_nodes:
            node_grads[node] = d_cell.copy()

    keys = edge_param_keys(g)
    pool = _pool_matrix(model.width)
    edge_order = sorted(range(len(g.edges)), key=lambda i: g.edges[i].dst, reverse=True)
    for idx in edge_order:
        e = g.edges[idx]
        up = node_grads.get(e.dst)
        if up is None:
            continue  # dangling node: nothing consumed its value
        behavior = _op_behavior(space.ops[e.op])
        if behavior == "learned":
            key = keys[idx][1]
            delta = up * (edge_pre[idx] > 0.0)
            contrib = delta.T @ node_values[e.src]
            grads[key] = grads.get(key, 0.0) + contrib
            down = delta @ model.params[key]
        elif behavior == "identity":
            down = up
        elif behavior == "smooth":
            down = up @ pool
        else:
            continue
        if e.src in node_grads:
            node_grads[e.src] = node_grads[e.src] + down
        else:
            node_grads[e.src] = down

    if weight_decay:
        for name, value in model.named_params():
            loss += 0.5 * weight_decay * float((value**2).sum())
            grads[name] = grads.get(name, 0.0) + weight_decay * value
    for name, value in model.named_params():
        if name not in grads:
            grads[name] = np.zeros_like(value)
    return loss, grads


@dataclass
class BlobsDataset:
    """Three Gaussian blobs pushed through a fixed random nonlinearity."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray | None = None
    y_test: np.ndarray | None = None

    @classmethod
    def make(
        cls,
        width: int = 16,
        n_train: int = 2000,
        n_val: int = 500,
        n_test: int = 500,
        n_classes: int = 3,
        seed: int = 0,
    ) -> "BlobsDataset":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(0xB10B5, seed)))
        centers = 2.0 * rng.normal(0.0, 1.0, size=(n_classes, width))
        total = n_train + n_val + n_test
        y = rng.integers(0, n_classes, size=total)
        z = centers[y] + rng.normal(0.0, 0.7, size=(total, width))
        mix = rng.normal(0.0, 1.0 / math.sqrt(width), size=(width, width))
        shift = rng.normal(0.0, 0.2, size=width)
        X = np.tanh(z @ mix.T + shift)
        return cls(
            X_train=X[:n_train],
            y_train=y[:n_train],
            X_val=X[n_train : n_train + n_val],
            y_val=y[n_train : n_train + n_val],
            X_test=X[n_train + n_val :] if n_test else None,
            y_test=y[n_train + n_val :] if n_test else None,
        )


def accuracy(model: CellModel, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(model, X)
    return float((logits.argmax(axis=1) == y).mean())


def train(
    model: CellModel,
    cfg: TrainConfig,
    data: BlobsDataset,
    rng: np.random.Generator,
) -> EvalResult:
    """Momentum-SGD training; returns final validation (and test) accuracy."""
    n = data.X_train.shape[0]
    if n == 0 or data.X_val.shape[0] == 0:
        raise ValueError("empty dataset")
    velocity = {name: np.zeros_like(value) for name, value in model.named_params()}
    for epoch in range(cfg.epochs):
        if cfg.mode is TrainMode.SCRATCH:
            lr = 0.5 * cfg.lr * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
        else:
            lr = cfg.lr
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(
                model, data.X_train[idx], data.y_train[idx], cfg.weight_decay
            )
            if not math.isfinite(loss):
                raise DivergenceError(f"divergence: non-finite loss at epoch {epoch}")
            for name, value in model.named_params():
                v = velocity[name]
                v *= cfg.momentum
                v -= lr * grads[name]
                value += v
    val = accuracy(model, data.X_val, data.y_val)
    test = None
    if data.X_test is not None and len(data.X_test):
        test = accuracy(model, data.X_test, data.y_test)
    return EvalResult(val_acc=val, test_acc=test, cost=float(cfg.epochs))


def inherit_weights(
    parent_model: CellModel,
    parent: Genotype,
    child: Genotype,
    record: MutationRecord,
    rng: np.random.Generator,
) -> CellModel:
    """Child model copying the parent's tensors for every unchanged edge.

    An edge inherits when its (src, dst, op) identity exists in the parent;
    the mutated edge (new op, or rewired endpoint) gets a fresh
    Normal(0, sqrt(2/width)) tensor when its op is parameterized. The head
    is copied.
    """
    if apply_record(parent, record).key != child.key:
        raise ValueError("record does not map parent to child")
    if parent_model.genotype.key != parent.key:
        raise ValueError("parent model was built for a different genotype")

    pool: dict[tuple, list[np.ndarray]] = {}
    for (src, dst, op, _), tensor in parent_model.params.items():
        pool.setdefault((src, dst, op), []).append(tensor)

    model = CellModel(child, parent_model.width, parent_model.n_classes)
    for _, key in edge_param_keys(child):
        if key is None:
            continue
        donors = pool.get(key[:3])
        if donors:
            model.params[key] = donors.pop(0).copy()
        else:
            model.params[key] = _kaiming(rng, (model.width, model.width), model.width)
    model.head_w = parent_model.head_w.copy()
    model.head_b = parent_model.head_b.copy()
    return model


class TrainerEvaluator:
    """Fitness via actual training, inheriting weights along parent-child edges.

    Trained models are retained per genotype so later cycles can inherit
    from any population member.
    """

    init_kind = EvalKind.INIT_TRAIN
    child_kind = EvalKind.INHERIT_TRAIN

    def __init__(
        self,
        data: BlobsDataset,
        width: int = 16,
        n_classes: int = 3,
        scratch: TrainConfig | None = None,
        inherit: TrainConfig | None = None,
    ):
        self.data = data
        self.width = width
        self.n_classes = n_classes
        self.scratch = scratch or TrainConfig.scratch()
        self.inherit = inherit or TrainConfig.inherit(
            epochs=max(1, (scratch or TrainConfig.scratch()).epochs // 2)
        )
        self._models: dict[str, CellModel] = {}

    def evaluate(self, genotype: Genotype, rng: np.random.Generator) -> EvalResult:
        model = realize(genotype, self.width, rng, self.n_classes)
        result = train(model, self.scratch, self.data, rng)
        self._models[genotype.key] = model
        return result

    def evaluate_child(
        self,
        child: Genotype,
        record: MutationRecord,
        parent: Genotype,
        rng: np.random.Generator,
    ) -> EvalResult:
        parent_model = self._models.get(parent.key)
        if parent_model is None:
            raise LookupError(f"no trained model retained for parent {parent.key}")
        model = inherit_weights(parent_model, parent, child, record, rng)
        result = train(model, self.inherit, self.data, rng)
        self._models[child.key] = model
        return result
