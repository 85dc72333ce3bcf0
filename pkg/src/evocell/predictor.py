"""Surrogate accuracy predictors over featurized genotypes.

``GenotypeFeaturizer`` turns genotypes into fixed-length rows,
``ForestRegressor`` is the bootstrap-aggregated CART ensemble used during
search, and ``LinearRegressor`` is the damped least-squares baseline kept
for predictor evaluation reports. All three follow the scikit-learn
estimator protocol (``fit``/``transform``/``predict``, ``get_params``) so
they compose with the usual model-selection tooling.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _tree
from .genotype import Genotype, InDegreeRule, SearchSpace

__all__ = ["GenotypeFeaturizer", "ForestRegressor", "LinearRegressor"]


class GenotypeFeaturizer(TransformerMixin, BaseEstimator):
    """Fixed-length encoding of genotypes from one search space.

    ``encoding="onehot"`` (default) produces one hot bit per edge slot:
    complete-DAG spaces one-hot the op at each of the fixed edge slots
    (nb201: 6 slots x 5 ops = 30 features); fixed-in-degree spaces one-hot
    the (predecessor, op) pair at each of the node's two slots (darts:
    196 features). ``encoding="ordinal"`` keeps raw integer indices and
    exists for ablation only.
    """

    def __init__(self, space: SearchSpace, encoding: str = "onehot"):
        self.space = space
        self.encoding = encoding

    def fit(self, X=None, y=None):
        return self

    @property
    def feature_length(self) -> int:
        if self.encoding == "ordinal":
            if self.space.in_degree_rule is InDegreeRule.COMPLETE:
                return self.space.num_edges
            return 2 * self.space.num_edges
        k = len(self.space.edge_ops)
        if self.space.in_degree_rule is InDegreeRule.COMPLETE:
            return self.space.num_edges * len(self.space.ops)
        return sum(2 * node * k for node in self.space.intermediate_nodes)

    def transform(self, genotypes) -> np.ndarray:
        """Rows for a sequence of genotypes (a single genotype is accepted too)."""
        if isinstance(genotypes, Genotype):
            genotypes = [genotypes]
        rows = np.zeros((len(genotypes), self.feature_length), dtype=np.float64)
        for r, g in enumerate(genotypes):
            if g.space != self.space:
                raise ValueError(
                    f"space mismatch: featurizer is bound to {self.space.kind.value}, "
                    f"genotype belongs to {g.space.kind.value}"
                )
            self._fill_row(rows[r], g)
        return rows

    def _fill_row(self, row: np.ndarray, g: Genotype) -> None:
        space = self.space
        if self.encoding == "ordinal":
            if space.in_degree_rule is InDegreeRule.COMPLETE:
                for slot, e in enumerate(g.edges):
                    row[slot] = e.op
            else:
                for slot, e in enumerate(g.edges):
                    row[2 * slot] = e.src
                    row[2 * slot + 1] = e.op
            return
        if space.in_degree_rule is InDegreeRule.COMPLETE:
            n_ops = len(space.ops)
            for slot, e in enumerate(g.edges):
                row[slot * n_ops + e.op] = 1.0
        else:
            k = len(space.edge_ops)
            op_pos = {op: i for i, op in enumerate(space.edge_ops)}
            offsets = {}
            acc = 0
            for node in space.intermediate_nodes:
                offsets[node] = acc
                acc += 2 * node * k
            taken = dict.fromkeys(space.intermediate_nodes, 0)
            for e in g.edges:  # canonical order groups edges by destination
                slot = taken[e.dst]
                if slot >= 2:
                    raise ValueError(f"node {e.dst} has more than 2 incoming edges")
                taken[e.dst] = slot + 1
                width = e.dst * k  # one cell per (predecessor, op) pair
                row[offsets[e.dst] + slot * width + e.src * k + op_pos[e.op]] = 1.0


class ForestRegressor(RegressorMixin, BaseEstimator):
    """Bootstrap-aggregated CART regression forest for accuracy fractions.

    Predictions are means of per-tree leaf means, so they always stay
    within the training-target range. Every random decision derives from
    ``random_state`` (each tree spawns its own stream), making fitted
    structure and predictions reproducible bit for bit.
    """

    def __init__(
        self,
        n_trees: int = 100,
        min_samples_leaf: int = 1,
        max_features: int | None = None,
        bootstrap: bool = True,
        random_state: int | None = None,
    ):
        self.n_trees = n_trees
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 training rows, got {X.shape[0]}")
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise ValueError("targets must be accuracy fractions in [0, 1]")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        n, p = X.shape
        max_features = self.max_features or math.ceil(p / 3)
        max_features = min(max_features, p)

        self.n_features_in_ = p
        self.y_min_ = float(y.min())
        self.y_max_ = float(y.max())
        self.trees_ = []
        root = np.random.SeedSequence(self.random_state)
        for child in root.spawn(self.n_trees):
            rng = np.random.default_rng(child)
            if self.bootstrap:
                order = rng.integers(0, n, size=n)
            else:
                order = np.arange(n, dtype=np.int64)
            tree_seed = int(child.generate_state(1, dtype=np.uint32)[0])
            self.trees_.append(
                _tree.build_tree(
                    X, y, order.astype(np.int64), self.min_samples_leaf, max_features, tree_seed
                )
            )
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, forest was fit on {self.n_features_in_}"
            )
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for feature, left, right, value in self.trees_:
            _tree.predict_tree(X, feature, left, right, value, acc)
        return acc / len(self.trees_)


class LinearRegressor(RegressorMixin, BaseEstimator):
    """Least-squares baseline with a small ridge damping for rank deficiency."""

    def __init__(self, damping: float = 1e-8):
        self.damping = damping

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 training rows, got {X.shape[0]}")
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        Xc = X - x_mean
        gram = Xc.T @ Xc + self.damping * np.eye(X.shape[1])
        self.coef_ = np.linalg.solve(gram, Xc.T @ (y - y_mean))
        self.intercept_ = y_mean - float(x_mean @ self.coef_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_
