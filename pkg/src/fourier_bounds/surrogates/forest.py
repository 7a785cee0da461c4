"""Random forest of CART trees: bootstrap rows, random feature subsets per node."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from . import _cart
from .tree import DecisionTree, fit_tree

__all__ = ["RandomForest", "fit_forest", "tree_stream", "RandomForestSurrogate"]


class RandomForest:
    """Ensemble whose prediction is the arithmetic mean of its trees."""

    def __init__(self, trees, features_per_split=None, seed=None, bootstrap=True):
        self.trees = tuple(trees)
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        if len({t.n_features for t in self.trees}) != 1:
            raise ValueError("trees disagree on the number of features")
        self.features_per_split = features_per_split
        self.seed = seed
        self.bootstrap = bootstrap
        self._pack()

    def _pack(self):
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
        self._roots = offsets[:-1].astype(np.int64)
        self._feature = np.concatenate([t._feature for t in self.trees])
        self._threshold = np.concatenate([t._threshold for t in self.trees])
        self._value = np.concatenate([t._value for t in self.trees])
        self._left = np.concatenate([np.where(t._left >= 0, t._left + o, -1)
                                     for t, o in zip(self.trees, offsets)])
        self._right = np.concatenate([np.where(t._right >= 0, t._right + o, -1)
                                      for t, o in zip(self.trees, offsets)])

    @property
    def num_trees(self):
        return len(self.trees)

    @property
    def n_features(self):
        return self.trees[0].n_features

    def tree_predictions(self, X):
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X):
        """Sum of the tree predictions in tree order, divided by the number of trees."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _cart.route_mean(X, self._roots, self._feature, self._threshold, self._left,
                                self._right, self._value)

    def __eq__(self, other):
        return (isinstance(other, RandomForest) and self.trees == other.trees
                and self.features_per_split == other.features_per_split
                and self.seed == other.seed and self.bootstrap == other.bootstrap)

    def __hash__(self):
        return hash(self.trees)

    def __repr__(self):
        return f"RandomForest(num_trees={self.num_trees})"


def tree_stream(seed, tree_index):
    """Independent generator for one tree, a function of (seed, tree index) only."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tree_index)]))


def fit_forest(X, y, *, num_trees=100, max_depth=None, min_node_size=5, features_per_split=2,
               seed=0, bootstrap=True) -> RandomForest:
    """Train ``num_trees`` trees, each on a bootstrap resample of size ``len(X)``.

    Every tree draws from its own stream, so trees can be trained in any
    order (or concurrently) with the same result.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if num_trees < 1:
        raise ValueError("num_trees must be >= 1")
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    trees = []
    for b in range(num_trees):
        rng = tree_stream(seed, b)
        rows = rng.integers(0, n, size=n) if bootstrap else None
        node_seed = int(rng.integers(0, 2 ** 63))
        trees.append(fit_tree(X, y, max_depth=max_depth, min_node_size=min_node_size,
                              features_per_split=features_per_split, seed=node_seed,
                              sample_indices=rows))
    return RandomForest(trees, features_per_split=features_per_split, seed=seed, bootstrap=bootstrap)


class RandomForestSurrogate(RegressorMixin, BaseEstimator):
    """Random forest regressor with a scikit-learn estimator interface."""

    def __init__(self, n_estimators=100, max_depth=None, min_node_size=5, features_per_split=2,
                 bootstrap=True, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_node_size = min_node_size
        self.features_per_split = features_per_split
        self.bootstrap = bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.forest_ = fit_forest(X, y, num_trees=self.n_estimators, max_depth=self.max_depth,
                                  min_node_size=self.min_node_size,
                                  features_per_split=self.features_per_split,
                                  seed=int(self.random_state or 0), bootstrap=self.bootstrap)
        return self

    def predict(self, X):
        check_is_fitted(self, "forest_")
        X = validate_data(self, X, reset=False)
        return self.forest_.predict(X)

    @classmethod
    def from_forest(cls, forest: RandomForest):
        first: DecisionTree = forest.trees[0]
        est = cls(n_estimators=forest.num_trees, max_depth=first.max_depth,
                  min_node_size=first.min_node_size or 1,
                  features_per_split=forest.features_per_split, bootstrap=forest.bootstrap,
                  random_state=forest.seed)
        est.forest_ = forest
        est.n_features_in_ = forest.n_features
        return est
