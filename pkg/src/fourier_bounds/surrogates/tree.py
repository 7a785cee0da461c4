"""Regression trees: node table, CART fitting, shipped-table loading."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ..exceptions import ModelFormatError
from ..heston import FEATURE_NAMES
from . import _cart

__all__ = [
    "TreeNode",
    "DecisionTree",
    "fit_tree",
    "load_tree_table",
    "load_shipped_tree",
    "SHIPPED_TREES",
    "DecisionTreeSurrogate",
]

SHIPPED_TREES = {
    "i20": "sdt_i20_depth5.csv",
    "mu8": "sdt_mu8_depth5.csv",
    "example": "toy_example.csv",
}


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    is_leaf: bool
    feature_index: int | None = None
    split_value: float | None = None
    left_child: int | None = None
    right_child: int | None = None
    prediction: float | None = None


class DecisionTree:
    """Immutable regression tree over the six Heston features.

    Nodes are addressed by id; the root is node 0. Routing sends a sample to
    the left child when ``x[feature] <= split_value``. The structure is
    validated on construction, so prediction never meets a malformed tree.
    """

    def __init__(self, nodes, max_depth=None, min_node_size=None, n_features=len(FEATURE_NAMES)):
        self.nodes = tuple(sorted(nodes, key=lambda nd: nd.node_id))
        self.max_depth = max_depth
        self.min_node_size = min_node_size
        self.n_features = n_features
        self._validate()
        self._compile()

    def _validate(self):
        by_id = {}
        for nd in self.nodes:
            if nd.node_id in by_id:
                raise ModelFormatError(f"duplicate node id {nd.node_id}")
            by_id[nd.node_id] = nd
        if 0 not in by_id:
            raise ModelFormatError("tree has no root node 0")
        referenced = {}
        for nd in self.nodes:
            if nd.is_leaf:
                if nd.prediction is None or not math.isfinite(nd.prediction):
                    raise ModelFormatError(f"leaf {nd.node_id} has no finite prediction")
                if nd.left_child is not None or nd.right_child is not None:
                    raise ModelFormatError(f"leaf {nd.node_id} has children")
                continue
            if nd.feature_index is None or not 0 <= nd.feature_index < self.n_features:
                raise ModelFormatError(f"node {nd.node_id} has invalid feature {nd.feature_index!r}")
            if nd.split_value is None or not math.isfinite(nd.split_value):
                raise ModelFormatError(f"node {nd.node_id} has no finite split value")
            for child in (nd.left_child, nd.right_child):
                if child is None:
                    raise ModelFormatError(f"internal node {nd.node_id} is missing a child")
                if child not in by_id:
                    raise ModelFormatError(f"node {nd.node_id} references missing node {child}")
                if child == 0:
                    raise ModelFormatError(f"node {nd.node_id} references the root")
                if child in referenced:
                    raise ModelFormatError(
                        f"node {child} referenced by both {referenced[child]} and {nd.node_id}")
                referenced[child] = nd.node_id
        # reachability from the root rules out cycles and detached parts
        seen, stack = set(), [0]
        while stack:
            node_id = stack.pop()
            if node_id in seen:
                raise ModelFormatError(f"cycle through node {node_id}")
            seen.add(node_id)
            nd = by_id[node_id]
            if not nd.is_leaf:
                stack.extend((nd.left_child, nd.right_child))
        if len(seen) != len(self.nodes):
            detached = sorted(set(by_id) - seen)
            raise ModelFormatError(f"nodes not reachable from the root: {detached[:10]}")

    def _compile(self):
        pos = {nd.node_id: i for i, nd in enumerate(self.nodes)}
        n = len(self.nodes)
        self._feature = np.full(n, -1, dtype=np.int64)
        self._threshold = np.zeros(n)
        self._left = np.full(n, -1, dtype=np.int64)
        self._right = np.full(n, -1, dtype=np.int64)
        self._value = np.zeros(n)
        for i, nd in enumerate(self.nodes):
            if nd.is_leaf:
                self._value[i] = nd.prediction
            else:
                self._feature[i] = nd.feature_index
                self._threshold[i] = nd.split_value
                self._left[i] = pos[nd.left_child]
                self._right[i] = pos[nd.right_child]
        # node 0 is first after sorting, so routing starts at index 0

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_leaves(self):
        return sum(nd.is_leaf for nd in self.nodes)

    def depth(self):
        by_id = {nd.node_id: nd for nd in self.nodes}

        def walk(node_id):
            nd = by_id[node_id]
            return 0 if nd.is_leaf else 1 + max(walk(nd.left_child), walk(nd.right_child))

        return walk(0)

    def predict(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _cart.route(X, self._feature, self._threshold, self._left, self._right, self._value)

    def predict_one(self, x):
        by_id = {nd.node_id: nd for nd in self.nodes}
        nd = by_id[0]
        while not nd.is_leaf:
            nd = by_id[nd.left_child if x[nd.feature_index] <= nd.split_value else nd.right_child]
        return nd.prediction

    def path(self, x):
        """Node ids visited from the root to the leaf."""
        by_id = {nd.node_id: nd for nd in self.nodes}
        nd, out = by_id[0], [0]
        while not nd.is_leaf:
            nd = by_id[nd.left_child if x[nd.feature_index] <= nd.split_value else nd.right_child]
            out.append(nd.node_id)
        return out

    def __eq__(self, other):
        return (isinstance(other, DecisionTree) and self.nodes == other.nodes
                and self.max_depth == other.max_depth and self.min_node_size == other.min_node_size)

    def __hash__(self):
        return hash(self.nodes)

    def __repr__(self):
        return f"DecisionTree(n_nodes={self.n_nodes}, depth={self.depth()})"


def fit_tree(X, y, *, max_depth=None, min_node_size=1, features_per_split=None, seed=0,
             sample_indices=None) -> DecisionTree:
    """CART regression fit by variance reduction.

    ``sample_indices`` (possibly with repeats) selects the training rows;
    the forest passes bootstrap draws here.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    y = np.ascontiguousarray(np.asarray(y, dtype=float))
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-d and y 1-d with matching lengths")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be >= 0 or None")
    if min_node_size < 1:
        raise ValueError("min_node_size must be >= 1")
    n_features = X.shape[1]
    fps = n_features if features_per_split is None else int(features_per_split)
    if not 1 <= fps <= n_features:
        raise ValueError(f"features_per_split must lie in 1..{n_features}")
    idx = (np.arange(X.shape[0], dtype=np.int64) if sample_indices is None
           else np.ascontiguousarray(np.asarray(sample_indices, dtype=np.int64)))
    if idx.size == 0:
        raise ValueError("cannot fit a tree on an empty sample")
    feature, threshold, left, right, value, _, _ = _cart.grow_tree(
        X, y, idx, -1 if max_depth is None else int(max_depth), int(min_node_size), fps,
        np.uint64(seed))
    nodes = []
    for i in range(feature.shape[0]):
        if feature[i] < 0:
            nodes.append(TreeNode(i, True, prediction=float(value[i])))
        else:
            nodes.append(TreeNode(i, False, int(feature[i]), float(threshold[i]),
                                  int(left[i]), int(right[i])))
    return DecisionTree(nodes, max_depth=max_depth, min_node_size=min_node_size,
                        n_features=n_features)


_TABLE_COLUMNS = ("nodeID", "leaf node", "variable", "split value", "left-child", "right-child",
                  "prediction")


def _cell(value, kind, row_no, column):
    value = value.strip()
    if value.upper() == "NA" or value == "":
        return None
    try:
        return kind(value)
    except ValueError:
        raise ModelFormatError(f"row {row_no}: bad {column} value {value!r}") from None


def load_tree_table(text: str) -> DecisionTree:
    """Parse a tree table with columns nodeID, leaf node, variable, split value,
    left-child, right-child, prediction. Comma, tab, semicolon or pipe
    delimited; "NA" marks absent fields; a header row is optional.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ModelFormatError("empty tree table")
    delimiter = next((d for d in (",", "\t", ";", "|") if d in lines[0]), None)
    if delimiter is None:
        raise ModelFormatError("could not detect the column delimiter")
    rows = list(csv.reader(io.StringIO("\n".join(lines)), delimiter=delimiter))
    if rows[0] and not rows[0][0].strip().lstrip("-").isdigit():
        header = [h.strip().lower().replace(" ", "") for h in rows[0]]
        expected = [c.lower().replace(" ", "") for c in _TABLE_COLUMNS]
        if header != expected:
            raise ModelFormatError(f"unexpected header {rows[0]!r}")
        rows = rows[1:]
    feature_of = {name: i for i, name in enumerate(FEATURE_NAMES)}
    nodes = []
    for row_no, row in enumerate(rows, start=1):
        if len(row) != 7:
            raise ModelFormatError(f"row {row_no}: expected 7 columns, got {len(row)}")
        node_id = _cell(row[0], int, row_no, "nodeID")
        if node_id is None:
            raise ModelFormatError(f"row {row_no}: missing nodeID")
        leaf_flag = row[1].strip().lower()
        if leaf_flag not in ("yes", "no"):
            raise ModelFormatError(f"row {row_no}: leaf node must be Yes or No, got {row[1]!r}")
        is_leaf = leaf_flag == "yes"
        variable = _cell(row[2], str, row_no, "variable")
        if variable is not None and variable not in feature_of:
            raise ModelFormatError(f"row {row_no}: unknown variable {variable!r}")
        nodes.append(TreeNode(
            node_id=node_id,
            is_leaf=is_leaf,
            feature_index=None if variable is None else feature_of[variable],
            split_value=_cell(row[3], float, row_no, "split value"),
            left_child=_cell(row[4], int, row_no, "left-child"),
            right_child=_cell(row[5], int, row_no, "right-child"),
            # internal nodes carry no prediction even if the table lists one
            prediction=_cell(row[6], float, row_no, "prediction") if is_leaf else None,
        ))
    return DecisionTree(nodes)


def load_shipped_tree(name: str) -> DecisionTree:
    """One of the bundled tables: "i20", "mu8" (depth-5 trees) or "example"."""
    if name not in SHIPPED_TREES:
        raise KeyError(f"unknown shipped tree {name!r}; choose from {sorted(SHIPPED_TREES)}")
    text = resources.files(__package__).joinpath("data", SHIPPED_TREES[name]).read_text("utf-8")
    return load_tree_table(text)


class DecisionTreeSurrogate(RegressorMixin, BaseEstimator):
    """CART regression tree with a scikit-learn estimator interface."""

    def __init__(self, max_depth=None, min_node_size=1, features_per_split=None, random_state=0):
        self.max_depth = max_depth
        self.min_node_size = min_node_size
        self.features_per_split = features_per_split
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.tree_ = fit_tree(X, y, max_depth=self.max_depth, min_node_size=self.min_node_size,
                              features_per_split=self.features_per_split,
                              seed=int(self.random_state or 0))
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = validate_data(self, X, reset=False)
        return self.tree_.predict(X)

    @classmethod
    def from_tree(cls, tree: DecisionTree):
        """Wrap an existing tree (e.g. a shipped table)."""
        est = cls(max_depth=tree.max_depth, min_node_size=tree.min_node_size or 1)
        est.tree_ = tree
        est.n_features_in_ = tree.n_features
        return est
