import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fourier_bounds.exceptions import ModelFormatError
from fourier_bounds.surrogates import (
    DecisionTree,
    DecisionTreeSurrogate,
    TreeNode,
    fit_tree,
    load_shipped_tree,
    load_tree_table,
)

HEADER = "nodeID,leaf node,variable,split value,left-child,right-child,prediction"
SMALL = HEADER + """
0,No,T,0.5,1,2,NA
1,Yes,NA,NA,NA,NA,1.5
2,Yes,NA,NA,NA,NA,-2.0
"""


def node_rows(tree, X):
    """Training rows reaching each node, by routing."""
    by_id = {nd.node_id: nd for nd in tree.nodes}
    rows = {0: np.arange(len(X))}
    # nodes are stored in breadth-first order, so parents come first
    for nd in tree.nodes:
        if nd.is_leaf:
            continue
        r = rows[nd.node_id]
        go_left = X[r, nd.feature_index] <= nd.split_value
        rows[nd.left_child], rows[nd.right_child] = r[go_left], r[~go_left]
    return rows, by_id


def sse(v):
    return float(((v - v.mean()) ** 2).sum()) if v.size else 0.0


def test_shipped_i20_table():
    tree = load_shipped_tree("i20")
    assert tree.n_nodes == 61
    root = tree.nodes[0]
    assert (root.feature_index, root.split_value) == (5, 0.186064)
    assert tree.depth() == 5
    assert tree.predict_one((1.0, 0.1, 1.0, 0.0, 0.1, 0.1)) == 36.203604
    assert tree.path((1.0, 0.1, 1.0, 0.0, 0.1, 0.1)) == [0, 1, 3, 8, 17, 35]


def test_shipped_mu8_table():
    tree = load_shipped_tree("mu8")
    assert tree.n_nodes == 63
    assert {nd.node_id: nd for nd in tree.nodes}[62].prediction == 5.944725
    x = (2.0, 0.5, 1.0, 0.3, 0.7, 0.05)
    assert tree.predict_one(x) == 0.3668
    assert tree.path(x) == [0, 1, 3, 7, 15, 31]


def test_example_table():
    tree = load_shipped_tree("example")
    assert tree.predict_one((1.0, 1.0, 1.0, 0.0, 0.9, 0.5)) == 2.344154
    assert tree.predict_one((1.0, 1.0, 1.0, 0.0, 0.5, 0.5)) == 14.185356
    assert tree.predict_one((1.0, 1.0, 1.0, 0.0, 0.9, 0.05)) == 46.988648


def test_split_value_goes_left():
    tree = load_tree_table(SMALL)
    assert tree.predict_one((0, 0, 0, 0, 0, 0.5)) == 1.5
    assert tree.predict(np.array([[0, 0, 0, 0, 0, 0.5], [0, 0, 0, 0, 0, 0.5000001]])).tolist() == [1.5, -2.0]


def test_unknown_shipped_name():
    with pytest.raises(KeyError):
        load_shipped_tree("nope")


@pytest.mark.parametrize("delimiter", ["\t", ";", "|"])
def test_table_delimiters_and_optional_header(delimiter):
    body = SMALL.replace(",", delimiter)
    assert load_tree_table(body) == load_tree_table(SMALL)
    assert load_tree_table("\n".join(body.splitlines()[1:])) == load_tree_table(SMALL)


@pytest.mark.parametrize("body, fragment", [
    ("0,No,T,0.5,1,2,NA\n0,Yes,NA,NA,NA,NA,1\n2,Yes,NA,NA,NA,NA,2", "duplicate node id 0"),
    ("0,No,T,0.5,1,7,NA\n1,Yes,NA,NA,NA,NA,1", "missing node 7"),
    ("0,No,T,0.5,1,2,NA\n1,No,v0,0.1,2,3,NA\n2,Yes,NA,NA,NA,NA,1\n3,Yes,NA,NA,NA,NA,1",
     "referenced by both"),
    ("1,Yes,NA,NA,NA,NA,1", "no root"),
    ("0,No,sigma,0.5,1,2,NA\n1,Yes,NA,NA,NA,NA,1\n2,Yes,NA,NA,NA,NA,2", "unknown variable"),
    ("0,Maybe,T,0.5,1,2,NA", "Yes or No"),
    ("0,No,T,0.5,1,2", "7 columns"),
    ("0,No,T,abc,1,2,NA\n1,Yes,NA,NA,NA,NA,1\n2,Yes,NA,NA,NA,NA,2", "bad split value"),
    ("0,No,T,0.5,1,NA,NA\n1,Yes,NA,NA,NA,NA,1", "missing a child"),
    ("0,Yes,NA,NA,NA,NA,NA", "no finite prediction"),
    ("0,No,T,0.5,1,2,NA\n1,Yes,NA,NA,NA,NA,1\n2,Yes,NA,NA,NA,NA,2\n3,Yes,NA,NA,NA,NA,3",
     "not reachable"),
    ("", "empty"),
])
def test_malformed_tables_are_rejected(body, fragment):
    with pytest.raises(ModelFormatError, match=fragment):
        load_tree_table(body)


def test_cycle_is_rejected():
    nodes = [TreeNode(0, False, 5, 0.5, 1, 2), TreeNode(1, True, prediction=1.0),
             TreeNode(2, False, 5, 0.7, 3, 1)]
    with pytest.raises(ModelFormatError):
        DecisionTree(nodes + [TreeNode(3, True, prediction=2.0)])


def test_single_sample_gives_single_leaf():
    tree = fit_tree(np.ones((1, 6)), np.array([4.2]))
    assert tree.n_nodes == 1 and tree.predict_one(np.zeros(6)) == 4.2


def test_constant_target_gives_single_leaf():
    X = np.random.default_rng(0).uniform(size=(50, 6))
    tree = fit_tree(X, np.full(50, 3.0))
    assert tree.n_nodes == 1


def test_zero_training_error_unlimited_depth():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(200, 6))
    y = rng.normal(size=200)
    tree = fit_tree(X, y, min_node_size=1)
    assert np.array_equal(tree.predict(X), y)


def test_empty_and_invalid_inputs():
    with pytest.raises(ValueError):
        fit_tree(np.empty((0, 6)), np.empty(0))
    with pytest.raises(ValueError):
        fit_tree(np.ones((3, 6)), np.array([1.0, np.nan, 2.0]))
    with pytest.raises(ValueError):
        fit_tree(np.ones((3, 6)), np.ones(3), features_per_split=7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.sampled_from([None, 2, 4]))
def test_split_is_the_best_midpoint_by_brute_force(seed, min_node, depth):
    rng = np.random.default_rng(seed)
    X = np.round(rng.uniform(size=(40, 3)), 1)  # rounding creates tied values
    y = rng.normal(size=40)
    tree = fit_tree(X, y, max_depth=depth, min_node_size=min_node)
    if depth is not None:
        assert tree.depth() <= depth
    rows, _ = node_rows(tree, X)
    for nd in tree.nodes:
        r = rows[nd.node_id]
        if nd.is_leaf:
            if r.size:
                assert nd.prediction == pytest.approx(y[r].mean(), rel=1e-12, abs=1e-12)
            continue
        assert r.size >= min_node
        chosen = sse(y[r]) - sse(y[r][X[r, nd.feature_index] <= nd.split_value]) \
            - sse(y[r][X[r, nd.feature_index] > nd.split_value])
        values = np.unique(X[r, nd.feature_index])
        assert np.any(np.isclose(nd.split_value, (values[:-1] + values[1:]) / 2, rtol=0, atol=1e-15))
        best = -np.inf
        for f in range(X.shape[1]):
            vals = np.unique(X[r, f])
            for thr in (vals[:-1] + vals[1:]) / 2:
                mask = X[r, f] <= thr
                best = max(best, sse(y[r]) - sse(y[r][mask]) - sse(y[r][~mask]))
        assert chosen >= best - 1e-9 * max(1.0, sse(y[r]))


def test_max_depth_and_determinism():
    rng = np.random.default_rng(2)
    X, y = rng.uniform(size=(300, 6)), rng.normal(size=300)
    tree = fit_tree(X, y, max_depth=4, features_per_split=2, seed=9)
    assert tree.depth() <= 4
    assert tree == fit_tree(X, y, max_depth=4, features_per_split=2, seed=9)
    assert tree.max_depth == 4


def test_batch_and_single_prediction_agree():
    tree = load_shipped_tree("i20")
    X = np.random.default_rng(3).uniform([0, 0, 0, -1, 0, 0], [10, 2, 5, 1, 2, 10], size=(500, 6))
    assert tree.predict(X).tolist() == [tree.predict_one(x) for x in X]


def test_prediction_shape_check():
    with pytest.raises(ValueError):
        load_shipped_tree("mu8").predict(np.zeros((2, 5)))


def test_estimator_interface():
    rng = np.random.default_rng(4)
    X, y = rng.uniform(size=(120, 6)), rng.normal(size=120)
    est = DecisionTreeSurrogate(max_depth=3, min_node_size=2, random_state=1)
    with pytest.raises(NotFittedError):
        est.predict(X)
    fitted = est.fit(X, y)
    assert fitted is est and est.n_features_in_ == 6
    twin = clone(est)
    assert twin.get_params() == est.get_params() and not hasattr(twin, "tree_")
    assert np.array_equal(twin.fit(X, y).predict(X), est.predict(X))
    assert est.score(X, y) > 0
    wrapped = DecisionTreeSurrogate.from_tree(load_shipped_tree("mu8"))
    assert wrapped.predict(np.array([[1, 1, 1, 0, 1, 0.05]]))[0] == 0.3668
