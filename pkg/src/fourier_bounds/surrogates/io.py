"""Portable JSON model files.

Every file is one JSON object with ``kind`` (tree, forest, mlp or bundle),
``version`` and the full parameters. Floats are written with Python's
shortest round-trip representation (at most 17 significant digits), so a
save/load cycle reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import ModelFormatError
from ..heston import FEATURE_NAMES
from .forest import RandomForest, RandomForestSurrogate
from .mlp import MLPSurrogate, MlpModel
from .tree import DecisionTree, DecisionTreeSurrogate, TreeNode

__all__ = [
    "FORMAT_VERSION",
    "TRANSFORMS",
    "TrainedSurrogate",
    "SurrogateBundle",
    "model_to_dict",
    "model_from_dict",
    "dumps_model",
    "loads_model",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1

# target transforms: forward applied before fitting, inverse after predicting
TRANSFORMS = {
    "identity": (lambda y: y, lambda z: z),
    "log": (np.log, np.exp),
}


def _unwrap(model):
    if isinstance(model, DecisionTreeSurrogate):
        return model.tree_
    if isinstance(model, RandomForestSurrogate):
        return model.forest_
    if isinstance(model, MLPSurrogate):
        return model.model_
    return model


@dataclass
class TrainedSurrogate:
    """A fitted model plus the target it predicts and the target transform used in training."""

    model: object
    target: str = "unknown"
    transform: str = "identity"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.model = _unwrap(self.model)
        if self.transform not in TRANSFORMS:
            raise ModelFormatError(f"unknown target transform {self.transform!r}")

    def predict(self, X):
        return TRANSFORMS[self.transform][1](self.model.predict(X))


@dataclass
class SurrogateBundle:
    """Several surrogates sharing one input, e.g. the Carr-Madan pair (alpha, N)."""

    members: dict
    target: str = "cm"
    meta: dict = field(default_factory=dict)

    def predict(self, X):
        return {name: m.predict(X) for name, m in self.members.items()}


def _num(x):
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        raise ModelFormatError("model parameters must be finite")
    return x


def _tree_to_dict(tree: DecisionTree):
    nodes = tree.nodes
    return {
        "n_features": tree.n_features,
        "max_depth": tree.max_depth,
        "min_node_size": tree.min_node_size,
        "node_id": [nd.node_id for nd in nodes],
        "is_leaf": [nd.is_leaf for nd in nodes],
        "feature": [nd.feature_index for nd in nodes],
        "split_value": [_num(nd.split_value) for nd in nodes],
        "left_child": [nd.left_child for nd in nodes],
        "right_child": [nd.right_child for nd in nodes],
        "prediction": [_num(nd.prediction) for nd in nodes],
    }


def _tree_from_dict(d):
    cols = ("node_id", "is_leaf", "feature", "split_value", "left_child", "right_child", "prediction")
    try:
        lengths = {len(d[c]) for c in cols}
        if len(lengths) != 1:
            raise ModelFormatError("tree columns have different lengths")
        nodes = [TreeNode(*row) for row in zip(*(d[c] for c in cols))]
        return DecisionTree(nodes, max_depth=d.get("max_depth"), min_node_size=d.get("min_node_size"),
                            n_features=d.get("n_features", len(FEATURE_NAMES)))
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed tree: {exc}") from None


def _mlp_to_dict(m: MlpModel):
    return {
        "layer_sizes": m.layer_sizes,
        "activation": m.activation,
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "x_mean": m.x_mean.tolist(),
        "x_scale": m.x_scale.tolist(),
        "y_mean": m.y_mean,
        "y_scale": m.y_scale,
        "history": m.history,
    }


def _mlp_from_dict(d):
    try:
        m = MlpModel(d["weights"], d["biases"], d["activation"], d["x_mean"], d["x_scale"],
                     float(d["y_mean"]), float(d["y_scale"]), d.get("history", {}))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed mlp: {exc}") from None
    if "layer_sizes" in d and list(d["layer_sizes"]) != m.layer_sizes:
        raise ModelFormatError("layer_sizes do not match the weight shapes")
    return m


def model_to_dict(obj) -> dict:
    """JSON-ready dict for a tree, forest, network, TrainedSurrogate or bundle."""
    if isinstance(obj, SurrogateBundle):
        return {"kind": "bundle", "version": FORMAT_VERSION, "target": obj.target, "meta": obj.meta,
                "members": {k: model_to_dict(v) for k, v in obj.members.items()}}
    wrapper = obj if isinstance(obj, TrainedSurrogate) else TrainedSurrogate(obj)
    model = wrapper.model
    head = {"version": FORMAT_VERSION, "target": wrapper.target, "transform": wrapper.transform,
            "meta": wrapper.meta, "features": list(FEATURE_NAMES)}
    if isinstance(model, DecisionTree):
        return {"kind": "tree", **head, "tree": _tree_to_dict(model)}
    if isinstance(model, RandomForest):
        return {"kind": "forest", **head, "num_trees": model.num_trees,
                "features_per_split": model.features_per_split, "seed": model.seed,
                "bootstrap": model.bootstrap, "trees": [_tree_to_dict(t) for t in model.trees]}
    if isinstance(model, MlpModel):
        return {"kind": "mlp", **head, "mlp": _mlp_to_dict(model)}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d):
    """Inverse of model_to_dict; bundles come back as SurrogateBundle, the rest as TrainedSurrogate."""
    if not isinstance(d, dict):
        raise ModelFormatError("model file must hold a JSON object")
    kind = d.get("kind")
    version = d.get("version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model file version {version!r}")
    if kind == "bundle":
        members = d.get("members")
        if not isinstance(members, dict) or not members:
            raise ModelFormatError("bundle without members")
        return SurrogateBundle({k: model_from_dict(v) for k, v in members.items()},
                               target=d.get("target", "cm"), meta=d.get("meta", {}))
    if kind == "tree":
        model = _tree_from_dict(d.get("tree", {}))
    elif kind == "forest":
        trees = d.get("trees")
        if not trees:
            raise ModelFormatError("forest without trees")
        model = RandomForest([_tree_from_dict(t) for t in trees],
                             features_per_split=d.get("features_per_split"), seed=d.get("seed"),
                             bootstrap=d.get("bootstrap", True))
        if d.get("num_trees", model.num_trees) != model.num_trees:
            raise ModelFormatError("num_trees does not match the stored trees")
    elif kind == "mlp":
        model = _mlp_from_dict(d.get("mlp", {}))
    else:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    return TrainedSurrogate(model, target=d.get("target", "unknown"),
                            transform=d.get("transform", "identity"), meta=d.get("meta", {}))


def dumps_model(obj) -> str:
    return json.dumps(model_to_dict(obj), allow_nan=False, separators=(",", ":"))


def loads_model(text: str):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(d)


def save_model(obj, path):
    Path(path).write_text(dumps_model(obj), encoding="utf-8")


def load_model(path):
    return loads_model(Path(path).read_text(encoding="utf-8"))
