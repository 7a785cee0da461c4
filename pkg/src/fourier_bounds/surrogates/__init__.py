"""Surrogate models mapping (kappa, theta, xi, rho, v0, T) to pricing-bound inputs."""

from .forest import RandomForest, RandomForestSurrogate, fit_forest
from .io import (
    SurrogateBundle,
    TrainedSurrogate,
    load_model,
    loads_model,
    dumps_model,
    save_model,
)
from .mlp import MLPSurrogate, MlpModel, fit_mlp, init_mlp, mse_and_gradients
from .tree import (
    DecisionTree,
    DecisionTreeSurrogate,
    TreeNode,
    fit_tree,
    load_shipped_tree,
    load_tree_table,
)

__all__ = [
    "DecisionTree",
    "DecisionTreeSurrogate",
    "MLPSurrogate",
    "MlpModel",
    "RandomForest",
    "RandomForestSurrogate",
    "SurrogateBundle",
    "TrainedSurrogate",
    "TreeNode",
    "dumps_model",
    "fit_forest",
    "fit_mlp",
    "fit_tree",
    "init_mlp",
    "load_model",
    "load_shipped_tree",
    "load_tree_table",
    "loads_model",
    "mse_and_gradients",
    "save_model",
]
