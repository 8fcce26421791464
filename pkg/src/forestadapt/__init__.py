"""Oblique random forests with linear-SVM split experts, three supervised
model-transfer adapters (node, path, tree), and a synthetic covariate-shift
benchmark harness."""

from .bench import (
    BenchReport,
    DomainSpec,
    ExperimentConfig,
    MetricsReport,
    ShiftSpec,
    check_model_invariants,
    evaluate,
    generate_domain_pair,
    run_experiment,
    stratified_subsample,
)
from .data import Dataset, FeatureSelector, LabeledSample, apply_selector, load_csv, sample_selectors
from .errors import (
    DegenerateDataError,
    DegenerateSplitError,
    DimensionMismatchError,
    ForestAdaptError,
    IncompatibleModelError,
    InvalidArgumentError,
    SolverConvergenceError,
)
from .forest import (
    Forest,
    ForestConfig,
    LeafNode,
    SplitNode,
    SplitParams,
    Tree,
    best_threshold,
    class_entropy,
    classify,
    deserialize_forest,
    forest_fingerprint,
    forest_posterior,
    forest_posterior_batch,
    grow_tree,
    information_gain,
    laplace_posterior,
    load_forest,
    save_forest,
    serialize_forest,
    train_forest,
    train_node,
    tree_posterior,
    tree_posterior_batch,
)
from .node_adapt import node_adapt
from .optim import (
    Hyperplane,
    QpConstraintRow,
    SolveStats,
    SvmConfig,
    ThresholdQpProblem,
    solve_threshold_qp,
    train_adaptive_svm,
    train_linear_svm,
)
from .path_adapt import (
    PathEntry,
    PathModel,
    PrefixSvm,
    export_path_svms,
    load_path_model,
    path_adapt,
    path_projection,
    retrain_structure,
    save_path_model,
    serialize_path_model,
    deserialize_path_model,
    tree_paths,
)
from .reshape import (
    check_adaptation_inputs,
    check_reshape_invariants,
    required_dim,
    reshape_tree,
    structure_map,
)
from .tree_adapt import tree_adapt

__all__ = [
    "Dataset",
    "FeatureSelector",
    "LabeledSample",
    "apply_selector",
    "load_csv",
    "sample_selectors",
    "ForestAdaptError",
    "InvalidArgumentError",
    "DimensionMismatchError",
    "DegenerateDataError",
    "DegenerateSplitError",
    "IncompatibleModelError",
    "SolverConvergenceError",
    "Hyperplane",
    "SvmConfig",
    "SolveStats",
    "ThresholdQpProblem",
    "QpConstraintRow",
    "train_linear_svm",
    "train_adaptive_svm",
    "solve_threshold_qp",
    "Forest",
    "ForestConfig",
    "Tree",
    "SplitNode",
    "LeafNode",
    "SplitParams",
    "class_entropy",
    "information_gain",
    "laplace_posterior",
    "best_threshold",
    "train_node",
    "grow_tree",
    "train_forest",
    "tree_posterior",
    "tree_posterior_batch",
    "forest_posterior",
    "forest_posterior_batch",
    "classify",
    "serialize_forest",
    "deserialize_forest",
    "save_forest",
    "load_forest",
    "forest_fingerprint",
    "reshape_tree",
    "structure_map",
    "required_dim",
    "check_adaptation_inputs",
    "check_reshape_invariants",
    "node_adapt",
    "tree_adapt",
    "PathModel",
    "PathEntry",
    "PrefixSvm",
    "export_path_svms",
    "retrain_structure",
    "path_projection",
    "path_adapt",
    "tree_paths",
    "serialize_path_model",
    "deserialize_path_model",
    "save_path_model",
    "load_path_model",
    "ShiftSpec",
    "DomainSpec",
    "MetricsReport",
    "ExperimentConfig",
    "BenchReport",
    "generate_domain_pair",
    "evaluate",
    "stratified_subsample",
    "check_model_invariants",
    "run_experiment",
]

__version__ = "0.1.0"
