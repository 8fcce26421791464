"""Threshold-only transfer along root-to-leaf paths.

The source side exports, for every path and every prefix length, a small
biased SVM trained on the per-node decision scores of the source samples.
Those prefix hyperplanes travel with the model as a stand-in for the source
data itself. On the target side a structure-cloned forest is retrained, and
then each tree's split thresholds are nudged jointly by a QP: stay close to
the retrained thresholds while keeping every (sample, path) projection on the
correct side of the matching prefix hyperplane. Prefixes of every length are
stored because reshaping decides path lengths only at adaptation time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset, apply_selector
from .errors import (
    DegenerateDataError,
    DimensionMismatchError,
    ForestAdaptError,
    IncompatibleModelError,
    InvalidArgumentError,
)
from .forest import (
    Forest,
    ForestConfig,
    SplitNode,
    SplitParams,
    Tree,
    best_threshold,
    forest_fingerprint,
)
from .optim import (
    QpConstraintRow,
    SvmConfig,
    ThresholdQpProblem,
    solve_threshold_qp,
    train_linear_svm,
)
from .reshape import check_adaptation_inputs, required_dim, reshape_tree, structure_map

PATHS_FORMAT_VERSION = 1


# -------------------------------------------------------------------- types

@dataclass(frozen=True)
class PrefixSvm:
    """Biased hyperplane over the first k components of a path projection."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise InvalidArgumentError("prefix weights must be a nonempty vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise InvalidArgumentError("prefix hyperplane must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


@dataclass(frozen=True)
class PathEntry:
    """One root-to-leaf path: its split-node ids and one SVM per prefix."""

    node_ids: tuple[int, ...]
    prefixes: tuple[PrefixSvm, ...]

    def __post_init__(self):
        ids = tuple(int(i) for i in self.node_ids)
        object.__setattr__(self, "node_ids", ids)
        object.__setattr__(self, "prefixes", tuple(self.prefixes))
        if len(self.prefixes) != len(ids):
            raise InvalidArgumentError("need exactly one prefix SVM per path depth")
        for k, p in enumerate(self.prefixes):
            if p.weights.size != k + 1:
                raise InvalidArgumentError(
                    f"prefix {k + 1} carries a {p.weights.size}-dim hyperplane")


@dataclass
class PathModel:
    """The exported source-side artifact: per tree, one entry per path."""

    fingerprint: str
    trees: list

    def __post_init__(self):
        if not isinstance(self.fingerprint, str) or not self.fingerprint:
            raise InvalidArgumentError("path model needs a source fingerprint")


# ------------------------------------------------------------------- export

def tree_paths(tree: Tree) -> list:
    """Split-node id sequences of every root-to-leaf path, left branch first.

    A single-leaf tree yields one empty path."""
    paths: list = []

    def walk(node_id: int, chain: tuple) -> None:
        node = tree.nodes[node_id]
        if isinstance(node, SplitNode):
            walk(node.left, chain + (node_id,))
            walk(node.right, chain + (node_id,))
        else:
            paths.append(chain)

    walk(tree.root, ())
    return paths


def _node_scores(tree: Tree, X: np.ndarray) -> dict:
    """Decision score of every split node on every sample (threshold included)."""
    out = {}
    for node_id, node in enumerate(tree.nodes):
        if isinstance(node, SplitNode):
            out[node_id] = node.params.score(X)
    return out


def export_path_svms(source: Forest, S_source: Dataset,
                     cfg: SvmConfig = SvmConfig()) -> PathModel:
    """Train the per-path prefix SVMs on the source samples.

    This is the only source-side step; afterwards the samples can be thrown
    away. Paths sharing their first k nodes see identical k-dim projections,
    so each prefix is solved once per distinct end node and replicated."""
    pos, neg = S_source.class_counts()
    if pos == 0 or neg == 0:
        raise DegenerateDataError("prefix SVMs need both classes in the source data")
    if S_source.dim < required_dim(source):
        raise DimensionMismatchError("source data narrower than the forest's selectors")
    trees = []
    for tree in source.trees:
        scores = _node_scores(tree, S_source.X)
        solved: dict = {}
        entries = []
        for path in tree_paths(tree):
            prefixes = []
            for k, end in enumerate(path):
                if end not in solved:
                    P = np.column_stack([scores[nid] for nid in path[:k + 1]])
                    hp = train_linear_svm(P, S_source.y, cfg)
                    solved[end] = PrefixSvm(hp.weights, hp.bias)
                prefixes.append(solved[end])
            entries.append(PathEntry(path, tuple(prefixes)))
        trees.append(entries)
    return PathModel(forest_fingerprint(source), trees)


# -------------------------------------------------------- structure retrain

def _split_retrainer(cfg: ForestConfig):
    def retrain(params: SplitParams, Sj: Dataset) -> SplitParams:
        Xs = apply_selector(params.selector, Sj.X)
        w = train_linear_svm(Xs, Sj.y, cfg.svm).weights
        tau, _ = best_threshold(Xs @ w, Sj.y)
        return SplitParams(params.selector, w, tau)

    return retrain


def retrain_structure(source: Forest, S_ta: Dataset, cfg: ForestConfig) -> Forest:
    """Clone the source topology and selectors, relearn every expert and
    threshold on the target samples reaching it, reshaping where they run
    out. No selector sampling happens: structure is inherited, not grown."""
    check_adaptation_inputs(source, S_ta)
    retrain = _split_retrainer(cfg)
    trees = [reshape_tree(t, S_ta, cfg, retrain) for t in source.trees]
    return Forest(trees, cfg, provenance="structure-retrain")


# -------------------------------------------------------------- adaptation

def path_projection(tree: Tree, node_ids, v: np.ndarray) -> np.ndarray:
    """Decision scores of one sample along a root-descending split chain."""
    ids = tuple(int(i) for i in node_ids)
    if not ids:
        raise InvalidArgumentError("path must contain at least one split node")
    if ids[0] != tree.root:
        raise InvalidArgumentError("path must start at the root")
    out = np.empty(len(ids))
    for k, node_id in enumerate(ids):
        node = tree.nodes[node_id]
        if not isinstance(node, SplitNode):
            raise InvalidArgumentError(f"node {node_id} on the path is not a split")
        if k + 1 < len(ids) and ids[k + 1] not in (node.left, node.right):
            raise InvalidArgumentError(f"node {ids[k + 1]} is not a child of {node_id}")
        out[k] = float(node.params.score(v))
    return out


def _adapt_tree_thresholds(shaped: Tree, source_ids: dict, entries,
                           S_ta: Dataset, penalty: float,
                           cfg: ForestConfig) -> Tree:
    split_ids = [i for i, nd in enumerate(shaped.nodes) if isinstance(nd, SplitNode)]
    if not split_ids:
        return shaped
    var_of = {nid: k for k, nid in enumerate(split_ids)}
    prior = np.array([shaped.nodes[nid].params.threshold for nid in split_ids])

    # expert responses without thresholds: the QP moves the thresholds,
    # everything else on a path is a constant of the problem
    raw = {nid: apply_selector(shaped.nodes[nid].params.selector, S_ta.X)
           @ shaped.nodes[nid].params.weights for nid in split_ids}
    lookup = {}
    for e in entries:
        for k in range(len(e.node_ids)):
            lookup[e.node_ids[:k + 1]] = e.prefixes[k]

    rows = []
    for path in tree_paths(shaped):
        key = tuple(source_ids[nid] for nid in path)
        svm = lookup.get(key)
        if svm is None:
            raise IncompatibleModelError(
                f"no prefix hyperplane stored for source path {key}")
        ids = tuple(var_of[nid] for nid in path)
        proj = np.column_stack([raw[nid] for nid in path])
        for k in range(len(S_ta)):
            rows.append(QpConstraintRow(ids, proj[k], svm.weights, svm.bias,
                                        float(S_ta.y[k])))

    solved = solve_threshold_qp(
        ThresholdQpProblem(len(split_ids), prior, rows, penalty), cfg.svm)
    nodes: list = []
    for nid, node in enumerate(shaped.nodes):
        if isinstance(node, SplitNode):
            p = node.params
            nodes.append(SplitNode(
                SplitParams(p.selector, p.weights, float(solved[var_of[nid]])),
                node.left, node.right))
        else:
            nodes.append(node)
    return Tree(nodes, shaped.root, shaped.depth_bound)


def _check_threshold_only(before: Tree, after: Tree) -> None:
    """The QP stage may move split thresholds and nothing else; checked on
    every adaptation because that guarantee is what keeps the exported prefix
    hyperplanes meaningful."""
    if len(after.nodes) != len(before.nodes) or after.root != before.root \
            or after.depth_bound != before.depth_bound:
        raise ForestAdaptError("threshold stage altered the tree structure")
    for b, a in zip(before.nodes, after.nodes):
        if isinstance(b, SplitNode) != isinstance(a, SplitNode):
            raise ForestAdaptError("threshold stage changed a node's kind")
        if isinstance(b, SplitNode):
            if (a.left, a.right) != (b.left, b.right) \
                    or a.params.selector.indices != b.params.selector.indices \
                    or not np.array_equal(a.params.weights, b.params.weights):
                raise ForestAdaptError(
                    "threshold stage touched more than the thresholds")
        elif (a.posterior_pos, a.sample_count) != (b.posterior_pos, b.sample_count):
            raise ForestAdaptError("threshold stage rewrote a leaf")


def path_adapt(source: Forest, path_model: PathModel, S_ta: Dataset,
               penalty: float, cfg: ForestConfig) -> Forest:
    check_adaptation_inputs(source, S_ta)
    if penalty < 0.0 or not np.isfinite(penalty):
        raise InvalidArgumentError("penalty must be finite and >= 0")
    if path_model.fingerprint != forest_fingerprint(source):
        raise IncompatibleModelError(
            "path model was exported from a different forest")
    if len(path_model.trees) != len(source.trees):
        raise IncompatibleModelError("path model tree count differs from the forest")
    retrain = _split_retrainer(cfg)
    adapted = []
    for src_tree, entries in zip(source.trees, path_model.trees):
        shaped = reshape_tree(src_tree, S_ta, cfg, retrain)
        adjusted = _adapt_tree_thresholds(shaped, structure_map(src_tree, shaped),
                                          entries, S_ta, penalty, cfg)
        _check_threshold_only(shaped, adjusted)
        # thresholds moved, so routing changed: re-route the target samples
        # to rebuild posteriors and collapse branches that ran dry
        adapted.append(reshape_tree(adjusted, S_ta, cfg))
    return Forest(adapted, cfg, provenance="path-adapt",
                  params={"C": float(penalty)})


# ------------------------------------------------------------ serialization

def serialize_path_model(model: PathModel) -> str:
    obj = {
        "format_version": PATHS_FORMAT_VERSION,
        "fingerprint": model.fingerprint,
        "trees": [
            [
                {
                    "node_ids": list(e.node_ids),
                    "prefix_svms": [
                        {"weights": [float(x) for x in p.weights], "bias": p.bias}
                        for p in e.prefixes
                    ],
                }
                for e in entries
            ]
            for entries in model.trees
        ],
    }
    return json.dumps(obj, sort_keys=True)


def deserialize_path_model(text: str) -> PathModel:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"not valid JSON: {exc}") from None
    try:
        if obj["format_version"] != PATHS_FORMAT_VERSION:
            raise InvalidArgumentError(
                f"unsupported path model format_version {obj['format_version']!r}")
        trees = [
            [
                PathEntry(
                    tuple(e["node_ids"]),
                    tuple(PrefixSvm(np.array(p["weights"], dtype=np.float64),
                                    float(p["bias"]))
                          for p in e["prefix_svms"]),
                )
                for e in entries
            ]
            for entries in obj["trees"]
        ]
        return PathModel(str(obj["fingerprint"]), trees)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed path model: {exc}") from None


def save_path_model(model: PathModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_path_model(model))
        fh.write("\n")


def load_path_model(path) -> PathModel:
    with open(path) as fh:
        return deserialize_path_model(fh.read())
