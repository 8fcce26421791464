"""Oblique random forest with per-node linear experts.

A split node holds theta = (selector, weights, threshold) and routes a sample
left when weights.selector(v) + threshold >= 0. Thresholds come from an
information-gain search over the expert's scores, so the node expert is
trained with a bias that is then dropped. Randomness enters only through
selector sampling; there is no bagging, every tree sees every sample.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, FeatureSelector, apply_selector, sample_selectors
from .errors import (
    DegenerateDataError,
    DegenerateSplitError,
    DimensionMismatchError,
    InvalidArgumentError,
)
from .optim import SvmConfig, train_linear_svm

FORMAT_VERSION = 1


# ------------------------------------------------------------------- config

@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 7
    min_samples: int = 8
    purity_stop: float = 0.99
    K: int = 50
    block_fraction: float = 0.3
    svm: SvmConfig = field(default_factory=SvmConfig)
    decision_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidArgumentError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise InvalidArgumentError("max_depth must be >= 1")
        if self.min_samples < 1:
            raise InvalidArgumentError("min_samples must be >= 1")
        if not 0.5 < self.purity_stop <= 1.0:
            raise InvalidArgumentError("purity_stop must be in (0.5, 1]")
        if self.K < 1:
            raise InvalidArgumentError("K must be >= 1")
        if not 0.0 < self.block_fraction <= 1.0:
            raise InvalidArgumentError("block_fraction must be in (0, 1]")
        if not 0.0 <= self.decision_threshold <= 1.0:
            raise InvalidArgumentError("decision_threshold must be in [0, 1]")


def config_to_dict(cfg: ForestConfig) -> dict:
    return {
        "n_trees": cfg.n_trees,
        "max_depth": cfg.max_depth,
        "min_samples": cfg.min_samples,
        "purity_stop": cfg.purity_stop,
        "K": cfg.K,
        "block_fraction": cfg.block_fraction,
        "svm": {"reg_cost": cfg.svm.reg_cost, "tol": cfg.svm.tol, "max_iter": cfg.svm.max_iter},
        "decision_threshold": cfg.decision_threshold,
        "seed": cfg.seed,
    }


def config_from_dict(d: dict) -> ForestConfig:
    try:
        svm = SvmConfig(**d["svm"])
        known = {k: d[k] for k in (
            "n_trees", "max_depth", "min_samples", "purity_stop", "K",
            "block_fraction", "decision_threshold", "seed")}
        return ForestConfig(svm=svm, **known)
    except (KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed forest config: {exc}") from None


# -------------------------------------------------------------------- types

@dataclass(frozen=True)
class SplitParams:
    selector: FeatureSelector
    weights: np.ndarray
    threshold: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.selector),):
            raise DimensionMismatchError("weights length must match selector length")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.threshold)):
            raise InvalidArgumentError("split parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "threshold", float(self.threshold))

    def score(self, v: np.ndarray) -> np.ndarray | float:
        return apply_selector(self.selector, v) @ self.weights + self.threshold


@dataclass
class SplitNode:
    params: SplitParams
    left: int
    right: int


@dataclass
class LeafNode:
    posterior_pos: float
    sample_count: int


@dataclass
class Tree:
    """Node arena; ids are preorder, the root is nodes[root]."""

    nodes: list
    root: int
    depth_bound: int


@dataclass
class Forest:
    trees: list
    config: ForestConfig
    provenance: str = "source"
    params: dict = field(default_factory=dict)
    tree_origins: list | None = None

    def __post_init__(self):
        if not self.trees:
            raise InvalidArgumentError("a forest needs at least one tree")
        if self.tree_origins is not None and len(self.tree_origins) != len(self.trees):
            raise InvalidArgumentError("tree_origins length must match tree count")


# ------------------------------------------------------------- split search

def class_entropy(pos_count: int, neg_count: int) -> float:
    """Shannon entropy (base 2) of a two-class count pair; empty sets give 0."""
    if pos_count < 0 or neg_count < 0:
        raise InvalidArgumentError("counts must be nonnegative")
    n = pos_count + neg_count
    if n == 0:
        return 0.0
    h = 0.0
    for c in (pos_count, neg_count):
        if c > 0:
            p = c / n
            h -= p * math.log2(p)
    return h


def information_gain(parent: tuple, left: tuple, right: tuple) -> float:
    if (left[0] + right[0], left[1] + right[1]) != tuple(parent):
        raise InvalidArgumentError("child counts must sum to the parent's")
    n = parent[0] + parent[1]
    gain = class_entropy(*parent)
    for side in (left, right):
        m = side[0] + side[1]
        if m > 0:
            gain -= (m / n) * class_entropy(*side)
    return gain


def _entropy_of_counts(pos, neg):
    n = pos + neg
    h = np.zeros(pos.shape)
    for c in (pos, neg):
        frac = np.divide(c, n, out=np.zeros_like(h), where=n > 0)
        nz = frac > 0
        h[nz] -= frac[nz] * np.log2(frac[nz])
    return h


def best_threshold(scores, labels) -> tuple[float, float]:
    """Gain-maximizing tau for the rule score + tau >= 0 -> left.

    Candidate cut points are the midpoints between consecutive distinct
    sorted scores plus one cut below the minimum (everything left); tau is
    the negated cut. Ties prefer the most balanced split, then smaller tau.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.ndim != 1 or scores.shape != labels.shape or scores.size == 0:
        raise InvalidArgumentError("scores and labels must be equal-length nonempty vectors")
    n = scores.size
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    pos_below = np.cumsum(labels[order] > 0)   # positives among s[:i+1]
    total_pos = int(pos_below[-1])
    total_neg = n - total_pos

    edge = np.nonzero(s[1:] > s[:-1])[0]       # boundary between i and i+1
    cuts = np.concatenate(([s[0] - 1.0], 0.5 * (s[edge] + s[edge + 1])))
    # left side = scores >= cut = sorted suffix
    pos_left = np.concatenate(([total_pos], total_pos - pos_below[edge]))
    n_left = np.concatenate(([n], n - (edge + 1)))
    neg_left = n_left - pos_left
    pos_right = total_pos - pos_left
    neg_right = total_neg - neg_left

    parent_h = class_entropy(total_pos, total_neg)
    gains = (parent_h
             - (n_left / n) * _entropy_of_counts(pos_left, neg_left)
             - ((n - n_left) / n) * _entropy_of_counts(pos_right, neg_right))
    taus = 0.0 - cuts
    balance = np.abs(2 * n_left - n)
    pick = np.lexsort((taus, balance, -gains))[0]
    return float(taus[pick]), float(gains[pick])


def train_node(S: Dataset, cfg: ForestConfig, seed) -> SplitParams:
    """Best-of-K candidate split: each candidate trains a biased linear SVM
    on one random contiguous feature block, drops the bias, and scores tau by
    information gain. Gain ties go to the lowest candidate index; identical
    selectors share one training run."""
    selectors = sample_selectors(S.dim, cfg.K, cfg.block_fraction, seed)
    cache: dict = {}
    best = None
    for sel in selectors:
        if sel not in cache:
            Xs = apply_selector(sel, S.X)
            try:
                w = train_linear_svm(Xs, S.y, cfg.svm).weights
                tau, gain = best_threshold(Xs @ w, S.y)
                cache[sel] = (w, tau, gain)
            except DegenerateDataError:
                cache[sel] = None
        hit = cache[sel]
        if hit is not None and (best is None or hit[2] > best[2]):
            best = (sel, *hit)
    if best is None:
        raise DegenerateSplitError("every candidate expert failed to train")
    sel, w, tau, gain = best
    return SplitParams(sel, w, tau)


def _node_seed(tree_seed: int, node_id: int) -> int:
    return int(np.random.SeedSequence((tree_seed, node_id)).generate_state(1)[0])


def laplace_posterior(pos: int, n: int) -> float:
    """Add-one smoothed positive-class probability for a leaf's counts."""
    return (pos + 1) / (n + 2)


def grow_tree(S: Dataset, cfg: ForestConfig, seed) -> Tree:
    """Recursive growth with preorder node ids; the root sits at depth 1.

    A node becomes a leaf when the depth bound is reached, the subset is
    smaller than min_samples, the majority fraction reaches purity_stop, no
    candidate split trains, or the chosen split routes everything one way
    (an empty child has no posterior, so the parent absorbs it)."""
    if len(S) == 0:
        raise InvalidArgumentError("cannot grow a tree from an empty dataset")
    nodes: list = []

    def build(Sj: Dataset, depth: int) -> int:
        node_id = len(nodes)
        nodes.append(None)
        pos, neg = Sj.class_counts()
        n = pos + neg
        if (depth >= cfg.max_depth or n < cfg.min_samples
                or max(pos, neg) / n >= cfg.purity_stop):
            nodes[node_id] = LeafNode(laplace_posterior(pos, n), n)
            return node_id
        try:
            params = train_node(Sj, cfg, _node_seed(seed, node_id))
        except DegenerateSplitError:
            nodes[node_id] = LeafNode(laplace_posterior(pos, n), n)
            return node_id
        go_left = params.score(Sj.X) >= 0.0
        if bool(go_left.all()) or not bool(go_left.any()):
            nodes[node_id] = LeafNode(laplace_posterior(pos, n), n)
            return node_id
        left = build(Sj.subset(go_left), depth + 1)
        right = build(Sj.subset(~go_left), depth + 1)
        nodes[node_id] = SplitNode(params, left, right)
        return node_id

    build(S, 1)
    return Tree(nodes, 0, cfg.max_depth)


def train_forest(S: Dataset, cfg: ForestConfig) -> Forest:
    """Grow cfg.n_trees trees on the full dataset with per-tree seeds
    cfg.seed + i; trees differ only through their selector draws."""
    if len(S) == 0:
        raise InvalidArgumentError("cannot train on an empty dataset")
    pos, neg = S.class_counts()
    if pos == 0 or neg == 0:
        raise DegenerateDataError("training data contains a single class")
    trees = [grow_tree(S, cfg, cfg.seed + i) for i in range(cfg.n_trees)]
    return Forest(trees, cfg)


# ---------------------------------------------------------------- inference

def tree_posterior(tree: Tree, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    node = tree.nodes[tree.root]
    while isinstance(node, SplitNode):
        node = tree.nodes[node.left if float(node.params.score(v)) >= 0.0 else node.right]
    return node.posterior_pos


def tree_posterior_batch(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Vectorized routing: walk the arena once with index masks."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    stack = [(tree.root, np.arange(X.shape[0]))]
    while stack:
        node_id, idx = stack.pop()
        if idx.size == 0:
            continue
        node = tree.nodes[node_id]
        if isinstance(node, LeafNode):
            out[idx] = node.posterior_pos
            continue
        go_left = node.params.score(X[idx]) >= 0.0
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def forest_posterior(forest: Forest, v: np.ndarray) -> float:
    total = math.fsum(tree_posterior(t, v) for t in forest.trees)
    return total / len(forest.trees)


def forest_posterior_batch(forest: Forest, X: np.ndarray) -> np.ndarray:
    acc = np.zeros(np.asarray(X).shape[0])
    for t in forest.trees:
        acc += tree_posterior_batch(t, X)
    return acc / len(forest.trees)


def classify(forest: Forest, v: np.ndarray, decision_threshold: float | None = None) -> float:
    thr = forest.config.decision_threshold if decision_threshold is None else decision_threshold
    return 1.0 if forest_posterior(forest, v) >= thr else -1.0


def tree_depth(tree: Tree) -> int:
    """Longest root-to-leaf path, counting the root as depth 1."""

    def walk(node_id: int) -> int:
        node = tree.nodes[node_id]
        if isinstance(node, LeafNode):
            return 1
        return 1 + max(walk(node.left), walk(node.right))

    return walk(tree.root)


# ------------------------------------------------------------ serialization

def _tree_to_obj(tree: Tree) -> dict:
    out = []
    for node in tree.nodes:
        if isinstance(node, LeafNode):
            out.append({"kind": "leaf", "posterior": node.posterior_pos,
                        "count": node.sample_count})
        else:
            out.append({
                "kind": "split",
                "selector": list(node.params.selector.indices),
                "weights": [float(w) for w in node.params.weights],
                "threshold": node.params.threshold,
                "left": node.left,
                "right": node.right,
            })
    return {"root": tree.root, "depth_bound": tree.depth_bound, "nodes": out}


def _tree_from_obj(obj: dict) -> Tree:
    nodes: list = []
    raw = obj["nodes"]
    for entry in raw:
        kind = entry.get("kind")
        if kind == "leaf":
            p = float(entry["posterior"])
            if not 0.0 <= p <= 1.0:
                raise InvalidArgumentError("leaf posterior out of [0, 1]")
            nodes.append(LeafNode(p, int(entry["count"])))
        elif kind == "split":
            left, right = int(entry["left"]), int(entry["right"])
            if not (0 <= left < len(raw) and 0 <= right < len(raw)) or left == right:
                raise InvalidArgumentError("split child ids out of range")
            nodes.append(SplitNode(
                SplitParams(FeatureSelector(tuple(entry["selector"])),
                            np.array(entry["weights"], dtype=np.float64),
                            float(entry["threshold"])),
                left, right))
        else:
            raise InvalidArgumentError(f"unknown node kind {kind!r}")
    return Tree(nodes, int(obj["root"]), int(obj["depth_bound"]))


def serialize_forest(forest: Forest) -> str:
    obj = {
        "format_version": FORMAT_VERSION,
        "provenance": forest.provenance,
        "params": forest.params,
        "config": config_to_dict(forest.config),
        "trees": [_tree_to_obj(t) for t in forest.trees],
    }
    if forest.tree_origins is not None:
        obj["tree_origins"] = list(forest.tree_origins)
    return json.dumps(obj, sort_keys=True)


def deserialize_forest(text: str) -> Forest:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"not valid JSON: {exc}") from None
    try:
        if obj["format_version"] != FORMAT_VERSION:
            raise InvalidArgumentError(
                f"unsupported model format_version {obj['format_version']!r}")
        forest = Forest(
            trees=[_tree_from_obj(t) for t in obj["trees"]],
            config=config_from_dict(obj["config"]),
            provenance=str(obj["provenance"]),
            params=dict(obj["params"]),
            tree_origins=list(obj["tree_origins"]) if "tree_origins" in obj else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed forest model: {exc}") from None
    return forest


def save_forest(forest: Forest, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_forest(forest))
        fh.write("\n")


def load_forest(path) -> Forest:
    with open(path) as fh:
        return deserialize_forest(fh.read())


def forest_fingerprint(forest: Forest) -> str:
    """sha256 over the trees alone: two models agree iff every selector,
    weight, threshold, child id, and leaf agrees bit for bit."""
    blob = json.dumps([_tree_to_obj(t) for t in forest.trees], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()
