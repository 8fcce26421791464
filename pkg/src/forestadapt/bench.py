"""Synthetic covariate-shift benchmark: generators, metrics, and the
source/target experiment protocol.

A domain pair shares one labeled base distribution; the target side passes
its features through a fixed affine map (rotate the first two coordinates,
then scale, then translate) AFTER the labels are drawn, so class posteriors
travel with the features while the marginals move. Detection-style scoring
sweeps the forest posterior and reads the miss rate at 11 log-spaced
false-positive-rate targets; an operating point is chosen conservatively as
the smallest achievable FPR at or above each target.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import DegenerateDataError, ForestAdaptError, InvalidArgumentError
from .forest import (
    Forest,
    ForestConfig,
    LeafNode,
    SplitNode,
    forest_posterior_batch,
    train_forest,
)
from .node_adapt import node_adapt
from .path_adapt import export_path_svms, path_adapt
from .reshape import check_reshape_invariants
from .tree_adapt import tree_adapt

FAMILIES = ("gaussian-blobs", "two-moons", "ring")
FPR_TARGETS = tuple(float(f) for f in np.logspace(-2.0, 0.0, 11))


# ------------------------------------------------------------------ domains

@dataclass(frozen=True)
class ShiftSpec:
    """Feature-space map applied to target samples: rotate the first two
    coordinates by `rotation` radians, multiply everything by `scale`, then
    add `translation`."""

    rotation: float = 0.0
    translation: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        object.__setattr__(self, "translation", t)
        if not np.isfinite(self.rotation) or not all(np.isfinite(v) for v in t):
            raise InvalidArgumentError("shift parameters must be finite")
        if self.scale <= 0.0 or not np.isfinite(self.scale):
            raise InvalidArgumentError("scale factor must be positive")


@dataclass(frozen=True)
class DomainSpec:
    family: str
    dim: int = 2
    prior_pos: float = 0.5
    noise: float = 1.0
    n_source: int = 1000
    n_target_train: int = 1000
    n_target_test: int = 1000
    shift: ShiftSpec = field(default_factory=ShiftSpec)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(
                f"unknown family {self.family!r}; pick one of {FAMILIES}")
        if self.dim < 2:
            raise InvalidArgumentError("dim must be >= 2")
        if not 0.0 < self.prior_pos < 1.0:
            raise InvalidArgumentError("prior_pos must be in (0, 1)")
        if self.noise <= 0.0:
            raise InvalidArgumentError("noise must be positive")
        if min(self.n_source, self.n_target_train, self.n_target_test) < 1:
            raise InvalidArgumentError("sample counts must be >= 1")
        if self.shift.translation and len(self.shift.translation) != self.dim:
            raise InvalidArgumentError("translation length must equal dim")


def _draw_family(spec: DomainSpec, rng, n: int):
    y = np.where(rng.random(n) < spec.prior_pos, 1.0, -1.0)
    X = rng.normal(scale=spec.noise, size=(n, spec.dim))
    if spec.family == "gaussian-blobs":
        X[:, :2] += y[:, None] * 0.85
    elif spec.family == "two-moons":
        t = rng.uniform(0.0, math.pi, n)
        X[:, :2] *= 0.25    # structure noise is a quarter of the raw scale
        X[:, 0] += np.where(y > 0, np.cos(t), 1.0 - np.cos(t))
        X[:, 1] += np.where(y > 0, np.sin(t), 0.5 - np.sin(t))
    else:   # ring
        radius = np.where(y > 0, 1.0, 2.0) + 0.25 * rng.normal(scale=spec.noise, size=n)
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        X[:, :2] *= 0.25
        X[:, 0] += radius * np.cos(theta)
        X[:, 1] += radius * np.sin(theta)
    return X, y


def _apply_shift(X: np.ndarray, spec: DomainSpec) -> np.ndarray:
    out = X.copy()
    if spec.shift.rotation != 0.0:
        c, s = math.cos(spec.shift.rotation), math.sin(spec.shift.rotation)
        out[:, :2] = out[:, :2] @ np.array([[c, s], [-s, c]])   # right-multiply by R^T
    if spec.shift.scale != 1.0:
        out *= spec.shift.scale
    if spec.shift.translation:
        out += np.asarray(spec.shift.translation)
    return out


def generate_domain_pair(spec: DomainSpec):
    """(S_source, S_target_train, S_target_test), deterministic per seed.

    Labels are always drawn from the unshifted conditional; only target
    features pass through the shift map."""
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(3)]
    X, y = _draw_family(spec, streams[0], spec.n_source)
    source = Dataset(X, y)
    X, y = _draw_family(spec, streams[1], spec.n_target_train)
    target_train = Dataset(_apply_shift(X, spec), y)
    X, y = _draw_family(spec, streams[2], spec.n_target_test)
    target_test = Dataset(_apply_shift(X, spec), y)
    return source, target_train, target_test


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class MetricsReport:
    avg_miss_rate: float
    miss_rates: tuple
    auc: float
    error_rate: float

    def __post_init__(self):
        rates = tuple(float(m) for m in self.miss_rates)
        object.__setattr__(self, "miss_rates", rates)
        values = (self.avg_miss_rate, self.auc, self.error_rate) + rates
        if not all(0.0 <= v <= 1.0 for v in values):
            raise InvalidArgumentError("metrics must lie in [0, 1]")
        if abs(self.avg_miss_rate - sum(rates) / len(rates)) > 1e-12:
            raise InvalidArgumentError("avg_miss_rate must average the miss rates")

    def to_dict(self) -> dict:
        return {
            "avg_miss_rate": self.avg_miss_rate,
            "miss_rates": list(self.miss_rates),
            "auc": self.auc,
            "error_rate": self.error_rate,
        }


def _rank_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """Mann-Whitney AUC with midrank tie handling."""
    scores = np.concatenate([neg, pos])
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts)
    midrank = cum - (counts - 1) / 2.0
    ranks = midrank[inverse]
    n_pos, n_neg = pos.size, neg.size
    return float((ranks[n_neg:].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(forest: Forest, test: Dataset) -> MetricsReport:
    """Detection metrics of a forest's posterior on a labeled test set."""
    pos_n, neg_n = test.class_counts()
    if pos_n == 0 or neg_n == 0:
        raise DegenerateDataError("evaluation needs both classes in the test set")
    post = forest_posterior_batch(forest, test.X)
    pos = np.sort(post[test.y > 0.0])
    neg = np.sort(post[test.y < 0.0])

    # stepwise exact ROC: a sample is called positive when posterior >= t
    thr = np.unique(post)
    thr = np.append(thr, thr[-1] + 1.0)     # all-negative operating point
    fpr = (neg.size - np.searchsorted(neg, thr, side="left")) / neg.size
    miss = np.searchsorted(pos, thr, side="left") / pos.size

    points = []
    for target in FPR_TARGETS:
        feasible = fpr >= target
        best_fpr = fpr[feasible].min()
        points.append(float(miss[feasible][fpr[feasible] == best_fpr].min()))

    preds = np.where(post >= 0.5, 1.0, -1.0)
    return MetricsReport(
        avg_miss_rate=float(np.mean(points)),
        miss_rates=tuple(points),
        auc=_rank_auc(pos, neg),
        error_rate=float(np.mean(preds != test.y)),
    )


# ----------------------------------------------------------------- protocol

def stratified_subsample(S: Dataset, fraction: float, seed: int) -> Dataset:
    """Per-class subsample of round(fraction * class size), seed-determined.

    A draw that would lose a class is retried with a bumped seed, ten times,
    then rejected."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidArgumentError("fraction must be in (0, 1]")
    pos_idx = np.nonzero(S.y > 0.0)[0]
    neg_idx = np.nonzero(S.y < 0.0)[0]
    for attempt in range(10):
        rng = np.random.default_rng(seed + attempt)
        keep = []
        for idx in (pos_idx, neg_idx):
            k = math.floor(fraction * idx.size + 0.5)
            if k > 0:
                keep.append(rng.choice(idx, size=k, replace=False))
        if len(keep) == 2:
            sel = np.sort(np.concatenate(keep))
            return S.subset(sel)
    raise DegenerateDataError(
        f"subsampling at {fraction:g} lost a class ten times in a row")


def check_model_invariants(forest: Forest, leaf_totals=None) -> None:
    """Verify the structural contract of a forest artifact, raising on breach.

    Checks, per tree: the node arena is exactly one preorder walk from root 0,
    split nodes sit strictly above the depth bound with finite weights over a
    strictly increasing selector, children ids are in range, and every leaf
    carries a Laplace posterior in (0, 1) with a nonnegative sample count.

    leaf_totals optionally pins the sum of leaf sample counts per tree: an int
    applies to all trees, a mapping is keyed by the tree's origin tag (the
    forest must then carry tree_origins). Every training run puts each sample
    in exactly one leaf, so the sum must equal the training set size.
    """
    cfg = forest.config
    origins = forest.tree_origins
    if origins is not None and len(origins) != len(forest.trees):
        raise ForestAdaptError("tree origins do not match the tree count")
    if isinstance(leaf_totals, dict) and origins is None:
        raise ForestAdaptError("per-origin leaf totals need tree_origins")
    for ti, tree in enumerate(forest.trees):
        where = f"tree {ti}"
        if tree.root != 0 or not tree.nodes:
            raise ForestAdaptError(f"{where}: arena must start at root 0")
        if not 1 <= tree.depth_bound <= cfg.max_depth:
            raise ForestAdaptError(f"{where}: depth bound {tree.depth_bound} "
                                   f"outside [1, {cfg.max_depth}]")
        order = []
        counted = 0

        def walk(nid, depth, tree=tree, where=where):
            nonlocal counted
            if not 0 <= nid < len(tree.nodes):
                raise ForestAdaptError(f"{where}: child id {nid} out of range")
            order.append(nid)
            node = tree.nodes[nid]
            if isinstance(node, SplitNode):
                if depth >= tree.depth_bound:
                    raise ForestAdaptError(f"{where}: split below depth bound")
                idx = node.params.selector.indices
                if any(b <= a for a, b in zip(idx, idx[1:])):
                    raise ForestAdaptError(f"{where}: selector not increasing")
                w = node.params.weights
                if w.shape != (len(idx),) or not np.all(np.isfinite(w)) \
                        or not np.isfinite(node.params.threshold):
                    raise ForestAdaptError(f"{where}: non-finite split")
                walk(node.left, depth + 1)
                walk(node.right, depth + 1)
            elif isinstance(node, LeafNode):
                if not 0.0 < node.posterior_pos < 1.0:
                    raise ForestAdaptError(f"{where}: leaf posterior "
                                           f"{node.posterior_pos} outside (0, 1)")
                if node.sample_count < 0:
                    raise ForestAdaptError(f"{where}: negative leaf count")
                counted += node.sample_count
            else:
                raise ForestAdaptError(f"{where}: unknown node type")

        walk(tree.root, 1)
        if order != list(range(len(tree.nodes))):
            raise ForestAdaptError(f"{where}: arena ids are not one preorder walk")
        if leaf_totals is not None:
            want = leaf_totals[origins[ti]] if isinstance(leaf_totals, dict) \
                else leaf_totals
            if counted != want:
                raise ForestAdaptError(f"{where}: leaf counts sum to {counted}, "
                                       f"expected {want}")


BASELINES = ("Src", "Tar100%", "TarX%")
METHOD_COLUMNS = {"node": "Node-Adapt", "path": "Path-Adapt", "tree": "Tree-Adapt"}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    spec: DomainSpec
    forest: ForestConfig
    target_fractions: tuple = (0.05,)
    methods: tuple = ("node", "path", "tree")
    n_repeats: int = 5
    node_c1: float = 1.0
    node_c2: float = 1.0
    path_penalty: float = 1.0
    tree_ratio: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "target_fractions",
                           tuple(float(f) for f in self.target_fractions))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.name:
            raise InvalidArgumentError("experiment needs a name")
        if not self.target_fractions or not all(
                0.0 < f <= 1.0 for f in self.target_fractions):
            raise InvalidArgumentError("target fractions must be in (0, 1]")
        if self.n_repeats < 1:
            raise InvalidArgumentError("n_repeats must be >= 1")
        unknown = set(self.methods) - set(METHOD_COLUMNS)
        if unknown:
            raise InvalidArgumentError(f"unknown methods: {sorted(unknown)}")


def _fraction_label(fraction: float) -> str:
    return f"X={100.0 * fraction:g}%"


@dataclass
class BenchReport:
    name: str
    columns: tuple
    fractions: tuple
    results: dict     # (fraction label, column) -> list of MetricsReport
    models_checked: int = 0

    def mean_amr(self, fraction: float, column: str) -> float:
        reports = self.results[(_fraction_label(fraction), column)]
        return float(np.mean([r.avg_miss_rate for r in reports]))

    def to_csv(self) -> str:
        lines = ["experiment," + ",".join(self.columns)]
        for frac in self.fractions:
            label = _fraction_label(frac)
            cells = []
            for col in self.columns:
                amrs = [r.avg_miss_rate for r in self.results[(label, col)]]
                spread = np.std(amrs, ddof=1) if len(amrs) > 1 else 0.0
                cells.append(f"{np.mean(amrs):.4f}±{spread:.4f}")
            lines.append(f"{self.name}@{label}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        obj = {
            "name": self.name,
            "columns": list(self.columns),
            "fractions": [
                {
                    "label": _fraction_label(frac),
                    "fraction": frac,
                    "repeats": [
                        {col: self.results[(_fraction_label(frac), col)][r].to_dict()
                         for col in self.columns}
                        for r in range(len(self.results[(_fraction_label(frac), self.columns[0])]))
                    ],
                }
                for frac in self.fractions
            ],
        }
        return json.dumps(obj, sort_keys=True)


def run_experiment(cfg: ExperimentConfig) -> BenchReport:
    """Repeat the full protocol n_repeats times and tabulate mean avg-miss.

    Per repeat: fresh domain draw (seed + r), baselines Src / Tar100% / TarX%,
    then each requested adapter from the Src model plus the X% subsample. The
    source forest and its exported path model are shared across the target
    fractions of one repeat; subsampling seeds differ per fraction. Every
    model that contributes a number is passed through check_model_invariants
    with its expected leaf totals before evaluation."""
    columns = list(BASELINES) + [METHOD_COLUMNS[m] for m in cfg.methods]
    results: dict = {(_fraction_label(f), c): [] for f in cfg.target_fractions
                     for c in columns}
    checked = 0
    for r in range(cfg.n_repeats):
        spec = replace(cfg.spec, seed=cfg.spec.seed + r)
        forest_cfg = replace(cfg.forest, seed=cfg.forest.seed + r)
        S_source, S_pool, S_test = generate_domain_pair(spec)

        src = train_forest(S_source, forest_cfg)
        tar_full = train_forest(S_pool, forest_cfg)
        check_model_invariants(src, len(S_source.y))
        check_model_invariants(tar_full, len(S_pool.y))
        checked += 2
        path_model = (export_path_svms(src, S_source, forest_cfg.svm)
                      if "path" in cfg.methods else None)

        for fi, fraction in enumerate(cfg.target_fractions):
            label = _fraction_label(fraction)
            S_ta = stratified_subsample(S_pool, fraction,
                                        seed=spec.seed + 1000 * (fi + 1))
            m_target = len(S_ta.y)
            tarx = train_forest(S_ta, forest_cfg)
            check_model_invariants(tarx, m_target)
            checked += 1
            results[(label, "Src")].append(evaluate(src, S_test))
            results[(label, "Tar100%")].append(evaluate(tar_full, S_test))
            results[(label, "TarX%")].append(evaluate(tarx, S_test))
            for m in cfg.methods:
                if m == "node":
                    adapted = node_adapt(src, S_ta, cfg.node_c1, cfg.node_c2,
                                         forest_cfg)
                    totals = m_target
                elif m == "path":
                    adapted = path_adapt(src, path_model, S_ta,
                                         cfg.path_penalty, forest_cfg)
                    totals = m_target
                else:
                    adapted = tree_adapt(src, S_ta, cfg.tree_ratio, forest_cfg)
                    totals = {"source": len(S_source.y), "target": m_target}
                check_model_invariants(adapted, totals)
                if m in ("node", "path"):
                    check_reshape_invariants(src, adapted)
                checked += 1
                results[(label, METHOD_COLUMNS[m])].append(evaluate(adapted, S_test))

    return BenchReport(cfg.name, tuple(columns), cfg.target_fractions, results,
                       models_checked=checked)
