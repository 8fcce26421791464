"""Per-node expert transfer.

Every surviving split keeps its feature selector but re-learns its hyperplane
with a source-anchored SVM: the new weights are pulled toward C1 times the
source weights while C2 prices the hinge violations on the target samples
reaching that node. The threshold is then re-picked by information gain on
the new scores, and the tree reshapes wherever target data runs dry.
"""
from __future__ import annotations

from .data import Dataset, apply_selector
from .errors import InvalidArgumentError
from .forest import Forest, ForestConfig, SplitParams, best_threshold
from .optim import Hyperplane, train_adaptive_svm
from .reshape import check_adaptation_inputs, reshape_tree


def node_adapt(source: Forest, S_ta: Dataset, c1: float, c2: float,
               cfg: ForestConfig) -> Forest:
    check_adaptation_inputs(source, S_ta)
    if c1 < 0.0:
        raise InvalidArgumentError("c1 must be >= 0")
    if c2 <= 0.0:
        raise InvalidArgumentError("c2 must be positive")

    def retrain(params: SplitParams, Sj: Dataset) -> SplitParams:
        Xs = apply_selector(params.selector, Sj.X)
        anchor = Hyperplane(params.weights)
        w = train_adaptive_svm(Xs, Sj.y, anchor, c1, c2, cfg.svm).weights
        tau, _ = best_threshold(Xs @ w, Sj.y)
        return SplitParams(params.selector, w, tau)

    trees = [reshape_tree(t, S_ta, cfg, retrain) for t in source.trees]
    return Forest(trees, cfg, provenance="node-adapt",
                  params={"C1": float(c1), "C2": float(c2)})
