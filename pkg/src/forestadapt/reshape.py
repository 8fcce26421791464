"""Top-down reshaping walker shared by the model-transfer adapters.

Adaptation never grows structure. Each adapter walks a source tree with the
target samples, optionally rebuilding the split expert at every surviving
node, and collapses a node into a leaf when the target data runs out there:
the standard leaf rules (depth, min_samples, purity) apply to the target
subset, a retrainer may signal that no usable expert exists, and a split
whose children would not both receive samples is absorbed into its parent
position as a leaf. Leaf posteriors always come from the target samples.
"""
from __future__ import annotations

from .data import Dataset
from .errors import (
    DegenerateDataError,
    DegenerateSplitError,
    DimensionMismatchError,
    ForestAdaptError,
    InvalidArgumentError,
)
from .forest import (
    Forest,
    ForestConfig,
    LeafNode,
    SplitNode,
    Tree,
    laplace_posterior,
)


def required_dim(forest: Forest) -> int:
    """Smallest feature dimension the forest's selectors can run on."""
    top = 0
    for tree in forest.trees:
        for node in tree.nodes:
            if isinstance(node, SplitNode):
                top = max(top, node.params.selector.indices[-1] + 1)
    return top


def check_adaptation_inputs(source: Forest, S_ta: Dataset) -> None:
    """Preconditions shared by every adapter: target data present, both
    classes present, and wide enough for the source selectors."""
    if len(S_ta) == 0:
        raise InvalidArgumentError("adaptation needs at least one target sample")
    pos, neg = S_ta.class_counts()
    if pos == 0 or neg == 0:
        raise InvalidArgumentError("target samples must contain both classes")
    need = required_dim(source)
    if S_ta.dim < need:
        raise DimensionMismatchError(
            f"source model reads {need} features, target data has {S_ta.dim}"
        )


def reshape_tree(tree: Tree, S: Dataset, cfg: ForestConfig, retrain=None) -> Tree:
    """Rebuild `tree` over the target subset routed to each node.

    retrain(params, subset) -> SplitParams replaces a split's expert; None
    keeps the source parameters (pure re-route plus reshape). Ids in the
    result are preorder over the surviving structure.
    """
    if len(S) == 0:
        raise InvalidArgumentError("cannot reshape over an empty dataset")
    nodes: list = []

    def build(src_id: int, Sj: Dataset, depth: int) -> int:
        node_id = len(nodes)
        nodes.append(None)
        pos, neg = Sj.class_counts()
        n = pos + neg
        src = tree.nodes[src_id]
        if isinstance(src, SplitNode) and not (
                depth >= cfg.max_depth or n < cfg.min_samples
                or max(pos, neg) / n >= cfg.purity_stop):
            try:
                params = src.params if retrain is None else retrain(src.params, Sj)
            except (DegenerateDataError, DegenerateSplitError):
                params = None
            if params is not None:
                go_left = params.score(Sj.X) >= 0.0
                if bool(go_left.any()) and not bool(go_left.all()):
                    left = build(src.left, Sj.subset(go_left), depth + 1)
                    right = build(src.right, Sj.subset(~go_left), depth + 1)
                    nodes[node_id] = SplitNode(params, left, right)
                    return node_id
        nodes[node_id] = LeafNode(laplace_posterior(pos, n), n)
        return node_id

    build(tree.root, S, 1)
    return Tree(nodes, 0, min(tree.depth_bound, cfg.max_depth))


def structure_map(source_tree: Tree, adapted_tree: Tree) -> dict[int, int]:
    """adapted node id -> source node id, by lockstep descent.

    Valid because reshaping preserves positions: every adapted node sits
    where some source node sat, and left/right order is never swapped.
    """
    mapping: dict[int, int] = {}

    def walk(a_id: int, s_id: int) -> None:
        mapping[a_id] = s_id
        a = adapted_tree.nodes[a_id]
        if isinstance(a, SplitNode):
            s = source_tree.nodes[s_id]
            if not isinstance(s, SplitNode):
                raise InvalidArgumentError(
                    "adapted tree splits where the source tree has a leaf")
            walk(a.left, s.left)
            walk(a.right, s.right)

    walk(adapted_tree.root, source_tree.root)
    return mapping


def check_reshape_invariants(source: Forest, adapted: Forest) -> None:
    """Verify the contract every reshaping adapter must keep, pairwise per
    tree: adapted paths never outgrow the source path they descend from (the
    lockstep walk fails if an adapted split sits on a source leaf), and each
    surviving split still reads through the source node's selector. Weights
    and thresholds are the adapters' business and stay unchecked. Raises
    ForestAdaptError on a breach."""
    if len(adapted.trees) != len(source.trees):
        raise ForestAdaptError("adapted forest must keep the source tree count")
    for ti, (s_tree, a_tree) in enumerate(zip(source.trees, adapted.trees)):
        try:
            mapping = structure_map(s_tree, a_tree)
        except InvalidArgumentError as exc:
            raise ForestAdaptError(f"tree {ti}: {exc}") from exc
        for a_id, s_id in mapping.items():
            a_node = a_tree.nodes[a_id]
            if isinstance(a_node, SplitNode):
                s_sel = s_tree.nodes[s_id].params.selector.indices
                if a_node.params.selector.indices != s_sel:
                    raise ForestAdaptError(
                        f"tree {ti}: node {a_id} replaced the source selector")
