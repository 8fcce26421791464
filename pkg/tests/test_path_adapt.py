import json

import numpy as np
import pytest

from forestadapt.data import Dataset, FeatureSelector
from forestadapt.errors import (
    DegenerateDataError,
    IncompatibleModelError,
    InvalidArgumentError,
)
from forestadapt.forest import (
    Forest,
    ForestConfig,
    LeafNode,
    SplitNode,
    SplitParams,
    Tree,
    forest_fingerprint,
    serialize_forest,
    train_forest,
    tree_depth,
)
from forestadapt.optim import SvmConfig
from forestadapt.path_adapt import (
    PathEntry,
    PathModel,
    PrefixSvm,
    deserialize_path_model,
    export_path_svms,
    load_path_model,
    path_adapt,
    path_projection,
    retrain_structure,
    save_path_model,
    serialize_path_model,
    tree_paths,
)
from forestadapt.reshape import structure_map

CFG = ForestConfig(n_trees=3, max_depth=4, min_samples=4, purity_stop=0.99,
                   K=6, block_fraction=0.5, svm=SvmConfig(tol=1e-4), seed=31)


def blobs(seed, n=200, dim=4, sep=2.4, angle=0.0):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[:2] = (1.0, -1.0)
    X = rng.normal(size=(n, dim))
    X[:, :2] += y[:, None] * (sep / 2)
    if angle:
        c, s = np.cos(angle), np.sin(angle)
        X[:, :2] = X[:, :2] @ np.array([[c, -s], [s, c]]).T
    return Dataset(X, y)


def one_split_forest(threshold=-1.0):
    params = SplitParams(FeatureSelector((0,)), np.array([1.0]), threshold)
    tree = Tree([SplitNode(params, 1, 2), LeafNode(0.9, 10), LeafNode(0.1, 10)], 0, 2)
    return Forest([tree], ForestConfig(n_trees=1, svm=CFG.svm))


# ------------------------------------------------------------------- export

def test_tree_paths_enumeration():
    forest = one_split_forest()
    assert tree_paths(forest.trees[0]) == [(0,), (0,)]
    assert tree_paths(Tree([LeafNode(0.5, 1)], 0, 1)) == [()]


def test_export_one_split_tree_shares_the_root_prefix():
    forest = one_split_forest()
    S = blobs(0, dim=2)
    model = export_path_svms(forest, S, CFG.svm)
    assert model.fingerprint == forest_fingerprint(forest)
    entries = model.trees[0]
    assert len(entries) == 2
    for e in entries:
        assert e.node_ids == (0,)
        assert len(e.prefixes) == 1
        assert e.prefixes[0].weights.shape == (1,)
    a, b = entries[0].prefixes[0], entries[1].prefixes[0]
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_export_prefix_counts_and_dims():
    source = train_forest(blobs(1), CFG)
    model = export_path_svms(source, blobs(1), CFG.svm)
    assert len(model.trees) == 3
    for tree, entries in zip(source.trees, model.trees):
        assert len(entries) == sum(isinstance(n, LeafNode) for n in tree.nodes)
        for e in entries:
            assert len(e.prefixes) == len(e.node_ids)
            for k, p in enumerate(e.prefixes):
                assert p.weights.shape == (k + 1,)


def test_export_prefix_svms_separate_separable_source():
    S = blobs(2, sep=5.0)
    source = train_forest(S, CFG)
    model = export_path_svms(source, S, CFG.svm)
    for tree, entries in zip(source.trees, model.trees):
        for e in entries:
            for k, p in enumerate(e.prefixes):
                proj = np.column_stack(
                    [tree.nodes[nid].params.score(S.X) for nid in e.node_ids[:k + 1]])
                preds = np.sign(proj @ p.weights + p.bias)
                assert np.mean(preds != S.y) == 0.0


def test_export_rejects_single_class_source():
    forest = one_split_forest()
    X = np.abs(np.random.default_rng(0).normal(size=(20, 2))) + 1.0
    with pytest.raises(DegenerateDataError):
        export_path_svms(forest, Dataset(X, np.ones(20)), CFG.svm)


# ------------------------------------------------------------- projections

def test_path_projection_values_and_validation():
    S = blobs(3)
    source = train_forest(S, CFG)
    tree = source.trees[0]
    rng = np.random.default_rng(7)
    for path in tree_paths(tree):
        if not path:
            continue
        v = rng.normal(size=S.dim)
        proj = path_projection(tree, path, v)
        assert proj.shape == (len(path),)
        for k, nid in enumerate(path):
            assert proj[k] == float(tree.nodes[nid].params.score(v))

    root_only = one_split_forest(threshold=-1.0).trees[0]
    assert path_projection(root_only, (0,), np.array([1.5]))[0] == 0.5
    assert path_projection(root_only, (0,), np.array([1.0]))[0] == 0.0  # boundary

    with pytest.raises(InvalidArgumentError):
        path_projection(tree, (), np.zeros(S.dim))
    with pytest.raises(InvalidArgumentError):
        path_projection(root_only, (1,), np.array([1.0]))   # not the root
    with pytest.raises(InvalidArgumentError):
        path_projection(root_only, (0, 0), np.array([1.0]))  # not a child chain


# ------------------------------------------------------- structure retrain

def test_retrain_on_source_set_reproduces_the_forest():
    S = blobs(4)
    source = train_forest(S, CFG)
    cloned = retrain_structure(source, S, CFG)
    assert forest_fingerprint(cloned) == forest_fingerprint(source)
    assert cloned.provenance == "structure-retrain"


def test_retrain_structure_determinism_and_reshaping():
    S_src, S_ta = blobs(5), blobs(6, n=40, angle=0.5)
    source = train_forest(S_src, CFG)
    a = retrain_structure(source, S_ta, CFG)
    b = retrain_structure(source, S_ta, CFG)
    assert serialize_forest(a) == serialize_forest(b)
    for src_tree, new_tree in zip(source.trees, a.trees):
        assert tree_depth(new_tree) <= tree_depth(src_tree)
        structure_map(src_tree, new_tree)


# -------------------------------------------------------------- adaptation

def test_zero_penalty_returns_the_retrained_forest():
    S_src, S_ta = blobs(7), blobs(8, n=60, angle=0.6)
    source = train_forest(S_src, CFG)
    model = export_path_svms(source, S_src, CFG.svm)
    adapted = path_adapt(source, model, S_ta, 0.0, CFG)
    assert forest_fingerprint(adapted) == forest_fingerprint(retrain_structure(source, S_ta, CFG))
    assert adapted.provenance == "path-adapt"
    assert adapted.params == {"C": 0.0}


def test_satisfied_constraints_leave_thresholds_alone():
    # adapting back onto a cleanly separable source set: first confirm every
    # prefix hyperplane classifies its own training projections perfectly
    # (the premise), then the QP has no active row and must change nothing
    S = blobs(20, sep=5.0)
    source = train_forest(S, CFG)
    model = export_path_svms(source, S, CFG.svm)
    for tree, entries in zip(source.trees, model.trees):
        for e in entries:
            for k, p in enumerate(e.prefixes):
                proj = np.column_stack(
                    [tree.nodes[nid].params.score(S.X) for nid in e.node_ids[:k + 1]])
                assert np.all(S.y * (proj @ p.weights + p.bias) >= 0.0)
    adapted = path_adapt(source, model, S, 10.0, CFG)
    assert forest_fingerprint(adapted) == forest_fingerprint(source)


def test_only_thresholds_move_before_reshaping():
    S_src, S_ta = blobs(10), blobs(11, n=60, angle=0.7)
    source = train_forest(S_src, CFG)
    model = export_path_svms(source, S_src, CFG.svm)
    shaped = retrain_structure(source, S_ta, CFG)
    adapted = path_adapt(source, model, S_ta, 5.0, CFG)
    for base_tree, new_tree in zip(shaped.trees, adapted.trees):
        mapping = structure_map(base_tree, new_tree)
        for new_id, base_id in mapping.items():
            new = new_tree.nodes[new_id]
            if isinstance(new, SplitNode):
                base = base_tree.nodes[base_id]
                assert new.params.selector == base.params.selector
                assert np.array_equal(new.params.weights, base.params.weights)


def test_fingerprint_mismatch_is_rejected():
    S_src, S_ta = blobs(12), blobs(13, n=60)
    source = train_forest(S_src, CFG)
    model = export_path_svms(source, S_src, CFG.svm)
    other = train_forest(blobs(14), CFG)
    with pytest.raises(IncompatibleModelError):
        path_adapt(other, model, S_ta, 1.0, CFG)
    with pytest.raises(InvalidArgumentError):
        path_adapt(source, model, S_ta, -1.0, CFG)
    single = Dataset(S_ta.X[S_ta.y > 0], S_ta.y[S_ta.y > 0])
    with pytest.raises(InvalidArgumentError):
        path_adapt(source, model, single, 1.0, CFG)


def test_adaptation_under_shift_stays_sane():
    S_src, S_ta = blobs(15, n=300), blobs(16, n=80, angle=0.5)
    source = train_forest(S_src, CFG)
    model = export_path_svms(source, S_src, CFG.svm)
    adapted = path_adapt(source, model, S_ta, 1.0, CFG)
    for src_tree, new_tree in zip(source.trees, adapted.trees):
        assert tree_depth(new_tree) <= tree_depth(src_tree)
        leaf_total = sum(nd.sample_count for nd in new_tree.nodes
                         if isinstance(nd, LeafNode))
        assert leaf_total == len(S_ta)
        for node in new_tree.nodes:
            if isinstance(node, LeafNode):
                assert 0.0 < node.posterior_pos < 1.0


# ------------------------------------------------------------ serialization

def test_path_model_round_trip(tmp_path):
    S = blobs(17)
    source = train_forest(S, CFG)
    model = export_path_svms(source, S, CFG.svm)
    text = serialize_path_model(model)
    back = deserialize_path_model(text)
    assert serialize_path_model(back) == text
    assert back.fingerprint == model.fingerprint

    p = tmp_path / "paths.json"
    save_path_model(model, p)
    again = load_path_model(p)
    assert serialize_path_model(again) == text
    # the reloaded model must still drive adaptation
    adapted = path_adapt(source, again, blobs(18, n=50), 1.0, CFG)
    assert adapted.provenance == "path-adapt"


def test_path_model_validation():
    with pytest.raises(InvalidArgumentError):
        deserialize_path_model("nope {")
    with pytest.raises(InvalidArgumentError):
        deserialize_path_model(json.dumps({"format_version": 9, "fingerprint": "x", "trees": []}))
    with pytest.raises(InvalidArgumentError):
        deserialize_path_model(json.dumps({"format_version": 1, "trees": []}))
    with pytest.raises(InvalidArgumentError):
        PathEntry((0, 3), (PrefixSvm(np.array([1.0]), 0.0),))
    with pytest.raises(InvalidArgumentError):
        PathEntry((0,), (PrefixSvm(np.array([1.0, 2.0]), 0.0),))
    with pytest.raises(InvalidArgumentError):
        PathModel("", [])
