"""Benchmark harness: domain generators, shift map, detection metrics,
stratified subsampling, and the experiment protocol."""
import numpy as np
import pytest

from forestadapt import (
    Dataset,
    DegenerateDataError,
    DomainSpec,
    ExperimentConfig,
    FeatureSelector,
    Forest,
    ForestConfig,
    InvalidArgumentError,
    LeafNode,
    MetricsReport,
    ShiftSpec,
    SplitNode,
    SplitParams,
    Tree,
    evaluate,
    forest_posterior_batch,
    generate_domain_pair,
    run_experiment,
    stratified_subsample,
    train_forest,
)
from forestadapt.bench import FPR_TARGETS, _rank_auc
from forestadapt.optim import SvmConfig

FAST = SvmConfig(reg_cost=0.1, tol=1e-3)


def small_cfg(**kw):
    base = dict(n_trees=6, max_depth=4, min_samples=6, K=8, svm=FAST, seed=5)
    base.update(kw)
    return ForestConfig(**base)


# ------------------------------------------------------------------ domains

def test_domain_spec_validation():
    ok = dict(family="ring", dim=3, n_source=10, n_target_train=10, n_target_test=10)
    DomainSpec(**ok)
    with pytest.raises(InvalidArgumentError):
        DomainSpec(**{**ok, "family": "spiral"})
    with pytest.raises(InvalidArgumentError):
        DomainSpec(**{**ok, "dim": 1})
    with pytest.raises(InvalidArgumentError):
        DomainSpec(**{**ok, "prior_pos": 1.0})
    with pytest.raises(InvalidArgumentError):
        DomainSpec(**{**ok, "noise": 0.0})
    with pytest.raises(InvalidArgumentError):
        DomainSpec(**{**ok, "n_target_test": 0})
    with pytest.raises(InvalidArgumentError):
        DomainSpec(**{**ok, "shift": ShiftSpec(translation=(1.0,))})
    with pytest.raises(InvalidArgumentError):
        ShiftSpec(scale=0.0)
    with pytest.raises(InvalidArgumentError):
        ShiftSpec(rotation=float("nan"))


@pytest.mark.parametrize("family", ["gaussian-blobs", "two-moons", "ring"])
def test_generation_is_deterministic_and_labels_are_preshift(family):
    shift = ShiftSpec(rotation=0.8, translation=(0.5, -1.0, 2.0), scale=1.5)
    spec = DomainSpec(family=family, dim=3, n_source=80, n_target_train=90,
                      n_target_test=70, shift=shift, seed=13)
    src, pool, test = generate_domain_pair(spec)
    src2, pool2, test2 = generate_domain_pair(spec)
    for a, b in ((src, src2), (pool, pool2), (test, test2)):
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert (src.X.shape, pool.X.shape, test.X.shape) == ((80, 3), (90, 3), (70, 3))

    # the shifted draw must be exactly the unshifted draw pushed through the
    # feature map, with labels untouched
    plain = DomainSpec(family=family, dim=3, n_source=80, n_target_train=90,
                       n_target_test=70, seed=13)
    _, pool0, test0 = generate_domain_pair(plain)
    c, s = np.cos(0.8), np.sin(0.8)
    R = np.array([[c, -s], [s, c]])
    for shifted, base in ((pool, pool0), (test, test0)):
        assert np.array_equal(shifted.y, base.y)
        expect = base.X.copy()
        expect[:, :2] = expect[:, :2] @ R.T
        expect = expect * 1.5 + np.array([0.5, -1.0, 2.0])
        assert np.allclose(shifted.X, expect, atol=1e-12)

    other = generate_domain_pair(DomainSpec(family=family, dim=3, n_source=80,
                                            n_target_train=90, n_target_test=70,
                                            shift=shift, seed=14))
    assert not np.array_equal(other[0].X, src.X)


def test_zero_shift_keeps_source_and_target_exchangeable():
    spec = DomainSpec(family="gaussian-blobs", dim=3, n_source=700,
                      n_target_train=700, n_target_test=600, seed=2)
    src_data, pool, test = generate_domain_pair(spec)
    cfg = small_cfg(n_trees=8)
    src = evaluate(train_forest(src_data, cfg), test)
    tar = evaluate(train_forest(pool, cfg), test)
    assert abs(src.avg_miss_rate - tar.avg_miss_rate) < 0.08
    assert abs(src.auc - tar.auc) < 0.05


def test_rotation_shift_degrades_the_source_model():
    spec = DomainSpec(family="gaussian-blobs", dim=3, noise=0.9, n_source=700,
                      n_target_train=700, n_target_test=600,
                      shift=ShiftSpec(rotation=1.1), seed=4)
    src_data, pool, test = generate_domain_pair(spec)
    cfg = small_cfg(n_trees=8)
    src = evaluate(train_forest(src_data, cfg), test)
    tar = evaluate(train_forest(pool, cfg), test)
    assert src.avg_miss_rate > tar.avg_miss_rate + 0.05
    assert src.auc < tar.auc


# ------------------------------------------------------------------ metrics

def leaf_forest(posterior, cfg=None):
    cfg = cfg or small_cfg()
    return Forest([Tree([LeafNode(posterior, 10)], 0, 1) for _ in range(2)], cfg)


def step_forest(cut, p_left, p_right):
    """One axis split on feature 0: x0 >= cut goes left."""
    params = SplitParams(FeatureSelector((0,)), np.array([1.0]), -float(cut))
    tree = Tree([SplitNode(params, 1, 2), LeafNode(p_left, 5), LeafNode(p_right, 5)], 0, 2)
    return Forest([tree], small_cfg())


def test_perfect_separation_scores_zero_miss_everywhere():
    X = np.array([[2.0], [3.0], [-2.0], [-3.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    rep = evaluate(step_forest(0.0, 0.9, 0.1), Dataset(X, y))
    assert rep.miss_rates == (0.0,) * 11
    assert rep.avg_miss_rate == 0.0
    assert rep.auc == 1.0
    assert rep.error_rate == 0.0


def test_constant_scorer_has_half_auc_and_collapsed_sweep():
    X = np.zeros((10, 1))
    y = np.array([1.0] * 4 + [-1.0] * 6)
    rep = evaluate(leaf_forest(0.7), Dataset(X, y))
    assert rep.auc == 0.5
    # the only achievable points are (fpr 0, miss 1) and (fpr 1, miss 0);
    # every target rounds up to fpr 1
    assert rep.miss_rates == (0.0,) * 11
    assert rep.error_rate == 0.6     # everything called positive at 0.7 >= 0.5


def test_sweep_against_brute_force_oracle():
    spec = DomainSpec(family="two-moons", dim=2, noise=1.2, n_source=300,
                      n_target_train=300, n_target_test=240, seed=9)
    src_data, _, test = generate_domain_pair(spec)
    forest = train_forest(src_data, small_cfg())
    rep = evaluate(forest, test)

    scores = forest_posterior_batch(forest, test.X)
    pos = scores[test.y > 0]
    neg = scores[test.y < 0]
    for target, got in zip(FPR_TARGETS, rep.miss_rates):
        best = None
        for t in list(np.unique(scores)) + [scores.max() + 1.0]:
            fpr = float(np.mean(neg >= t))
            miss = float(np.mean(pos < t))
            if fpr >= target and (best is None or (fpr, miss) < best):
                best = (fpr, miss)
        assert got == best[1]
    assert rep.avg_miss_rate == pytest.approx(np.mean(rep.miss_rates), abs=1e-15)


def test_rank_auc_handles_ties_by_midrank():
    assert _rank_auc(np.array([0.8, 0.6]), np.array([0.6, 0.2])) == 0.875
    assert _rank_auc(np.array([1.0, 1.0]), np.array([0.0])) == 1.0
    assert _rank_auc(np.array([0.3]), np.array([0.3, 0.3])) == 0.5


def test_better_model_wins_on_both_auc_and_avg_miss():
    spec = DomainSpec(family="gaussian-blobs", dim=3, noise=0.8, n_source=500,
                      n_target_train=500, n_target_test=500,
                      shift=ShiftSpec(rotation=1.2), seed=6)
    src_data, pool, test = generate_domain_pair(spec)
    weak = evaluate(train_forest(src_data, small_cfg(n_trees=2, max_depth=2)), test)
    strong = evaluate(train_forest(pool, small_cfg(n_trees=10)), test)
    assert strong.auc > weak.auc + 0.02
    assert strong.avg_miss_rate < weak.avg_miss_rate


def test_evaluate_rejects_single_class_test_sets():
    data = Dataset(np.zeros((4, 1)), np.ones(4))
    with pytest.raises(DegenerateDataError):
        evaluate(leaf_forest(0.5), data)


def test_metrics_report_validation():
    with pytest.raises(InvalidArgumentError):
        MetricsReport(1.2, (1.2,) * 11, 0.5, 0.1)
    with pytest.raises(InvalidArgumentError):
        MetricsReport(0.9, (0.1,) * 11, 0.5, 0.1)
    rep = MetricsReport(0.1, (0.1,) * 11, 0.5, 0.1)
    assert rep.to_dict()["miss_rates"] == [0.1] * 11


# -------------------------------------------------------------- subsampling

def test_stratified_subsample_counts_and_determinism():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 2))
    y = np.array([1.0] * 30 + [-1.0] * 70)
    S = Dataset(X, y)
    sub = stratified_subsample(S, 0.1, seed=3)
    assert sub.class_counts() == (3, 7)
    again = stratified_subsample(S, 0.1, seed=3)
    assert np.array_equal(sub.X, again.X) and np.array_equal(sub.y, again.y)
    assert not np.array_equal(sub.X, stratified_subsample(S, 0.1, seed=4).X)
    # round half up per class: 0.05 * 30 = 1.5 -> 2
    assert stratified_subsample(S, 0.05, seed=0).class_counts() == (2, 4)
    # rows keep their original order, so stacking is reproducible
    full = stratified_subsample(S, 1.0, seed=9)
    assert np.array_equal(full.X, X) and np.array_equal(full.y, y)


def test_stratified_subsample_errors():
    S = Dataset(np.zeros((103, 1)), np.array([1.0] * 3 + [-1.0] * 100))
    with pytest.raises(InvalidArgumentError):
        stratified_subsample(S, 0.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        stratified_subsample(S, 1.5, seed=0)
    # 0.05 * 3 rounds to zero positives on every attempt
    with pytest.raises(DegenerateDataError):
        stratified_subsample(S, 0.05, seed=0)


# ----------------------------------------------------------------- protocol

def tiny_experiment(**kw):
    spec = DomainSpec(family="gaussian-blobs", dim=3, n_source=240,
                      n_target_train=240, n_target_test=160,
                      shift=ShiftSpec(rotation=0.9), seed=11)
    base = dict(name="tiny", spec=spec, forest=small_cfg(n_trees=4, K=6),
                target_fractions=(0.2,), methods=("node", "tree"),
                n_repeats=2, node_c2=10.0, tree_ratio=0.5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_config_validation():
    tiny_experiment()
    with pytest.raises(InvalidArgumentError):
        tiny_experiment(name="")
    with pytest.raises(InvalidArgumentError):
        tiny_experiment(target_fractions=())
    with pytest.raises(InvalidArgumentError):
        tiny_experiment(target_fractions=(0.0,))
    with pytest.raises(InvalidArgumentError):
        tiny_experiment(n_repeats=0)
    with pytest.raises(InvalidArgumentError):
        tiny_experiment(methods=("node", "magic"))


def test_run_experiment_outputs_are_byte_identical_across_runs():
    cfg = tiny_experiment()
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()
    assert a.columns == ("Src", "Tar100%", "TarX%", "Node-Adapt", "Tree-Adapt")


def test_run_experiment_tabulates_every_cell():
    cfg = tiny_experiment(target_fractions=(0.2, 0.1))
    report = run_experiment(cfg)
    csv = report.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "experiment,Src,Tar100%,TarX%,Node-Adapt,Tree-Adapt"
    assert lines[1].startswith("tiny@X=20%,") and lines[2].startswith("tiny@X=10%,")
    assert all(len(line.split(",")) == 6 for line in lines[1:])
    for frac in (0.2, 0.1):
        for col in report.columns:
            cell = report.results[(f"X={100 * frac:g}%", col)]
            assert len(cell) == 2
            assert 0.0 <= report.mean_amr(frac, col) <= 1.0
    # the mean lands in the CSV cell verbatim
    first_cell = lines[1].split(",")[1]
    assert first_cell.split("±")[0] == f"{report.mean_amr(0.2, 'Src'):.4f}"
