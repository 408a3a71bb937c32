import numpy as np
import pytest

from palmreader.errors import CorruptModelError, DatasetError
from palmreader.features import FeatureVector, LineKind
from palmreader.ml import (
    ComparisonTable,
    EvalReport,
    ForestModel,
    LabeledDataset,
    SvmModel,
    compare_models,
    evaluate,
    load_dataset,
    load_model,
    predict,
    save_dataset,
    save_model,
    train_linear_svm,
    train_random_forest,
    train_test_split,
)

# ---------------------------------------------------------------------------
# fixtures

# well-separated blob centers per class in feature space
_CENTERS = np.array(
    [
        [0.35, 0.10, 0.50, 0.33, 5.0, 0.05],
        [0.20, 0.10, 0.60, 0.50, 6.0, 0.10],
        [0.18, 0.18, 0.30, 0.60, 0.5, 1.50],
        [0.14, 0.05, 0.50, 0.70, 0.3, 1.57],
    ]
)


def blob_dataset(n_per_class=20, spread=0.01, seed=0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    feats, labels, ids = [], [], []
    for k in range(4):
        pts = _CENTERS[k] + rng.normal(0, spread, size=(n_per_class, 6))
        feats.append(pts)
        labels.extend([k] * n_per_class)
        ids.extend(f"c{k}_{i}" for i in range(n_per_class))
    return LabeledDataset(np.vstack(feats), np.array(labels), tuple(ids))


def leaf_tree(class_idx: int) -> np.ndarray:
    counts = [0.0] * 4
    counts[class_idx] = 5.0
    return np.array([[-1.0, 0.0, -1.0, -1.0, *counts]])


FV = FeatureVector(0.3, 0.1, 0.5, 0.5, 2.0, 1.0)


# ---------------------------------------------------------------------------
# LabeledDataset and CSV


def test_dataset_validation():
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((3, 5)), np.zeros(3, dtype=int), ("a", "b", "c"))
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((3, 6)), np.zeros(2, dtype=int), ("a", "b", "c"))
    with pytest.raises(DatasetError):
        LabeledDataset(np.full((1, 6), np.nan), np.zeros(1, dtype=int), ("a",))
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((1, 6)), np.array([7]), ("a",))


def test_dataset_csv_round_trip(tmp_path):
    ds = blob_dataset(5, seed=3)
    path = str(tmp_path / "data.csv")
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert loaded.ids == ds.ids
    assert (loaded.labels == ds.labels).all()
    assert np.array_equal(loaded.features, ds.features)


def test_dataset_csv_rejects_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,label,f0\nx,heart,1\n")
    with pytest.raises(DatasetError):
        load_dataset(str(path))
    path.write_text("id,label,f0,f1,f2,f3,f4,f5\nx,soul,1,2,3,4,5,6\n")
    with pytest.raises(DatasetError):
        load_dataset(str(path))


# ---------------------------------------------------------------------------
# train_test_split


def test_split_80_20():
    ds = blob_dataset(25)  # 100 samples
    train, test = train_test_split(ds, 0.2, seed=1)
    assert len(train) == 80 and len(test) == 20


def test_split_partition_exact():
    ds = blob_dataset(13, seed=5)
    train, test = train_test_split(ds, 0.3, seed=2)
    assert len(train) + len(test) == len(ds)
    assert set(train.ids) | set(test.ids) == set(ds.ids)
    assert set(train.ids) & set(test.ids) == set()


def test_split_stratified_exactly():
    ds = blob_dataset(10)  # 40 samples, 10 per class
    _, test = train_test_split(ds, 0.2, seed=7)
    assert list(test.class_counts()) == [2, 2, 2, 2]


def test_split_deterministic():
    ds = blob_dataset(12)
    a = train_test_split(ds, 0.25, seed=9)
    b = train_test_split(ds, 0.25, seed=9)
    assert a[0].ids == b[0].ids and a[1].ids == b[1].ids


def test_split_rejects_singleton_class():
    feats = np.vstack([_CENTERS, _CENTERS, _CENTERS[:1]])
    labels = np.array([0, 1, 2, 3, 0, 1, 2, 3, 0])
    labels = np.concatenate([labels[:-1], [3]])  # classes 0..2 have 2, class 3 has 3
    feats = np.vstack([_CENTERS[:3], _CENTERS[:3], _CENTERS[3:4]])
    labels = np.array([0, 1, 2, 0, 1, 2, 3])  # fate has a single sample
    ds = LabeledDataset(feats, labels, tuple(f"s{i}" for i in range(7)))
    with pytest.raises(DatasetError, match="fate"):
        train_test_split(ds, 0.3, seed=0)


def test_split_rejects_bad_fraction():
    ds = blob_dataset(5)
    for tf in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            train_test_split(ds, tf, seed=0)


# ---------------------------------------------------------------------------
# random forest


def test_forest_single_class_predicts_it():
    rng = np.random.default_rng(0)
    feats = _CENTERS[2] + rng.normal(0, 0.01, size=(12, 6))
    ds = LabeledDataset(feats, np.full(12, 2), tuple(f"x{i}" for i in range(12)))
    model = train_random_forest(ds, n_trees=7, seed=1)
    kind, conf = predict(model, FV)
    assert kind is LineKind.LIFE
    assert conf == 1.0


def test_single_deep_tree_memorizes_separable_data():
    ds = blob_dataset(5, spread=0.02, seed=11)  # 20 samples
    model = train_random_forest(ds, n_trees=1, max_depth=10_000, seed=3)
    report = evaluate(model, ds)
    # bootstrap may omit some rows, but blobs are wide apart, so the one
    # tree still classifies every training row
    assert report.accuracy == 1.0


def test_forest_training_deterministic(tmp_path):
    ds = blob_dataset(8, seed=2)
    a, b = tmp_path / "a.palmmodel", tmp_path / "b.palmmodel"
    save_model(train_random_forest(ds, n_trees=10, seed=42), str(a))
    save_model(train_random_forest(ds, n_trees=10, seed=42), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_forest_rejects_empty_and_bad_args():
    empty = LabeledDataset(np.zeros((0, 6)), np.zeros(0, dtype=int), ())
    with pytest.raises(DatasetError):
        train_random_forest(empty, n_trees=3, seed=0)
    with pytest.raises(ValueError):
        train_random_forest(blob_dataset(3), n_trees=0, seed=0)


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float((p * p).sum())


def walk_tree_checking_gini(tree: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Recompute per-node sample sets and verify weighted child Gini never
    exceeds the parent's impurity."""
    stack = [(0, np.arange(X.shape[0]))]
    checked = 0
    while stack:
        node, idx = stack.pop()
        feature = int(tree[node, 0])
        if feature < 0:
            continue
        thr = tree[node, 1]
        left = idx[X[idx, feature] <= thr]
        right = idx[X[idx, feature] > thr]
        assert len(left) > 0 and len(right) > 0
        parent_g = gini(np.bincount(y[idx], minlength=4))
        child_g = (
            len(left) * gini(np.bincount(y[left], minlength=4))
            + len(right) * gini(np.bincount(y[right], minlength=4))
        ) / len(idx)
        assert child_g <= parent_g + 1e-12
        checked += 1
        stack.append((int(tree[node, 2]), left))
        stack.append((int(tree[node, 3]), right))
    return checked


def test_gini_never_increases_on_shallow_trees():
    ds = blob_dataset(10, spread=0.06, seed=21)
    seed = 5
    n_trees = 6
    model = train_random_forest(ds, n_trees=n_trees, max_depth=3, seed=seed)
    children = np.random.SeedSequence(seed).spawn(n_trees)
    total_checked = 0
    for tree, child in zip(model.trees, children):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, len(ds), size=len(ds))
        total_checked += walk_tree_checking_gini(tree, ds.features[boot], ds.labels[boot])
    assert total_checked >= n_trees  # every tree split at least once


def test_forest_predict_matches_traversal_oracle():
    ds = blob_dataset(10, spread=0.05, seed=8)
    model = train_random_forest(ds, n_trees=5, max_depth=6, seed=13)

    def oracle(x):
        votes = [0, 0, 0, 0]
        for tree in model.trees:
            node = 0
            while tree[node][0] >= 0:
                f, thr = int(tree[node][0]), tree[node][1]
                node = int(tree[node][2]) if x[f] <= thr else int(tree[node][3])
            counts = list(tree[node][4:])
            votes[counts.index(max(counts))] += 1
        best = max(votes)
        winner = votes.index(best)
        return winner, best / len(model.trees)

    rng = np.random.default_rng(99)
    for _ in range(50):
        x = rng.uniform(0, 2, size=6)
        kind, conf = predict(model, x)
        ow, oc = oracle(x)
        assert kind.value == ow
        assert conf == pytest.approx(oc)


def test_forest_vote_fraction_6_of_10():
    trees = tuple([leaf_tree(0)] * 6 + [leaf_tree(1)] * 4)
    model = ForestModel(trees=trees, n_trees=10)
    kind, conf = predict(model, FV)
    assert kind is LineKind.HEART
    assert conf == pytest.approx(0.6)


def test_forest_tie_breaks_by_kind_order():
    trees = tuple([leaf_tree(3)] * 5 + [leaf_tree(1)] * 5)
    model = ForestModel(trees=trees, n_trees=10)
    kind, conf = predict(model, FV)
    assert kind is LineKind.HEAD  # head < fate in the fixed order
    assert conf == pytest.approx(0.5)


def test_forest_model_validation():
    with pytest.raises(ValueError):
        ForestModel(trees=(leaf_tree(0),), n_trees=2)
    bad_leaf = np.array([[-1.0, 0.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        ForestModel(trees=(bad_leaf,), n_trees=1)


# ---------------------------------------------------------------------------
# linear SVM


def test_svm_separates_blobs():
    ds = blob_dataset(15, spread=0.02, seed=4)
    model = train_linear_svm(ds, seed=1)
    report = evaluate(model, ds)
    assert report.accuracy == 1.0


def test_svm_objective_non_increasing_on_fixture():
    ds = blob_dataset(20, spread=0.05, seed=17)
    model = train_linear_svm(ds, epochs=30, seed=2)
    hist = model.objective_history
    assert len(hist) == 30
    for earlier, later in zip(hist, hist[1:]):
        assert later <= earlier + 1e-9


def test_svm_deterministic():
    ds = blob_dataset(10, seed=6)
    a = train_linear_svm(ds, seed=33)
    b = train_linear_svm(ds, seed=33)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.biases, b.biases)


def test_svm_rejects_empty_and_bad_args():
    empty = LabeledDataset(np.zeros((0, 6)), np.zeros(0, dtype=int), ())
    with pytest.raises(DatasetError):
        train_linear_svm(empty)
    with pytest.raises(ValueError):
        train_linear_svm(blob_dataset(3), lam=0.0)
    with pytest.raises(ValueError):
        train_linear_svm(blob_dataset(3), epochs=0)


def test_svm_argmax_invariant_under_margin_scaling():
    ds = blob_dataset(10, spread=0.05, seed=12)
    model = train_linear_svm(ds, seed=3)
    scaled = SvmModel(
        weights=model.weights * 7.5,
        biases=model.biases * 7.5,
        mean=model.mean,
        std=model.std,
    )
    rng = np.random.default_rng(0)
    for _ in range(40):
        x = rng.uniform(0, 2, size=6)
        assert predict(model, x)[0] == predict(scaled, x)[0]


def test_svm_constant_feature_gets_unit_std():
    feats = np.tile(_CENTERS[0], (8, 1))
    feats = np.vstack([feats, np.tile(_CENTERS[1], (8, 1))])
    feats[:, 5] = 1.234  # constant column
    ds = LabeledDataset(feats, np.array([0] * 8 + [1] * 8), tuple(f"i{i}" for i in range(16)))
    model = train_linear_svm(ds, epochs=5, seed=0)
    assert model.std[5] == 1.0


def test_predict_rejects_non_finite():
    model = ForestModel(trees=(leaf_tree(0),), n_trees=1)
    with pytest.raises(ValueError):
        predict(model, np.array([np.nan, 0, 0, 0, 0, 0]))


# ---------------------------------------------------------------------------
# evaluate / compare


def test_evaluate_all_correct():
    ds = blob_dataset(5, spread=0.01, seed=14)
    model = train_random_forest(ds, n_trees=15, seed=2)
    report = evaluate(model, ds)
    assert report.accuracy == 1.0
    assert (report.confusion == np.diag(np.diag(report.confusion))).all()
    assert report.precision == (1.0, 1.0, 1.0, 1.0)
    assert report.recall == (1.0, 1.0, 1.0, 1.0)


def test_evaluate_all_wrong_and_partial():
    model = ForestModel(trees=(leaf_tree(0),), n_trees=1)  # always heart
    wrong = LabeledDataset(
        np.tile(_CENTERS[1], (4, 1)), np.full(4, 1), ("a", "b", "c", "d")
    )
    report = evaluate(model, wrong)
    assert report.accuracy == 0.0
    mixed = LabeledDataset(
        np.tile(_CENTERS[0], (4, 1)), np.array([0, 0, 0, 1]), ("a", "b", "c", "d")
    )
    report = evaluate(model, mixed)
    assert report.accuracy == 0.75
    # nothing predicted as head/life/fate: precision falls back to 0
    assert report.precision[1] == 0.0


def test_evaluate_empty_rejected():
    model = ForestModel(trees=(leaf_tree(0),), n_trees=1)
    empty = LabeledDataset(np.zeros((0, 6)), np.zeros(0, dtype=int), ())
    with pytest.raises(DatasetError):
        evaluate(model, empty)


def test_eval_report_accuracy_consistency_enforced():
    with pytest.raises(ValueError):
        EvalReport(
            model_name="x",
            accuracy=0.9,
            confusion=np.eye(4, dtype=int) * 2,
            precision=(1, 1, 1, 1),
            recall=(1, 1, 1, 1),
            n_test=8,
        )


def test_eval_report_dict_round_trip():
    report = EvalReport(
        model_name="random_forest",
        accuracy=0.875,
        confusion=np.array([[3, 1, 0, 0], [0, 4, 0, 0], [1, 0, 3, 0], [0, 0, 0, 4]]),
        precision=(0.75, 0.8, 1.0, 1.0),
        recall=(0.75, 1.0, 0.75, 1.0),
        n_test=16,
    )
    again = EvalReport.from_dict(report.as_dict())
    assert again.as_dict() == report.as_dict()


def fixed_report(name, correct_per_class, wrong_to=1):
    confusion = np.zeros((4, 4), dtype=int)
    for k in range(4):
        confusion[k, k] = correct_per_class[k]
        confusion[k, (k + wrong_to) % 4] += 10 - correct_per_class[k]
    n = int(confusion.sum())
    diag = np.diag(confusion)
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    return EvalReport(
        model_name=name,
        accuracy=float(diag.sum()) / n,
        confusion=confusion,
        precision=tuple(float(diag[k] / col[k]) if col[k] else 0.0 for k in range(4)),
        recall=tuple(float(diag[k] / row[k]) if row[k] else 0.0 for k in range(4)),
        n_test=n,
    )


def test_compare_picks_higher_accuracy():
    a = fixed_report("random_forest", [10, 10, 9, 10])
    b = fixed_report("linear_svm", [9, 9, 9, 9])
    table = compare_models(a, b)
    assert table.winner == "random_forest"
    assert "winner: random_forest" in table.as_text()


def test_compare_tie():
    a = fixed_report("random_forest", [9, 9, 9, 9])
    b = fixed_report("linear_svm", [9, 9, 9, 9])
    assert compare_models(a, b).winner == "tie"


def test_compare_csv_row_count():
    a = fixed_report("random_forest", [10, 10, 9, 10])
    b = fixed_report("linear_svm", [9, 9, 9, 9])
    csv_text = compare_models(a, b).as_csv().strip()
    assert len(csv_text.split("\n")) == 1 + 6
    assert csv_text.startswith("metric,random_forest,linear_svm")


def test_compare_rejects_mismatched_n_test():
    a = fixed_report("random_forest", [10, 10, 10, 10])
    b = fixed_report("linear_svm", [9, 9, 9, 9])
    bigger = EvalReport(
        model_name="linear_svm",
        accuracy=b.accuracy,
        confusion=b.confusion * 2,
        precision=b.precision,
        recall=b.recall,
        n_test=b.n_test * 2,
    )
    with pytest.raises(DatasetError):
        compare_models(a, bigger)


# ---------------------------------------------------------------------------
# persistence


def test_forest_round_trip_predictions(tmp_path):
    ds = blob_dataset(8, seed=31)
    model = train_random_forest(ds, n_trees=9, seed=5)
    path = str(tmp_path / "f.palmmodel")
    save_model(model, path)
    loaded = load_model(path)
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = rng.uniform(0, 2, size=6)
        assert predict(model, x) == predict(loaded, x)


def test_svm_round_trip_predictions(tmp_path):
    ds = blob_dataset(8, seed=32)
    model = train_linear_svm(ds, seed=5)
    path = str(tmp_path / "s.palmmodel")
    save_model(model, path)
    loaded = load_model(path)
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = rng.uniform(0, 2, size=6)
        assert predict(model, x) == predict(loaded, x)


def test_load_rejects_truncated(tmp_path):
    ds = blob_dataset(4, seed=1)
    model = train_random_forest(ds, n_trees=3, seed=1)
    path = tmp_path / "t.palmmodel"
    save_model(model, str(path))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[: len(lines) // 2]))
    with pytest.raises(CorruptModelError, match="t.palmmodel"):
        load_model(str(path))


def test_load_rejects_unknown_version(tmp_path):
    path = tmp_path / "v.palmmodel"
    path.write_text("palmmodel 99\nkind svm\n")
    with pytest.raises(CorruptModelError, match="99"):
        load_model(str(path))
    with pytest.raises(CorruptModelError, match="expected 1"):
        load_model(str(path))


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "g.palmmodel"
    path.write_text("not a model\n")
    with pytest.raises(CorruptModelError):
        load_model(str(path))
    path.write_text("palmmodel 1\nkind hologram\n")
    with pytest.raises(CorruptModelError, match="hologram"):
        load_model(str(path))


def test_load_missing_file(tmp_path):
    with pytest.raises(CorruptModelError):
        load_model(str(tmp_path / "absent.palmmodel"))
