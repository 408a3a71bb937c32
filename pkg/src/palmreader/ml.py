"""Classifiers over line feature vectors: random forest and linear SVM.

Both models are trained from scratch on 6-component feature vectors
labeled with line kinds. Trees use CART with Gini impurity over a
3-feature random subset per node; the SVM is 4 one-vs-rest binary
hinge-loss machines trained by stochastic subgradient descent on
standardized features. Everything is deterministic in its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptModelError, DatasetError
from .features import FEATURE_NAMES, FeatureVector, LineKind

N_FEATURES = len(FEATURE_NAMES)
N_CLASSES = len(LineKind)
FORMAT_VERSION = 1

DEFAULT_N_TREES = 100
DEFAULT_MAX_DEPTH = 12
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_EPOCHS = 50
DEFAULT_LAMBDA = 1e-3

# features drawn per split: ceil(sqrt(6))
_MTRY = math.ceil(math.sqrt(N_FEATURES))


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, 6) float64
    labels: np.ndarray  # (n,) int64, LineKind values
    ids: tuple

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise DatasetError(f"features must be (n, {N_FEATURES}), got {X.shape}")
        if y.shape != (X.shape[0],):
            raise DatasetError("labels must align with feature rows")
        if len(self.ids) != X.shape[0]:
            raise DatasetError("ids must align with feature rows")
        if X.size and not np.isfinite(X).all():
            raise DatasetError("features must be finite")
        if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
            raise DatasetError("labels must be LineKind values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            self.features[idx], self.labels[idx], tuple(self.ids[i] for i in idx)
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)


_DATASET_HEADER = ["id", "label"] + [f"f{i}" for i in range(N_FEATURES)]


def save_dataset(ds: LabeledDataset, path: str) -> None:
    lines = [",".join(_DATASET_HEADER)]
    for i in range(len(ds)):
        kind = LineKind(int(ds.labels[i]))
        feats = ",".join(repr(float(v)) for v in ds.features[i])
        lines.append(f"{ds.ids[i]},{kind.label},{feats}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise DatasetError(f"cannot write dataset {path}: {exc}") from exc


def load_dataset(path: str) -> LabeledDataset:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            rows = [line.rstrip("\n") for line in fh if line.strip()]
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    if not rows or rows[0].split(",") != _DATASET_HEADER:
        raise DatasetError(f"dataset {path} missing header {','.join(_DATASET_HEADER)}")
    ids, labels, feats = [], [], []
    for ln, row in enumerate(rows[1:], start=2):
        cols = row.split(",")
        if len(cols) != 2 + N_FEATURES:
            raise DatasetError(f"dataset {path} line {ln}: expected {2 + N_FEATURES} columns")
        ids.append(cols[0])
        try:
            labels.append(LineKind.from_label(cols[1]).value)
            feats.append([float(v) for v in cols[2:]])
        except ValueError as exc:
            raise DatasetError(f"dataset {path} line {ln}: {exc}") from exc
    return LabeledDataset(np.array(feats), np.array(labels), tuple(ids))


def train_test_split(ds: LabeledDataset, test_fraction: float = DEFAULT_TEST_FRACTION,
                     seed: int = 0):
    """Stratified split: per-class proportions within one sample, exact
    total test count, deterministic in seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    counts = ds.class_counts()
    for kind in LineKind:
        if counts[kind.value] == 1:
            raise DatasetError(f"class {kind.label} has fewer than 2 samples")

    rng = np.random.default_rng(seed)
    n = len(ds)
    target_total = int(round(n * test_fraction))
    exact = counts * test_fraction
    base = np.floor(exact).astype(int)
    base = np.minimum(base, np.maximum(counts - 1, 0))
    remainder = exact - base
    short = target_total - int(base.sum())
    order = np.argsort(-remainder, kind="stable")  # ties favor lower kind value
    take = base.copy()
    for k in order:
        if short <= 0:
            break
        if counts[k] - take[k] > 1:  # keep at least one sample in train
            take[k] += 1
            short -= 1

    test_idx = []
    for kind in LineKind:
        k = kind.value
        members = np.nonzero(ds.labels == k)[0]
        perm = rng.permutation(len(members))
        test_idx.extend(members[perm[: take[k]]])
    test_mask = np.zeros(n, dtype=bool)
    test_mask[test_idx] = True
    train = ds.subset(np.nonzero(~test_mask)[0])
    test = ds.subset(np.nonzero(test_mask)[0])
    return train, test


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True)
class ForestModel:
    # each tree is an (m, 8) float64 array of rows
    # [feature, threshold, left, right, c0, c1, c2, c3];
    # feature -1 marks a leaf carrying its training class counts
    trees: tuple
    n_trees: int
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.trees) != self.n_trees or self.n_trees < 1:
            raise ValueError("tree count must equal n_trees >= 1")
        for tree in self.trees:
            if tree.ndim != 2 or tree.shape[1] != 8:
                raise ValueError("malformed tree array")
            leaves = tree[tree[:, 0] < 0]
            internal = tree[tree[:, 0] >= 0]
            if internal.size and internal[:, 0].max() >= N_FEATURES:
                raise ValueError("split feature index out of range")
            if leaves.size == 0 or (leaves[:, 4:].sum(axis=1) < 1).any():
                raise ValueError("every leaf must record >= 1 training sample")

    @property
    def name(self) -> str:
        return "random_forest"


def _gini_best_split(vals: np.ndarray, onehot: np.ndarray):
    """Best (weighted child Gini, threshold) along one feature, or None.

    Thresholds are midpoints of consecutive distinct sorted values; the
    lowest threshold wins ties, so the search is deterministic."""
    order = np.argsort(vals, kind="stable")
    sv = vals[order]
    cum = np.cumsum(onehot[order], axis=0)
    n = sv.shape[0]
    cut = np.nonzero(sv[:-1] < sv[1:])[0]
    if cut.size == 0:
        return None
    nl = (cut + 1).astype(np.float64)
    nr = n - nl
    cl = cum[cut]
    cr = cum[-1] - cl
    gl = 1.0 - ((cl / nl[:, None]) ** 2).sum(axis=1)
    gr = 1.0 - ((cr / nr[:, None]) ** 2).sum(axis=1)
    w = (nl * gl + nr * gr) / n
    k = int(np.argmin(w))
    thr = (sv[cut[k]] + sv[cut[k] + 1]) / 2.0
    return float(w[k]), float(thr)


def _grow_tree(X: np.ndarray, y: np.ndarray, rng, max_depth: int) -> np.ndarray:
    onehot = np.eye(N_CLASSES)[y]
    rows = []

    def leaf(counts) -> int:
        rows.append([-1.0, 0.0, -1.0, -1.0, *counts.astype(np.float64)])
        return len(rows) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        counts = onehot[idx].sum(axis=0)
        if depth >= max_depth or idx.shape[0] < 2 or (counts > 0).sum() == 1:
            return leaf(counts)
        feats = rng.choice(N_FEATURES, size=_MTRY, replace=False)
        best = None
        for f in feats:
            found = _gini_best_split(X[idx, f], onehot[idx])
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(f), found[1])
        if best is None:
            return leaf(counts)
        _, f, thr = best
        left_idx = idx[X[idx, f] <= thr]
        right_idx = idx[X[idx, f] > thr]
        node_id = len(rows)
        rows.append([float(f), thr, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        rows[node_id][2] = float(build(left_idx, depth + 1))
        rows[node_id][3] = float(build(right_idx, depth + 1))
        return node_id

    build(np.arange(X.shape[0]), 0)
    return np.array(rows, dtype=np.float64)


def train_random_forest(train: LabeledDataset, n_trees: int = DEFAULT_N_TREES,
                        max_depth: int = DEFAULT_MAX_DEPTH, seed: int = 0) -> ForestModel:
    if len(train) == 0:
        raise DatasetError("cannot train a forest on an empty dataset")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X, y = train.features, train.labels
    n = X.shape[0]
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[boot], y[boot], rng, max_depth))
    return ForestModel(trees=tuple(trees), n_trees=n_trees)


def _tree_vote(tree: np.ndarray, x: np.ndarray) -> int:
    node = 0
    while tree[node, 0] >= 0:
        f = int(tree[node, 0])
        node = int(tree[node, 2]) if x[f] <= tree[node, 1] else int(tree[node, 3])
    return int(np.argmax(tree[node, 4:]))


# ---------------------------------------------------------------------------
# linear SVM


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray  # (4, 6)
    biases: np.ndarray  # (4,)
    mean: np.ndarray  # (6,)
    std: np.ndarray  # (6,)
    format_version: int = FORMAT_VERSION
    objective_history: tuple = field(default_factory=tuple, compare=False)

    def __post_init__(self):
        if self.weights.shape != (N_CLASSES, N_FEATURES):
            raise ValueError("weights must be (4, 6)")
        if self.biases.shape != (N_CLASSES,):
            raise ValueError("biases must be (4,)")
        if self.mean.shape != (N_FEATURES,) or self.std.shape != (N_FEATURES,):
            raise ValueError("standardization parameters must be (6,)")
        if (self.std <= 0).any():
            raise ValueError("std components must be positive")

    @property
    def name(self) -> str:
        return "linear_svm"

    def margins(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / self.std
        return self.weights @ z + self.biases


def _svm_objective(W, b, Z, targets, lam) -> float:
    """Sum over the 4 binary problems of lam/2 ||w||^2 + mean hinge.

    The bias is trained as an augmented regularized component, so it
    belongs in the L2 term."""
    total = 0.0
    for k in range(N_CLASSES):
        margins = targets[k] * (Z @ W[k] + b[k])
        hinge = np.maximum(0.0, 1.0 - margins).mean()
        total += 0.5 * lam * float(W[k] @ W[k] + b[k] * b[k]) + hinge
    return total


def train_linear_svm(train: LabeledDataset, epochs: int = DEFAULT_EPOCHS,
                     lam: float = DEFAULT_LAMBDA, seed: int = 0) -> SvmModel:
    if len(train) == 0:
        raise DatasetError("cannot train an SVM on an empty dataset")
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")

    X, y = train.features, train.labels
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    Z = (X - mean) / std
    n = Z.shape[0]
    # bias as an augmented constant feature, regularized with the weights;
    # an unregularized bias takes an eta = 1/lam jump on the first step
    Zb = np.hstack([Z, np.ones((n, 1))])
    targets = np.where(y[None, :] == np.arange(N_CLASSES)[:, None], 1.0, -1.0)

    W = np.zeros((N_CLASSES, N_FEATURES + 1))
    # the model is the running average of all iterates; its objective,
    # logged at each epoch boundary, damps monotonically
    W_run = np.zeros_like(W)
    rngs = [np.random.default_rng([seed, k]) for k in range(N_CLASSES)]
    steps = np.zeros(N_CLASSES)
    history = []

    for _ in range(epochs):
        for k in range(N_CLASSES):
            order = rngs[k].permutation(n)
            w, t = W[k], steps[k]
            run = W_run[k] * t
            tk = targets[k]
            for i in order:
                t += 1.0
                eta = 1.0 / (lam * t)
                if tk[i] * (w @ Zb[i]) < 1.0:
                    w = (1.0 - eta * lam) * w + eta * tk[i] * Zb[i]
                else:
                    w = (1.0 - eta * lam) * w
                run += w
            W[k], steps[k], W_run[k] = w, t, run / t
        history.append(
            _svm_objective(W_run[:, :N_FEATURES], W_run[:, N_FEATURES], Z, targets, lam)
        )

    return SvmModel(
        weights=W_run[:, :N_FEATURES].copy(),
        biases=W_run[:, N_FEATURES].copy(),
        mean=mean,
        std=std,
        objective_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# prediction and evaluation


def predict(model, fv: FeatureVector):
    """Classify one feature vector; returns (LineKind, confidence)."""
    x = fv.as_array() if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=np.float64)
    if x.shape != (N_FEATURES,) or not np.isfinite(x).all():
        raise ValueError("feature vector must be 6 finite components")
    if isinstance(model, ForestModel):
        votes = np.zeros(N_CLASSES)
        for tree in model.trees:
            votes[_tree_vote(tree, x)] += 1
        winner = int(np.argmax(votes))  # first max: Heart < Head < Life < Fate
        return LineKind(winner), float(votes[winner] / model.n_trees)
    if isinstance(model, SvmModel):
        margins = model.margins(x)
        winner = int(np.argmax(margins))
        shifted = margins - margins.max()
        soft = np.exp(shifted) / np.exp(shifted).sum()
        return LineKind(winner), float(soft[winner])
    raise TypeError(f"unsupported model type {type(model).__name__}")


@dataclass(frozen=True)
class EvalReport:
    model_name: str
    accuracy: float
    confusion: np.ndarray  # (4, 4), rows true kind, columns predicted
    precision: tuple
    recall: tuple
    n_test: int

    def __post_init__(self):
        c = np.asarray(self.confusion, dtype=np.int64)
        if c.shape != (N_CLASSES, N_CLASSES):
            raise ValueError("confusion must be 4x4")
        if int(c.sum()) != self.n_test or self.n_test < 1:
            raise ValueError("confusion total must equal n_test >= 1")
        if abs(float(np.trace(c)) / self.n_test - self.accuracy) > 1e-12:
            raise ValueError("accuracy must equal trace(confusion)/n_test")
        object.__setattr__(self, "confusion", c)

    def as_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "precision": list(self.precision),
            "recall": list(self.recall),
            "n_test": self.n_test,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        try:
            return cls(
                model_name=str(data["model_name"]),
                accuracy=float(data["accuracy"]),
                confusion=np.array(data["confusion"], dtype=np.int64),
                precision=tuple(float(v) for v in data["precision"]),
                recall=tuple(float(v) for v in data["recall"]),
                n_test=int(data["n_test"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed evaluation report: {exc}") from exc


def evaluate(model, test: LabeledDataset) -> EvalReport:
    if len(test) == 0:
        raise DatasetError("cannot evaluate on an empty dataset")
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for i in range(len(test)):
        kind, _ = predict(model, test.features[i])
        confusion[int(test.labels[i]), kind.value] += 1
    n = int(confusion.sum())
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    diag = np.diag(confusion)
    precision = tuple(float(diag[k] / col[k]) if col[k] else 0.0 for k in range(N_CLASSES))
    recall = tuple(float(diag[k] / row[k]) if row[k] else 0.0 for k in range(N_CLASSES))
    return EvalReport(
        model_name=model.name,
        accuracy=float(np.trace(confusion)) / n,
        confusion=confusion,
        precision=precision,
        recall=recall,
        n_test=n,
    )


@dataclass(frozen=True)
class ComparisonTable:
    report_a: EvalReport
    report_b: EvalReport
    winner: str

    _METRICS = ("accuracy", "correct", "n_test", "macro_precision", "macro_recall",
                "min_class_recall")

    def _metric(self, report: EvalReport, name: str) -> float:
        if name == "accuracy":
            return report.accuracy
        if name == "correct":
            return float(np.trace(report.confusion))
        if name == "n_test":
            return float(report.n_test)
        if name == "macro_precision":
            return float(np.mean(report.precision))
        if name == "macro_recall":
            return float(np.mean(report.recall))
        return float(min(report.recall))

    def as_text(self) -> str:
        a, b = self.report_a, self.report_b
        width = max(len(a.model_name), len(b.model_name), 12)
        lines = [f"{'metric':<18} {a.model_name:>{width}} {b.model_name:>{width}}"]
        for name in self._METRICS:
            va, vb = self._metric(a, name), self._metric(b, name)
            lines.append(f"{name:<18} {va:>{width}.4f} {vb:>{width}.4f}")
        for kind in LineKind:
            pa, pb = a.recall[kind.value], b.recall[kind.value]
            lines.append(f"{kind.label + '_recall':<18} {pa:>{width}.4f} {pb:>{width}.4f}")
        lines.append(f"winner: {self.winner}")
        return "\n".join(lines)

    def as_csv(self) -> str:
        a, b = self.report_a, self.report_b
        rows = [f"metric,{a.model_name},{b.model_name}"]
        for name in self._METRICS:
            rows.append(f"{name},{self._metric(a, name)!r},{self._metric(b, name)!r}")
        return "\n".join(rows) + "\n"


def compare_models(a: EvalReport, b: EvalReport) -> ComparisonTable:
    if a.n_test != b.n_test:
        raise DatasetError(
            f"reports compare different test sets ({a.n_test} vs {b.n_test} samples)"
        )
    if a.accuracy > b.accuracy:
        winner = a.model_name
    elif b.accuracy > a.accuracy:
        winner = b.model_name
    else:
        winner = "tie"
    return ComparisonTable(report_a=a, report_b=b, winner=winner)


# ---------------------------------------------------------------------------
# model persistence


def _fmt(v: float) -> str:
    return repr(float(v))


def save_model(model, path: str) -> None:
    lines = [f"palmmodel {FORMAT_VERSION}"]
    if isinstance(model, ForestModel):
        lines.append("kind forest")
        lines.append(f"n_trees {model.n_trees}")
        for t, tree in enumerate(model.trees):
            lines.append(f"tree {t} {tree.shape[0]}")
            for row in tree:
                f, thr, left, right = int(row[0]), row[1], int(row[2]), int(row[3])
                counts = " ".join(str(int(c)) for c in row[4:])
                lines.append(f"{f} {_fmt(thr)} {left} {right} {counts}")
    elif isinstance(model, SvmModel):
        lines.append("kind svm")
        lines.append("mean " + " ".join(_fmt(v) for v in model.mean))
        lines.append("std " + " ".join(_fmt(v) for v in model.std))
        for k in range(N_CLASSES):
            w = " ".join(_fmt(v) for v in model.weights[k])
            lines.append(f"class {k} {w} {_fmt(model.biases[k])}")
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _corrupt(path: str, reason: str) -> CorruptModelError:
    return CorruptModelError(f"model file {path}: {reason}")


def load_model(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise CorruptModelError(f"model file {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise _corrupt(path, "empty file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "palmmodel":
        raise _corrupt(path, "missing palmmodel header")
    try:
        version = int(head[1])
    except ValueError:
        raise _corrupt(path, f"bad version {head[1]!r}") from None
    if version != FORMAT_VERSION:
        raise _corrupt(path, f"format_version {version}, expected {FORMAT_VERSION}")
    if len(lines) < 2:
        raise _corrupt(path, "truncated after header")
    kind_line = lines[1].split()
    if len(kind_line) != 2 or kind_line[0] != "kind":
        raise _corrupt(path, "missing kind tag")

    try:
        if kind_line[1] == "forest":
            return _load_forest(path, lines[2:])
        if kind_line[1] == "svm":
            return _load_svm(path, lines[2:])
    except (ValueError, IndexError) as exc:
        raise _corrupt(path, f"malformed body: {exc}") from exc
    raise _corrupt(path, f"unknown model kind {kind_line[1]!r}")


def _load_forest(path: str, body) -> ForestModel:
    if not body or not body[0].startswith("n_trees "):
        raise _corrupt(path, "missing n_trees")
    n_trees = int(body[0].split()[1])
    trees = []
    pos = 1
    for t in range(n_trees):
        if pos >= len(body):
            raise _corrupt(path, f"truncated before tree {t}")
        head = body[pos].split()
        if len(head) != 3 or head[0] != "tree" or int(head[1]) != t:
            raise _corrupt(path, f"bad tree header at line {pos}")
        n_nodes = int(head[2])
        rows = []
        for row_line in body[pos + 1 : pos + 1 + n_nodes]:
            parts = row_line.split()
            if len(parts) != 8:
                raise _corrupt(path, "tree row must have 8 fields")
            rows.append([float(v) for v in parts])
        if len(rows) != n_nodes:
            raise _corrupt(path, f"tree {t} truncated")
        trees.append(np.array(rows, dtype=np.float64))
        pos += 1 + n_nodes
    if pos != len(body):
        raise _corrupt(path, "trailing content after last tree")
    try:
        return ForestModel(trees=tuple(trees), n_trees=n_trees)
    except ValueError as exc:
        raise _corrupt(path, str(exc)) from exc


def _load_svm(path: str, body) -> SvmModel:
    if len(body) != 2 + N_CLASSES:
        raise _corrupt(path, f"svm body must have {2 + N_CLASSES} lines")
    mean_parts = body[0].split()
    std_parts = body[1].split()
    if mean_parts[0] != "mean" or std_parts[0] != "std":
        raise _corrupt(path, "missing mean/std lines")
    mean = np.array([float(v) for v in mean_parts[1:]])
    std = np.array([float(v) for v in std_parts[1:]])
    W = np.zeros((N_CLASSES, N_FEATURES))
    b = np.zeros(N_CLASSES)
    for k in range(N_CLASSES):
        parts = body[2 + k].split()
        if len(parts) != 2 + N_FEATURES + 1 or parts[0] != "class" or int(parts[1]) != k:
            raise _corrupt(path, f"bad class row {k}")
        W[k] = [float(v) for v in parts[2 : 2 + N_FEATURES]]
        b[k] = float(parts[-1])
    try:
        return SvmModel(weights=W, biases=b, mean=mean, std=std)
    except ValueError as exc:
        raise _corrupt(path, str(exc)) from exc
