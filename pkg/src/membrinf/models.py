"""Classifier zoo with a uniform trainable-predictor contract.

Four classical model families — CART decision trees, k-nearest neighbors,
multinomial logistic regression, and Gaussian naive Bayes — all exposing
``predict_proba`` returning a length-k probability vector. The same contract
serves targets, shadow models, and attack models. Fitted models are immutable
and safe to share across threads.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

PROBA_TOL = 1e-9


class ModelKind(str, Enum):
    DECISION_TREE = "dt"
    KNN = "knn"
    LOGISTIC_REGRESSION = "lr"
    NAIVE_BAYES = "nb"


MODEL_KINDS = (
    ModelKind.DECISION_TREE,
    ModelKind.KNN,
    ModelKind.LOGISTIC_REGRESSION,
    ModelKind.NAIVE_BAYES,
)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for all four model kinds (unused fields ignored).

    Decision tree: max_depth (None = unlimited), min_samples_split,
    pruning_alpha (cost-complexity). KNN: neighbor_count. Logistic regression:
    learning_rate, epochs, l2_lambda. Naive Bayes: variance_smoothing (None
    derives 1e-9 x the largest feature variance of the training set).
    """

    max_depth: int | None = None
    min_samples_split: int = 2
    pruning_alpha: float = 0.0
    neighbor_count: int = 5
    learning_rate: float = 0.1
    epochs: int = 500
    l2_lambda: float = 0.0
    variance_smoothing: float | None = None

    def __post_init__(self):
        if self.neighbor_count < 1:
            raise ValueError("neighbor_count must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.pruning_alpha < 0 or self.l2_lambda < 0:
            raise ValueError("penalty weights must be >= 0")
        if self.learning_rate <= 0 or self.epochs < 1:
            raise ValueError("learning_rate and epochs must be positive")


def assert_probability_vector(p, k=None, tol=PROBA_TOL):
    p = np.asarray(p)
    if k is not None and p.shape != (k,):
        raise AssertionError(f"expected length-{k} vector, got shape {p.shape}")
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise AssertionError("entries outside [0, 1]")
    if abs(float(p.sum()) - 1.0) > tol:
        raise AssertionError(f"sum {p.sum()} != 1")


class ClassifierModel:
    """Common fitted-model surface. Subclasses fill ``_proba_batch``."""

    kind: ModelKind

    def __init__(self, m, k):
        self.m = m
        self.k = k

    def predict_proba(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.m,):
            raise ValueError(f"expected {self.m} features, got shape {x.shape}")
        return self._proba_batch(x[None, :])[0]

    def predict_proba_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.m:
            raise ValueError(f"expected (n, {self.m}) matrix, got shape {X.shape}")
        return self._proba_batch(X)

    def predict(self, x):
        # argmax with ties broken toward the lowest class index
        return int(np.argmax(self.predict_proba(x)))

    def predict_batch(self, X):
        return np.argmax(self.predict_proba_batch(X), axis=1)

    def _proba_batch(self, X):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


def _check_train(train):
    if len(train) == 0:
        raise ValueError("training data is empty")
    if len(np.unique(train.labels)) < 2:
        raise ValueError("degenerate single-class dataset")


def fit(kind, config, train):
    """Train a model of the given kind on a Dataset."""
    kind = ModelKind(kind)
    _check_train(train)
    if kind is ModelKind.DECISION_TREE:
        return DecisionTree.fit(config, train)
    if kind is ModelKind.KNN:
        return KNearestNeighbors.fit(config, train)
    if kind is ModelKind.LOGISTIC_REGRESSION:
        return LogisticRegression.fit(config, train)
    return GaussianNaiveBayes.fit(config, train)


def accuracy(model, dataset):
    return float(np.mean(model.predict_batch(dataset.features) == dataset.labels))


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "counts")

    def __init__(self, counts, feature=None, threshold=None, left=None, right=None):
        self.counts = counts
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right

    @property
    def is_leaf(self):
        return self.feature is None


def _gini(counts, total):
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.sum(p * p))


def _best_split(X, y, k):
    """Best (feature, threshold) by Gini gain; thresholds at value midpoints.

    Deterministic: strict improvement required, scanning features left to
    right, candidate thresholds in ascending order.
    """
    n = len(y)
    parent_counts = np.bincount(y, minlength=k)
    parent_gini = _gini(parent_counts, n)
    best = None
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cum = np.cumsum(onehot[order], axis=0)
        cut = np.flatnonzero(xs[:-1] != xs[1:])
        if len(cut) == 0:
            continue
        nl = (cut + 1).astype(np.float64)
        nr = n - nl
        left = cum[cut]
        right = parent_counts[None, :] - left
        gini_l = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        gains = parent_gini - weighted
        best_i = int(np.argmax(gains))
        if gains[best_i] > 1e-12 and (best is None or gains[best_i] > best[0] + 1e-12):
            threshold = 0.5 * (xs[cut[best_i]] + xs[cut[best_i] + 1])
            best = (float(gains[best_i]), j, float(threshold))
    return best


class DecisionTree(ClassifierModel):
    """CART with Gini impurity; leaves store class-frequency vectors."""

    kind = ModelKind.DECISION_TREE

    def __init__(self, root, m, k):
        super().__init__(m, k)
        self.root = root

    @classmethod
    def fit(cls, config, train):
        X, y, k = train.features, train.labels, train.k

        def grow(idx, depth):
            counts = np.bincount(y[idx], minlength=k).astype(np.float64)
            node = _Node(counts)
            if (
                len(idx) < config.min_samples_split
                or (config.max_depth is not None and depth >= config.max_depth)
                or counts.max() == len(idx)
            ):
                return node
            found = _best_split(X[idx], y[idx], k)
            if found is None:
                return node
            _, j, threshold = found
            mask = X[idx, j] <= threshold
            node.feature = j
            node.threshold = threshold
            node.left = grow(idx[mask], depth + 1)
            node.right = grow(idx[~mask], depth + 1)
            return node

        root = grow(np.arange(len(y)), 0)
        if config.pruning_alpha > 0:
            root = _prune(root, config.pruning_alpha, float(len(y)))
        return cls(root, train.m, k)

    def _proba_batch(self, X):
        out = np.empty((len(X), self.k))
        for i, x in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.counts / node.counts.sum()
        return out

    def node_count(self):
        def count(node):
            return 1 if node.is_leaf else 1 + count(node.left) + count(node.right)
        return count(self.root)

    def to_dict(self):
        def enc(node):
            d = {"counts": node.counts.tolist()}
            if not node.is_leaf:
                d.update(
                    feature=node.feature,
                    threshold=node.threshold,
                    left=enc(node.left),
                    right=enc(node.right),
                )
            return d
        return {"kind": self.kind.value, "m": self.m, "k": self.k, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, d):
        def dec(nd):
            node = _Node(np.asarray(nd["counts"], dtype=np.float64))
            if "feature" in nd:
                node.feature = nd["feature"]
                node.threshold = nd["threshold"]
                node.left = dec(nd["left"])
                node.right = dec(nd["right"])
            return node
        return cls(dec(d["root"]), d["m"], d["k"])


def _prune(root, alpha, n_total):
    """Minimal cost-complexity pruning: collapse weakest links while the
    per-leaf error increase is <= alpha."""

    def resub_error(counts):
        total = counts.sum()
        return (total - counts.max()) / n_total

    def subtree_stats(node):
        # returns (subtree error, leaf count)
        if node.is_leaf:
            return resub_error(node.counts), 1
        el, ll = subtree_stats(node.left)
        er, lr = subtree_stats(node.right)
        return el + er, ll + lr

    def weakest(node):
        # returns (g, node) with the smallest g over internal nodes
        if node.is_leaf:
            return None
        err_sub, leaves = subtree_stats(node)
        g = (resub_error(node.counts) - err_sub) / max(leaves - 1, 1)
        best = (g, node)
        for child in (node.left, node.right):
            cand = weakest(child)
            if cand is not None and cand[0] < best[0]:
                best = cand
        return best

    while not root.is_leaf:
        g, node = weakest(root)
        if g > alpha:
            break
        node.feature = None
        node.threshold = None
        node.left = None
        node.right = None
    return root


# ---------------------------------------------------------------------------
# k-nearest neighbors
# ---------------------------------------------------------------------------

class KNearestNeighbors(ClassifierModel):
    """Unweighted Euclidean k-NN; distance ties resolve to the lower
    training index."""

    kind = ModelKind.KNN

    def __init__(self, X, y, k, neighbor_count):
        super().__init__(X.shape[1], k)
        self.train_X = X
        self.train_y = y
        self.neighbor_count = min(neighbor_count, len(y))

    @classmethod
    def fit(cls, config, train):
        return cls(
            train.features.copy(), train.labels.copy(), train.k, config.neighbor_count
        )

    def _proba_batch(self, X):
        d2 = (
            np.sum(X * X, axis=1)[:, None]
            - 2.0 * X @ self.train_X.T
            + np.sum(self.train_X * self.train_X, axis=1)[None, :]
        )
        nc = self.neighbor_count
        out = np.empty((len(X), self.k))
        for i in range(len(X)):
            nearest = np.argsort(d2[i], kind="stable")[:nc]
            votes = np.bincount(self.train_y[nearest], minlength=self.k)
            out[i] = votes / nc
        return out

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "m": self.m,
            "k": self.k,
            "neighbor_count": self.neighbor_count,
            "X": self.train_X.tolist(),
            "y": self.train_y.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["X"], dtype=np.float64),
            np.asarray(d["y"], dtype=np.int64),
            d["k"],
            d["neighbor_count"],
        )


# ---------------------------------------------------------------------------
# Multinomial logistic regression
# ---------------------------------------------------------------------------

def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def lr_gradient(weights, bias, X, y, k, l2_lambda=0.0):
    """Analytic gradient of mean cross-entropy plus (l2/2)*||W||^2.

    The bias is not regularized. With an empty batch the data term vanishes
    and the gradient reduces to (l2_lambda * weights, 0).
    """
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    n = len(X)
    if n == 0:
        return l2_lambda * weights, np.zeros_like(bias)
    X = np.asarray(X, dtype=np.float64)
    probs = softmax(X @ weights + bias)
    probs[np.arange(n), y] -= 1.0
    probs /= n
    grad_w = X.T @ probs + l2_lambda * weights
    grad_b = probs.sum(axis=0)
    return grad_w, grad_b


def lr_loss(weights, bias, X, y, l2_lambda=0.0):
    probs = softmax(X @ weights + bias)
    nll = -np.mean(np.log(probs[np.arange(len(y)), y] + 1e-300))
    return float(nll + 0.5 * l2_lambda * np.sum(weights * weights))


class LogisticRegression(ClassifierModel):
    """Softmax regression trained by full-batch gradient descent from zero
    initial weights (deterministic)."""

    kind = ModelKind.LOGISTIC_REGRESSION

    def __init__(self, weights, bias, loss_history=()):
        super().__init__(weights.shape[0], weights.shape[1])
        self.weights = weights
        self.bias = bias
        self.loss_history = tuple(loss_history)

    @classmethod
    def fit(cls, config, train):
        X, y, k = train.features, train.labels, train.k
        W = np.zeros((train.m, k))
        b = np.zeros(k)
        history = []
        for _ in range(config.epochs):
            history.append(lr_loss(W, b, X, y, config.l2_lambda))
            gw, gb = lr_gradient(W, b, X, y, k, config.l2_lambda)
            W = W - config.learning_rate * gw
            b = b - config.learning_rate * gb
        history.append(lr_loss(W, b, X, y, config.l2_lambda))
        return cls(W, b, history)

    def _proba_batch(self, X):
        return softmax(X @ self.weights + self.bias)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "m": self.m,
            "k": self.k,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["weights"], dtype=np.float64),
            np.asarray(d["bias"], dtype=np.float64),
        )


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

class GaussianNaiveBayes(ClassifierModel):
    """Per-class, per-feature Gaussians with a variance floor.

    Population statistics throughout, so duplicating the training set leaves
    the fitted model unchanged.
    """

    kind = ModelKind.NAIVE_BAYES

    def __init__(self, priors, means, variances):
        super().__init__(means.shape[1], means.shape[0])
        self.priors = priors
        self.means = means
        self.variances = variances

    @classmethod
    def fit(cls, config, train):
        X, y, k = train.features, train.labels, train.k
        eps = config.variance_smoothing
        if eps is None:
            eps = 1e-9 * max(float(X.var(axis=0).max()), 1e-12)
        priors = np.bincount(y, minlength=k) / len(y)
        means = np.zeros((k, train.m))
        variances = np.full((k, train.m), eps)
        for c in range(k):
            block = X[y == c]
            if len(block):
                means[c] = block.mean(axis=0)
                variances[c] = block.var(axis=0) + eps
        return cls(priors, means, variances)

    def _proba_batch(self, X):
        out = np.zeros((len(X), self.k))
        log_post = np.full((len(X), self.k), -np.inf)
        for c in range(self.k):
            if self.priors[c] <= 0:
                continue
            var = self.variances[c]
            ll = -0.5 * np.sum(
                np.log(2.0 * math.pi * var) + (X - self.means[c]) ** 2 / var, axis=1
            )
            log_post[:, c] = math.log(self.priors[c]) + ll
        present = self.priors > 0
        z = log_post[:, present]
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        out[:, present] = e / e.sum(axis=1, keepdims=True)
        return out

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "m": self.m,
            "k": self.k,
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["priors"], dtype=np.float64),
            np.asarray(d["means"], dtype=np.float64),
            np.asarray(d["variances"], dtype=np.float64),
        )


# ---------------------------------------------------------------------------
# Save / load
# ---------------------------------------------------------------------------

_CLASSES = {
    ModelKind.DECISION_TREE.value: DecisionTree,
    ModelKind.KNN.value: KNearestNeighbors,
    ModelKind.LOGISTIC_REGRESSION.value: LogisticRegression,
    ModelKind.NAIVE_BAYES.value: GaussianNaiveBayes,
}

FORMAT_VERSION = 1


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump({"format_version": FORMAT_VERSION, "model": model.to_dict()}, fh)


def load_model(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format: {payload.get('format_version')}")
    blob = payload["model"]
    return _CLASSES[blob["kind"]].from_dict(blob)
