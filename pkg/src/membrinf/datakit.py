"""Dataset representation, ingestion, synthesis, splitting, and metrics.

All values are immutable after construction (arrays are frozen), so datasets
can be shared read-only across concurrent experiment workers. Every generator
takes an explicit seed; nothing touches global RNG state.
"""

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .seeding import derive_rng

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

MISSING_TOKEN = "?"


class CsvParseError(ValueError):
    """Malformed CSV input; carries the 1-based line number."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def _frozen(a, dtype):
    out = np.ascontiguousarray(np.asarray(a, dtype=dtype))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Labeled tabular instances: features in [0,1]^m, labels in [0, k).

    ``feature_kinds`` tags each column as continuous or categorical-encoded;
    one-hot columns produced by ingestion are tagged categorical.
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    feature_kinds: tuple = ()

    def __post_init__(self):
        feats = _frozen(self.features, np.float64)
        labels = _frozen(self.labels, np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must align with feature rows")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError("labels must lie in [0, k)")
        if feats.size and (feats.min() < -1e-12 or feats.max() > 1 + 1e-12):
            raise ValueError("features must be normalized to [0, 1]")
        kinds = tuple(self.feature_kinds) or (CONTINUOUS,) * feats.shape[1]
        if len(kinds) != feats.shape[1]:
            raise ValueError("feature_kinds must have one tag per column")
        object.__setattr__(self, "feature_kinds", kinds)

    def __len__(self):
        return self.features.shape[0]

    @property
    def m(self):
        return self.features.shape[1]

    def take(self, indices):
        """Sub-dataset holding the given rows (k and kinds preserved)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.k, self.feature_kinds)

    def classes_present(self):
        return np.unique(self.labels)


def concat(datasets):
    """Row-wise union of datasets sharing m, k, and feature kinds."""
    first = datasets[0]
    for d in datasets[1:]:
        if d.m != first.m or d.k != first.k:
            raise ValueError("datasets must share m and k")
    feats = np.concatenate([d.features for d in datasets])
    labels = np.concatenate([d.labels for d in datasets])
    return Dataset(feats, labels, first.k, first.feature_kinds)


def replace_features(d, features):
    """Same labels/k/kinds with a new feature matrix (e.g. after noising)."""
    return Dataset(features, d.labels, d.k, d.feature_kinds)


# ---------------------------------------------------------------------------
# Feature statistics (the attacker-knowledge summary)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureStats:
    """Per-feature descriptors plus the class prior.

    Continuous features carry (mean, std, min, max); categorical-encoded
    features carry a value-frequency table. ``per_class`` optionally holds one
    FeatureStats per class label.
    """

    kinds: tuple
    mean: np.ndarray
    std: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    levels: tuple          # per feature: array of observed values (categorical) or None
    level_freqs: tuple     # matching frequency arrays, each summing to 1
    class_prior: np.ndarray
    per_class: dict = field(default=None)

    def __post_init__(self):
        for a in (self.mean, self.std, self.minimum, self.maximum, self.class_prior):
            np.asarray(a).setflags(write=False)
        if np.any(self.std < 0):
            raise ValueError("standard deviations must be >= 0")
        for freqs in self.level_freqs:
            if freqs is not None and abs(float(np.sum(freqs)) - 1.0) > 1e-9:
                raise ValueError("frequency tables must sum to 1")

    @property
    def m(self):
        return len(self.kinds)

    @property
    def k(self):
        return len(self.class_prior)


def compute_feature_stats(d, with_per_class=False):
    """Population-level summary of a dataset, feature by feature."""
    feats = d.features
    kinds = d.feature_kinds
    levels, level_freqs = [], []
    for j, kind in enumerate(kinds):
        if kind == CATEGORICAL:
            vals, counts = np.unique(feats[:, j], return_counts=True)
            levels.append(vals)
            level_freqs.append(counts / counts.sum())
        else:
            levels.append(None)
            level_freqs.append(None)
    prior = np.bincount(d.labels, minlength=d.k) / max(len(d), 1)
    per_class = None
    if with_per_class:
        per_class = {}
        for c in d.classes_present():
            per_class[int(c)] = compute_feature_stats(
                d.take(np.flatnonzero(d.labels == c)), with_per_class=False
            )
    return FeatureStats(
        kinds=tuple(kinds),
        mean=feats.mean(axis=0),
        std=feats.std(axis=0),
        minimum=feats.min(axis=0),
        maximum=feats.max(axis=0),
        levels=tuple(levels),
        level_freqs=tuple(level_freqs),
        class_prior=prior,
        per_class=per_class,
    )


def sample_from_stats(stats, n, rng):
    """Draw n feature vectors, each feature independently from its descriptor."""
    out = np.empty((n, stats.m))
    for j, kind in enumerate(stats.kinds):
        if kind == CATEGORICAL:
            if stats.levels[j] is None:
                raise ValueError(f"missing descriptor for feature {j}")
            out[:, j] = rng.choice(stats.levels[j], size=n, p=stats.level_freqs[j])
        else:
            draw = rng.normal(stats.mean[j], stats.std[j], size=n)
            out[:, j] = np.clip(draw, stats.minimum[j], stats.maximum[j])
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column typing for ingestion: label column plus per-column kinds.

    Columns absent from ``kinds`` default to continuous.
    """

    label: str
    kinds: dict = field(default_factory=dict)


def load_csv(path, schema):
    """Load an RFC-4180-style file into a normalized Dataset.

    Categorical columns are one-hot encoded (category order sorted); continuous
    columns are min-max scaled to [0,1]. A constant continuous column scales to
    0.0 for every row. The missing-value token "?" is rejected.
    """
    with open(path, newline="") as fh:
        return _parse_csv(fh, schema)


def _parse_csv(fh, schema):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("empty file, header row required", 1)
    if schema.label not in header:
        raise CsvParseError(f"label column {schema.label!r} not in header", 1)
    label_idx = header.index(schema.label)
    arity = len(header)

    rows = []
    for line_number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != arity:
            raise CsvParseError(
                f"expected {arity} fields, got {len(row)}", line_number
            )
        if any(cell.strip() == MISSING_TOKEN for cell in row):
            raise CsvParseError("missing value token '?' rejected", line_number)
        rows.append((line_number, [cell.strip() for cell in row]))
    if not rows:
        raise CsvParseError("no data rows", 2)

    feature_cols = [c for c in header if c != schema.label]
    col_kind = {c: schema.kinds.get(c, CONTINUOUS) for c in feature_cols}

    # First pass: collect values per column, validate numerics.
    raw = {c: [] for c in feature_cols}
    labels_raw = []
    for line_number, row in rows:
        for c in feature_cols:
            cell = row[header.index(c)]
            if col_kind[c] == CONTINUOUS:
                try:
                    raw[c].append(float(cell))
                except ValueError:
                    raise CsvParseError(
                        f"non-numeric value {cell!r} in continuous column {c!r}",
                        line_number,
                    )
            else:
                raw[c].append(cell)
        labels_raw.append(row[label_idx])

    distinct_labels = sorted(set(labels_raw))
    if len(distinct_labels) < 2:
        raise ValueError("degenerate single-class dataset")
    label_index = {v: i for i, v in enumerate(distinct_labels)}
    labels = np.array([label_index[v] for v in labels_raw], dtype=np.int64)

    blocks, kinds = [], []
    for c in feature_cols:
        if col_kind[c] == CONTINUOUS:
            col = np.asarray(raw[c], dtype=np.float64)
            lo, hi = col.min(), col.max()
            scaled = np.zeros_like(col) if hi == lo else (col - lo) / (hi - lo)
            blocks.append(scaled[:, None])
            kinds.append(CONTINUOUS)
        else:
            categories = sorted(set(raw[c]))
            onehot = np.zeros((len(raw[c]), len(categories)))
            cat_index = {v: i for i, v in enumerate(categories)}
            for i, v in enumerate(raw[c]):
                onehot[i, cat_index[v]] = 1.0
            blocks.append(onehot)
            kinds.extend([CATEGORICAL] * len(categories))

    features = np.hstack(blocks)
    return Dataset(features, labels, len(distinct_labels), tuple(kinds))


def loads_csv(text, schema):
    """load_csv over an in-memory string (test convenience)."""
    return _parse_csv(io.StringIO(text), schema)


# ---------------------------------------------------------------------------
# Dataset serialization: one-line JSON header, then newline-delimited records
# ---------------------------------------------------------------------------

def save_dataset(d, path):
    with open(path, "w") as fh:
        header = {"m": d.m, "k": d.k, "feature_kinds": list(d.feature_kinds)}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row, label in zip(d.features, d.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def load_dataset(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        feats, labels = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            feats.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
    features = np.asarray(feats, dtype=np.float64).reshape(len(labels), header["m"])
    return Dataset(features, labels, header["k"], tuple(header["feature_kinds"]))


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

def synth_blobs(n, m, k, sigma, seed):
    """Gaussian blobs around k uniform centroids in [0,1]^m, clipped.

    Class sizes are as equal as n allows; ``sigma`` controls in-class spread.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if n < k:
        raise ValueError("need at least one instance per class")
    rng = derive_rng(seed, "blobs")
    centroids = rng.uniform(0.0, 1.0, size=(k, m))
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    labels = np.repeat(np.arange(k), sizes)
    noise = rng.normal(0.0, sigma, size=(n, m)) if sigma > 0 else 0.0
    features = np.clip(centroids[labels] + noise, 0.0, 1.0)
    return Dataset(features, labels, k, (CONTINUOUS,) * m)


def synth_purchases(n, m, k, seed):
    """Binary purchase-history matrix labeled by k-means shopping profiles.

    Rows are generated from k planted purchase-propensity profiles; the class
    labels come from re-clustering the binary matrix with k centers, so the
    label structure matches what clustering actually recovers.
    """
    if k > n:
        raise ValueError("need k <= n")
    if m < k:
        raise ValueError("need m >= k")
    rng = derive_rng(seed, "purchases")
    profiles = rng.uniform(0.05, 0.95, size=(k, m))
    assignment = rng.integers(0, k, size=n)
    features = (rng.uniform(size=(n, m)) < profiles[assignment]).astype(np.float64)

    last_error = None
    for attempt in range(10):
        labels = kmeans(features, k, max_iter=100, seed=(seed, "purchases-km", attempt))
        if len(np.unique(labels)) == k:
            return Dataset(features, labels, k, (CATEGORICAL,) * m)
        last_error = f"empty cluster on attempt {attempt}"
    raise RuntimeError(f"k-means degenerate after 10 reseeds: {last_error}")


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    objective_history: tuple  # sum of squared distances after each assignment


def kmeans_fit(points, k, max_iter=100, seed=0):
    """Lloyd's iterations until the assignment reaches a fixpoint or max_iter."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("points must be a non-empty 2-d array")
    if k > len(pts):
        raise ValueError("need k <= number of points")
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "kmeans")
    centers = pts[rng.choice(len(pts), size=k, replace=False)].copy()
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(pts)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if mask.any():
                centers[c] = pts[mask].mean(axis=0)
    return KMeansResult(labels, centers, tuple(history))


def kmeans(points, k, max_iter=100, seed=0):
    """Cluster assignment per point (labels in [0, k))."""
    return kmeans_fit(points, k, max_iter=max_iter, seed=seed).labels


# ---------------------------------------------------------------------------
# Dataset-level metrics
# ---------------------------------------------------------------------------

def in_class_std(d):
    """Average per-class, per-feature population spread.

    For each class: per-feature standard deviation across that class's
    instances, averaged over features; then averaged over classes.
    """
    per_class = []
    for c in d.classes_present():
        block = d.features[d.labels == c]
        per_class.append(block.std(axis=0).mean())
    if not per_class:
        raise ValueError("dataset has no instances")
    return float(np.mean(per_class))


def inter_party_in_class_distance(a, b):
    """Mean Euclidean distance between class-conditional centroids of a and b."""
    if a.m != b.m or a.k != b.k:
        raise ValueError("datasets must share m and k")
    shared = np.intersect1d(a.classes_present(), b.classes_present())
    if len(shared) == 0:
        raise ValueError("no shared classes")
    dists = []
    for c in shared:
        ca = a.features[a.labels == c].mean(axis=0)
        cb = b.features[b.labels == c].mean(axis=0)
        dists.append(float(np.linalg.norm(ca - cb)))
    return float(np.mean(dists))


# ---------------------------------------------------------------------------
# Noise injection
# ---------------------------------------------------------------------------

def add_uniform_noise(x, sigma, seed):
    """Additive per-feature noise drawn uniform from [0, sigma], clipped to [0,1].

    sigma=0 is the exact identity.
    """
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must be in [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0.0:
        return x.copy()
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "noise")
    return np.clip(x + rng.uniform(0.0, sigma, size=x.shape), 0.0, 1.0)


def add_uniform_noise_dataset(d, sigma, seed):
    """Independent uniform noise on every instance of a dataset."""
    return replace_features(d, add_uniform_noise(d.features, sigma, seed))


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    fold_count: int = 10
    run_count: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.fold_count < 2:
            raise ValueError("fold_count must be >= 2")
        if self.run_count < 1:
            raise ValueError("run_count must be >= 1")


def kfold_splits(d, plan):
    """Stratified k-fold partition; deterministic under the plan's seed.

    Test folds are pairwise disjoint and cover the dataset exactly once.
    Classes with fewer instances than fold_count cannot appear in every fold;
    a warning is emitted and those instances are dealt where they land.
    """
    if plan.fold_count > len(d):
        raise ValueError("fold_count exceeds instance count")
    rng = derive_rng(plan.seed, "kfold")
    fold_of = np.empty(len(d), dtype=np.int64)
    offset = 0
    for c in d.classes_present():
        idx = np.flatnonzero(d.labels == c)
        if len(idx) < plan.fold_count:
            warnings.warn(
                f"class {int(c)} has {len(idx)} instances < {plan.fold_count} folds; "
                "stratification downgraded for this class"
            )
        idx = rng.permutation(idx)
        fold_of[idx] = (np.arange(len(idx)) + offset) % plan.fold_count
        offset += len(idx)
    pairs = []
    for f in range(plan.fold_count):
        test_idx = np.flatnonzero(fold_of == f)
        train_idx = np.flatnonzero(fold_of != f)
        pairs.append((d.take(train_idx), d.take(test_idx)))
    return pairs


def stratified_split(d, fraction, rng):
    """Two disjoint stratified parts with the first holding ~fraction of rows."""
    first, second = [], []
    for c in d.classes_present():
        idx = rng.permutation(np.flatnonzero(d.labels == c))
        cut = int(round(fraction * len(idx)))
        first.extend(idx[:cut])
        second.extend(idx[cut:])
    return d.take(np.sort(first)), d.take(np.sort(second))


def disjoint_party_split(d, parties, heterogeneity, seed):
    """Partition a dataset across parties with a class-skew knob in [0,1].

    heterogeneity 0 assigns every class uniformly across parties;
    heterogeneity 1 draws strongly skewed per-party class weights from a
    low-concentration symmetric Dirichlet. A small uniform floor keeps every
    party trainable (at least two classes represented, at least k instances).
    """
    if parties < 2:
        raise ValueError("need at least 2 parties")
    if not 0.0 <= heterogeneity <= 1.0:
        raise ValueError("heterogeneity must be in [0, 1]")
    if len(d) < parties * d.k:
        raise ValueError("too few instances per party")
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "party-split")

    party_rows = [[] for _ in range(parties)]
    for c in d.classes_present():
        idx = rng.permutation(np.flatnonzero(d.labels == c))
        if heterogeneity == 0.0:
            weights = np.full(parties, 1.0 / parties)
        else:
            # Concentration slides from near-uniform (50) to heavy skew
            # (0.05); the sqrt makes mid-knob skew clearly visible against
            # finite-sample noise in centroid distances.
            conc = 50.0 * 0.001 ** np.sqrt(heterogeneity)
            weights = rng.dirichlet(np.full(parties, conc))
            weights = 0.96 * weights + 0.04 / parties
        counts = _proportional_counts(len(idx), weights)
        start = 0
        for p in range(parties):
            party_rows[p].extend(idx[start:start + counts[p]])
            start += counts[p]

    _rebalance_parties(party_rows, d, rng)
    return [d.take(np.sort(rows)) for rows in party_rows]


def _proportional_counts(total, weights):
    """Integer allocation proportional to weights, largest-remainder rounding."""
    raw = weights * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _rebalance_parties(party_rows, d, rng):
    """Guarantee every party has >= k instances and >= 2 distinct classes."""
    k = d.k
    for p, rows in enumerate(party_rows):
        while len(rows) < k or len(set(d.labels[rows])) < 2:
            donor = max(range(len(party_rows)), key=lambda q: len(party_rows[q]))
            if donor == p or len(party_rows[donor]) <= k:
                raise ValueError("too few instances per party")
            donor_rows = party_rows[donor]
            have = set(d.labels[rows])
            pick = next(
                (i for i, r in enumerate(donor_rows) if d.labels[r] not in have),
                len(donor_rows) - 1,
            )
            rows.append(donor_rows.pop(pick))
