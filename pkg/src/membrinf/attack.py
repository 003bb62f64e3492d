"""Attack-set generation, attack-model training, deployment, and metrics.

The attack training set pairs probability vectors with in/out membership
labels, produced by evaluating shadow models on data they did and did not see.
The attack model itself is any classifier from the zoo, trained as a binary
problem over transformed probability vectors.

Two transforms are offered. The label-aware default appends the probability
assigned to the candidate's known class to the sorted vector: membership
evidence is dominated by how the model scores the class the record actually
belongs to, and a memorizing target emits identical one-hot vectors for
members and non-members once sorted, so sorting alone is blind to it. The
pure sorted transform (label_aware=False) needs no label at inference.
Both are invariant under relabeling of the target's classes.
"""

import csv
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import models as md
from .datakit import CONTINUOUS, Dataset, stratified_split
from .seeding import derive_rng


class Membership(IntEnum):
    OUT = 0
    IN = 1


@dataclass(frozen=True)
class AttackInstance:
    probs: np.ndarray
    membership: Membership
    shadow_label: int


@dataclass(frozen=True)
class AttackTrainSet:
    """Balanced in/out probability vectors from q partitioned shadow models.

    ``probs`` holds the raw (unsorted) vectors; transforms are applied at
    attack-model training time so both modes can share one set.
    """

    probs: np.ndarray           # (n*, k)
    membership: np.ndarray      # (n*,) values of Membership
    shadow_labels: np.ndarray   # (n*,) class of the originating instance
    k: int
    shadow_model_count: int

    def __post_init__(self):
        n_in = int(np.sum(self.membership == Membership.IN))
        n_out = int(np.sum(self.membership == Membership.OUT))
        if n_in != n_out:
            raise ValueError(f"unbalanced attack set: {n_in} in vs {n_out} out")

    def __len__(self):
        return len(self.membership)

    def instances(self):
        for p, m, y in zip(self.probs, self.membership, self.shadow_labels):
            yield AttackInstance(p, Membership(int(m)), int(y))


def build_attack_set(shadow, q, gen_kind, gen_config, seed, response_wrapper=None):
    """Partitioned shadow-model construction of the attack training set.

    The shadow data is split 50/50 (stratified) into a train and a test half;
    the train half is divided into q disjoint partitions, one shadow model per
    partition. Each model scores the test half (labeled out) and an equally
    sized sample of its own partition (labeled in). When a partition is
    smaller than the test half both sides are capped to the partition size so
    the result stays exactly balanced. Rows are shuffled (seeded) at the end:
    several model kinds are order-sensitive under ties, and the raw assembly
    order encodes membership.

    ``response_wrapper`` mirrors whatever transform the target service applies
    to its responses (API hardening): an attacker facing a hardened service
    trains on shadow outputs pushed through the same transform.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "attack-set")
    train_half, test_half = stratified_split(shadow, 0.5, rng)

    partitions = _partition(train_half, q, rng)
    for i, part in enumerate(partitions):
        if len(part) < 2 or len(np.unique(part.labels)) < 2:
            raise ValueError(
                f"partition {i} too small to train a shadow model "
                f"({len(part)} instances, {len(np.unique(part.labels))} classes)"
            )

    probs, membership, shadow_labels = [], [], []
    capped = []
    for i, part in enumerate(partitions):
        shadow_model = md.fit(gen_kind, gen_config, part)
        score = _scorer(shadow_model, response_wrapper)
        sample = min(len(part), len(test_half))
        if sample < len(test_half):
            capped.append(i)
        out_idx = rng.choice(len(test_half), size=sample, replace=False)
        in_idx = rng.choice(len(part), size=sample, replace=False)
        out_probs = score(test_half.features[out_idx])
        in_probs = score(part.features[in_idx])
        probs.extend([out_probs, in_probs])
        membership.extend(
            [np.zeros(sample, dtype=np.int64), np.ones(sample, dtype=np.int64)]
        )
        shadow_labels.extend([test_half.labels[out_idx], part.labels[in_idx]])

    if capped:
        warnings.warn(
            f"partitions {capped} smaller than the held-out half; "
            "both sides capped to the partition size"
        )
    all_probs = np.vstack(probs)
    all_membership = np.concatenate(membership)
    all_labels = np.concatenate(shadow_labels)
    perm = rng.permutation(len(all_membership))
    return AttackTrainSet(
        probs=all_probs[perm],
        membership=all_membership[perm],
        shadow_labels=all_labels[perm],
        k=shadow.k,
        shadow_model_count=q,
    )


def _partition(d, q, rng):
    """q disjoint, class-stratified partitions of a dataset."""
    buckets = [[] for _ in range(q)]
    for c in d.classes_present():
        idx = rng.permutation(np.flatnonzero(d.labels == c))
        for pos, row in enumerate(idx):
            buckets[pos % q].append(row)
    return [d.take(np.sort(b)) for b in buckets]


def _scorer(model, response_wrapper):
    if response_wrapper is None:
        return model.predict_proba_batch
    from .shadowgen import model_api  # local import avoids a cycle

    api = response_wrapper(model_api(model))
    return lambda X: np.vstack([api.query(x) for x in X])


# ---------------------------------------------------------------------------
# Attack model
# ---------------------------------------------------------------------------

GLOBAL = "global"
PER_CLASS = "per_class"


def sort_descending(probs):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        return np.sort(probs)[::-1]
    return -np.sort(-probs, axis=1)


def transform_probs(probs, labels=None, label_aware=True):
    """Model-input transform: sorted vector, optionally augmented with the
    probability at the known class and the top-margin against it.

    The margin max(p) - p[known class] is zero exactly when the model ranks
    the known class first; it expresses the correctness signal in a way that
    survives confidence shifts between shadow and target models. When no label
    is available the predicted (argmax) class stands in.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    out = sort_descending(probs)
    if not label_aware:
        return out
    if labels is None:
        own = probs.max(axis=1)
    else:
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        own = probs[np.arange(len(probs)), labels]
    gap = out[:, 0] - own
    return np.hstack([out, own[:, None], gap[:, None]])


@dataclass(frozen=True)
class AttackModel:
    """Binary membership classifier over probability vectors.

    Global mode uses one model over transformed vectors. Per-class mode keeps
    raw vectors and trains one model per known class, dispatching on the
    candidate's class when given (the target's predicted class otherwise);
    classes with degenerate training buckets fall back to a global model.
    """

    mode: str
    k: int
    attack_kind: md.ModelKind
    label_aware: bool = True
    global_model: object = None
    class_models: dict = None

    def membership_probability(self, probs, label=None):
        """Probability that the queried instance was a training member."""
        probs = np.asarray(probs, dtype=np.float64)
        if self.mode == GLOBAL:
            x = transform_probs(probs, None if label is None else [label],
                                self.label_aware)[0]
            p = self.global_model.predict_proba(x)
        else:
            c = int(np.argmax(probs)) if label is None else int(label)
            model = (self.class_models or {}).get(c)
            if model is None:
                x = transform_probs(probs, None if label is None else [label],
                                    self.label_aware)[0]
                p = self.global_model.predict_proba(x)
            else:
                p = model.predict_proba(probs)
        return float(p[Membership.IN])

    def decide(self, probs, label=None):
        in_p = self.membership_probability(probs, label)
        return (Membership.IN if in_p > 0.5 else Membership.OUT), in_p


def _binary_dataset(features, membership):
    return Dataset(features, membership, 2, (CONTINUOUS,) * features.shape[1])


def train_attack_model(dstar, attack_kind, config, mode=GLOBAL, label_aware=True):
    """Fit the membership classifier on an attack training set."""
    if len(dstar) == 0:
        raise ValueError("attack training set is empty")
    attack_kind = md.ModelKind(attack_kind)

    def fit_global():
        X = transform_probs(dstar.probs, dstar.shadow_labels, label_aware)
        return md.fit(attack_kind, config, _binary_dataset(X, dstar.membership))

    if mode == GLOBAL:
        return AttackModel(
            GLOBAL, dstar.k, attack_kind, label_aware, global_model=fit_global()
        )
    if mode != PER_CLASS:
        raise ValueError(f"unknown mode {mode!r}")

    class_models = {}
    fallback = None
    for c in range(dstar.k):
        mask = dstar.shadow_labels == c
        labels = dstar.membership[mask]
        if mask.sum() < 4 or len(np.unique(labels)) < 2 or min(
            np.sum(labels == Membership.IN), np.sum(labels == Membership.OUT)
        ) < 2:
            warnings.warn(f"class {c} bucket degenerate; falling back to global")
            continue
        class_models[c] = md.fit(
            attack_kind, config, _binary_dataset(dstar.probs[mask], labels)
        )
    if len(class_models) < dstar.k:
        fallback = fit_global()
    return AttackModel(
        PER_CLASS, dstar.k, attack_kind, label_aware,
        global_model=fallback, class_models=class_models,
    )


@dataclass(frozen=True)
class MembershipDecision:
    membership: Membership
    in_probability: float


def infer_membership(fa, api, x, label=None):
    """One API query, one membership decision.

    ``label`` is the candidate record's known class; membership inference asks
    whether a labeled record was trained on, so callers that have the label
    should pass it. Without it the transform substitutes the predicted class.
    """
    probs = api.query(x)
    decision, in_p = fa.decide(probs, label)
    return MembershipDecision(decision, in_p)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int
    zero_positive_convention: bool = False

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "zero_positive_convention": self.zero_positive_convention,
        }


def metrics_from_counts(tp, fp, tn, fn):
    total = tp + fp + tn + fn
    zero_pos = (tp + fp) == 0
    return MetricsReport(
        accuracy=(tp + tn) / total if total else 0.0,
        precision=1.0 if zero_pos else tp / (tp + fp),
        recall=tp / (tp + fn) if (tp + fn) else 0.0,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        zero_positive_convention=zero_pos,
    )


def evaluate_attack(fa, api, members, nonmembers):
    """Accuracy/precision/recall of membership decisions on balanced sets.

    Precision defaults to 1.0 when no positive predictions were made; the
    report flags that convention.
    """
    if len(members) == 0 or len(nonmembers) == 0:
        raise ValueError("member and nonmember sets must be non-empty")
    if len(members) != len(nonmembers):
        raise ValueError("member and nonmember sets must be the same size")
    member_rows = {row.tobytes() for row in members.features}
    if any(row.tobytes() in member_rows for row in nonmembers.features):
        raise ValueError("member and nonmember sets overlap")

    tp = fn = fp = tn = 0
    for x, y in zip(members.features, members.labels):
        if infer_membership(fa, api, x, int(y)).membership is Membership.IN:
            tp += 1
        else:
            fn += 1
    for x, y in zip(nonmembers.features, nonmembers.labels):
        if infer_membership(fa, api, x, int(y)).membership is Membership.IN:
            fp += 1
        else:
            tn += 1
    return metrics_from_counts(tp, fp, tn, fn)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_attack_set(dstar, path):
    """CSV with k sorted-probability columns, membership, and shadow label."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"p{i + 1}" for i in range(dstar.k)] + ["membership", "shadow_label"])
        for row, m, y in zip(
            sort_descending(dstar.probs), dstar.membership, dstar.shadow_labels
        ):
            writer.writerow([repr(float(v)) for v in row] + [int(m), int(y)])


def load_attack_set(path, shadow_model_count=1):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        k = len(header) - 2
        probs, membership, labels = [], [], []
        for row in reader:
            probs.append([float(v) for v in row[:k]])
            membership.append(int(row[k]))
            labels.append(int(row[k + 1]))
    return AttackTrainSet(
        probs=np.asarray(probs),
        membership=np.asarray(membership, dtype=np.int64),
        shadow_labels=np.asarray(labels, dtype=np.int64),
        k=k,
        shadow_model_count=shadow_model_count,
    )
