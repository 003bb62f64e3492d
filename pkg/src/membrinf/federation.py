"""Loosely federated prediction and the insider ownership attack.

Parties train private models on disjoint datasets and serve the point-wise
average of their probability vectors. An insider participant sees the
individual per-party vectors and can attribute a known training instance to
its owning party by running the membership pipeline against each party's
output; an outsider only sees the average.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import attack as atk
from . import datakit as dk
from . import models as md
from . import pipeline as pl
from . import shadowgen as sg
from .seeding import derive_rng


@dataclass(frozen=True)
class Federation:
    """Party models plus (simulator-only) party datasets.

    ``datasets`` exists so experiments can sample true members and check
    attributions; attacker code paths receive an InsiderView instead and
    never touch it.
    """

    models: tuple
    datasets: tuple
    m: int
    k: int

    @property
    def party_count(self):
        return len(self.models)


def build_federation(parts, kind, config):
    """One fitted model per party; datasets must be disjoint and compatible."""
    if len(parts) < 2:
        raise ValueError("a federation needs at least 2 parties")
    m, k = parts[0].m, parts[0].k
    for d in parts[1:]:
        if d.m != m or d.k != k:
            raise ValueError("party datasets must share m and k")
    seen = set()
    for d in parts:
        for row, label in zip(d.features, d.labels):
            key = row.tobytes() + bytes([int(label) & 0xFF])
            if key in seen:
                raise ValueError("party datasets overlap")
            seen.add(key)
    fitted = tuple(md.fit(kind, config, d) for d in parts)
    return Federation(fitted, tuple(parts), m, k)


def federated_predict(fed, x):
    """Point-wise average of the party probability vectors."""
    vectors = [model.predict_proba(x) for model in fed.models]
    return np.mean(vectors, axis=0)


def federation_api(fed):
    """The public prediction service: only the averaged vector leaves."""
    return sg.TargetApi(lambda x: federated_predict(fed, x), fed.m, fed.k)


class InsiderView:
    """What a participating adversary can see: every party's output vectors
    for any query, plus its own training dataset. Nothing else."""

    def __init__(self, fed, insider_index):
        if not 0 <= insider_index < fed.party_count:
            raise ValueError("insider_index out of range")
        self.insider_index = insider_index
        self.own_dataset = fed.datasets[insider_index]
        self.party_count = fed.party_count
        self.m = fed.m
        self.k = fed.k
        self._party_apis = tuple(
            sg.model_api(model) for model in fed.models
        )

    def query_party(self, party, x):
        return self._party_apis[party].query(x)

    def party_query_count(self, party):
        return self._party_apis[party].query_count


@dataclass(frozen=True)
class InsiderAttackResult:
    attributions: np.ndarray      # winning party index per instance
    confidences: np.ndarray       # (n, parties) in-probability per party
    candidate_parties: tuple


def insider_attack(view, target_instances, gen_kind=md.ModelKind.DECISION_TREE,
                   gen_config=None, attack_kind=md.ModelKind.LOGISTIC_REGRESSION,
                   attack_config=None, partitions=2, seed=0):
    """Attribute known-member instances to the non-insider party that trained
    on them.

    The insider builds the standard membership pipeline using its own dataset
    as the shadow source, then scores each candidate party's individual output
    vector; attribution goes to the party with the highest in-confidence,
    ties to the lowest party index.
    """
    gen_config = gen_config or md.TrainConfig()
    attack_config = attack_config or pl.DEFAULT_ATTACK_CONFIGS[md.ModelKind(attack_kind)]
    dstar = atk.build_attack_set(
        view.own_dataset, partitions, gen_kind, gen_config, (seed, "insider-dstar")
    )
    fa = atk.train_attack_model(dstar, attack_kind, attack_config)

    candidates = tuple(
        p for p in range(view.party_count) if p != view.insider_index
    )
    n = len(target_instances)
    confidences = np.zeros((n, view.party_count))
    for i, (x, y) in enumerate(
        zip(target_instances.features, target_instances.labels)
    ):
        for p in candidates:
            probs = view.query_party(p, x)
            confidences[i, p] = fa.membership_probability(probs, int(y))
    candidate_conf = confidences[:, list(candidates)]
    attributions = np.array([candidates[j] for j in np.argmax(candidate_conf, axis=1)])
    return InsiderAttackResult(attributions, confidences, candidates)


@dataclass(frozen=True)
class InsiderMetrics:
    precision: float
    accuracy: float


def evaluate_insider(result, true_owners):
    """Attribution accuracy plus macro-averaged per-party precision."""
    true_owners = np.asarray(true_owners)
    accuracy = float(np.mean(result.attributions == true_owners))
    precisions = []
    for p in result.candidate_parties:
        predicted = result.attributions == p
        if predicted.any():
            precisions.append(float(np.mean(true_owners[predicted] == p)))
    precision = float(np.mean(precisions)) if precisions else 0.0
    return InsiderMetrics(precision=precision, accuracy=accuracy)


def sample_member_probes(fed, insider_index, per_party, seed):
    """Simulator helper: balanced known-member instances from each non-insider
    party, with their true owners."""
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "probes")
    feats, labels, owners = [], [], []
    for p, d in enumerate(fed.datasets):
        if p == insider_index:
            continue
        take = min(per_party, len(d))
        idx = rng.choice(len(d), size=take, replace=False)
        feats.append(d.features[idx])
        labels.append(d.labels[idx])
        owners.extend([p] * take)
    probes = dk.Dataset(np.vstack(feats), np.concatenate(labels), fed.k,
                        fed.datasets[0].feature_kinds)
    return probes, np.array(owners)


def outsider_attack_accuracy(fed, holdout, eval_size=150,
                             gen_kind=md.ModelKind.DECISION_TREE,
                             attack_kind=md.ModelKind.LOGISTIC_REGRESSION,
                             seed=0):
    """Membership attack accuracy against the averaged federation output.

    Shadow data comes from a holdout pool disjoint from every party; members
    are sampled across party datasets, non-members from the holdout.
    """
    rng = derive_rng(seed, "outsider")
    api = federation_api(fed)
    half = len(holdout) // 2
    idx = rng.permutation(len(holdout))
    shadow = holdout.take(idx[:half])
    nonmember_pool = holdout.take(idx[half:])

    dstar = atk.build_attack_set(shadow, 2, gen_kind, md.TrainConfig(), (seed, "o-dstar"))
    fa = atk.train_attack_model(
        dstar, attack_kind, pl.DEFAULT_ATTACK_CONFIGS[md.ModelKind(attack_kind)]
    )
    union_feats = np.vstack([d.features for d in fed.datasets])
    union_labels = np.concatenate([d.labels for d in fed.datasets])
    n_eval = min(eval_size, len(union_labels), len(nonmember_pool))
    midx = rng.choice(len(union_labels), size=n_eval, replace=False)
    members = dk.Dataset(union_feats[midx], union_labels[midx], fed.k,
                         fed.datasets[0].feature_kinds)
    nonmembers = nonmember_pool.take(
        rng.choice(len(nonmember_pool), size=n_eval, replace=False)
    )
    return atk.evaluate_attack(fa, api, members, nonmembers).accuracy


@dataclass(frozen=True)
class SweepPoint:
    knob: float
    distance: float
    insider_precision: float
    insider_accuracy: float
    seed: int


def heterogeneity_sweep(base, knob_values, parties=3, kind=md.ModelKind.DECISION_TREE,
                        config=None, seed=0, probes_per_party=100):
    """(inter-party distance, insider success) at each heterogeneity knob.

    The insider is always the last party; distance is averaged over pairs of
    candidate (non-insider) parties.
    """
    config = config or md.TrainConfig()
    points = []
    for knob in knob_values:
        parts = dk.disjoint_party_split(base, parties, knob, (seed, "split", knob))
        fed = build_federation(parts, kind, config)
        insider_index = parties - 1
        candidates = [p for p in range(parties) if p != insider_index]
        dists = [
            dk.inter_party_in_class_distance(parts[a], parts[b])
            for i, a in enumerate(candidates)
            for b in candidates[i + 1:]
        ]
        view = InsiderView(fed, insider_index)
        probes, owners = sample_member_probes(
            fed, insider_index, probes_per_party, (seed, "probes", knob)
        )
        result = insider_attack(view, probes, gen_kind=kind, gen_config=config,
                                seed=(seed, "ia", knob))
        metrics = evaluate_insider(result, owners)
        points.append(
            SweepPoint(
                knob=float(knob),
                distance=float(np.mean(dists)),
                insider_precision=metrics.precision,
                insider_accuracy=metrics.accuracy,
                seed=seed if isinstance(seed, int) else 0,
            )
        )
    return points


def save_sweep(points, path):
    """CSV: knob, mean inter-party distance, insider precision/accuracy, seed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["knob", "inter_party_distance", "insider_precision",
             "insider_accuracy", "seed"]
        )
        for pt in points:
            writer.writerow(
                [repr(pt.knob), repr(pt.distance), repr(pt.insider_precision),
                 repr(pt.insider_accuracy), pt.seed]
            )
