"""Shared end-to-end attack experiment.

One pipeline run: carve the dataset into a private target pool and an
attacker pool, train the target per cross-validation fold, construct shadow
data (a disjoint attacker sample or one of the query-based techniques),
build the attack set, train the attack model, and score balanced member /
non-member probes through the prediction API. Everything downstream of the
dataset is a pure function of (config, seed).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import attack as atk
from . import datakit as dk
from . import models as md
from . import shadowgen as sg
from .seeding import derive_rng

DISJOINT = "disjoint"

# Attack models see transformed probability vectors, not raw features; a
# lightly smoothed tree generalizes that space far better than a fully
# shattered one.
DEFAULT_ATTACK_CONFIGS = {
    md.ModelKind.DECISION_TREE: md.TrainConfig(min_samples_split=8),
    md.ModelKind.KNN: md.TrainConfig(),
    md.ModelKind.LOGISTIC_REGRESSION: md.TrainConfig(),
    md.ModelKind.NAIVE_BAYES: md.TrainConfig(),
}


@dataclass(frozen=True)
class PipelineConfig:
    target_kind: md.ModelKind = md.ModelKind.DECISION_TREE
    gen_kind: md.ModelKind = md.ModelKind.DECISION_TREE
    attack_kind: md.ModelKind = md.ModelKind.LOGISTIC_REGRESSION
    target_config: md.TrainConfig = field(default_factory=md.TrainConfig)
    gen_config: md.TrainConfig = field(default_factory=md.TrainConfig)
    attack_config: md.TrainConfig = None  # None -> per-kind default
    shadow_source: str = DISJOINT         # or a shadowgen Technique value
    shadow_size: int = 1000
    shadow_partitions: int = 2
    shadowgen: sg.ShadowGenConfig = field(default_factory=sg.ShadowGenConfig)
    attack_mode: str = atk.GLOBAL
    label_aware: bool = True
    eval_size: int = 250
    target_noise: float = 0.0
    shadow_noise: float = 0.0

    def resolved_attack_config(self):
        if self.attack_config is not None:
            return self.attack_config
        return DEFAULT_ATTACK_CONFIGS[md.ModelKind(self.attack_kind)]


@dataclass(frozen=True)
class FoldMetrics:
    attack: atk.MetricsReport
    target_train_accuracy: float
    target_test_accuracy: float
    queries_spent: int


@dataclass(frozen=True)
class PipelineResult:
    accuracy_mean: float
    accuracy_std: float
    precision_mean: float
    recall_mean: float
    target_train_accuracy: float
    target_test_accuracy: float
    folds: tuple

    @classmethod
    def from_folds(cls, folds):
        acc = np.array([f.attack.accuracy for f in folds])
        return cls(
            accuracy_mean=float(acc.mean()),
            accuracy_std=float(acc.std()),
            precision_mean=float(np.mean([f.attack.precision for f in folds])),
            recall_mean=float(np.mean([f.attack.recall for f in folds])),
            target_train_accuracy=float(
                np.mean([f.target_train_accuracy for f in folds])
            ),
            target_test_accuracy=float(
                np.mean([f.target_test_accuracy for f in folds])
            ),
            folds=tuple(folds),
        )


def build_shadow(cfg, attacker_pool, api, rng, seed_keys):
    """Shadow dataset per the configured source."""
    if cfg.shadow_source == DISJOINT:
        size = min(cfg.shadow_size, len(attacker_pool))
        idx = rng.choice(len(attacker_pool), size=size, replace=False)
        return attacker_pool.take(idx)
    technique = sg.Technique(cfg.shadow_source)
    stats = dk.compute_feature_stats(attacker_pool)
    gen_cfg = replace(cfg.shadowgen, technique=technique, target_size=cfg.shadow_size)
    result = sg.build_shadow_dataset(api, stats, gen_cfg, seed_keys)
    return result.dataset


def run_fold(cfg, train, test, attacker_pool, seed_keys, api_wrapper=None):
    """Train the target on one fold and mount the full attack against it."""
    rng = derive_rng(*seed_keys)
    target = md.fit(cfg.target_kind, cfg.target_config, train)
    api = sg.model_api(target)
    if api_wrapper is not None:
        api = api_wrapper(api)
    queries_before = api.query_count

    shadow = build_shadow(cfg, attacker_pool, api, rng, (*seed_keys, "shadow"))
    if cfg.shadow_noise > 0:
        shadow = dk.add_uniform_noise_dataset(
            shadow, cfg.shadow_noise, (*seed_keys, "shadow-noise")
        )
    dstar = atk.build_attack_set(
        shadow, cfg.shadow_partitions, cfg.gen_kind, cfg.gen_config,
        (*seed_keys, "attack-set"), response_wrapper=api_wrapper,
    )
    fa = atk.train_attack_model(
        dstar, cfg.attack_kind, cfg.resolved_attack_config(),
        mode=cfg.attack_mode, label_aware=cfg.label_aware,
    )

    members_idx = rng.choice(
        len(train), size=min(cfg.eval_size, len(train)), replace=False
    )
    member_rows = {train.features[i].tobytes() for i in members_idx}
    # duplicate feature vectors across folds are ambiguous probes: a
    # non-member identical to a member is a member for all the model can tell
    eligible = [
        i for i in range(len(test)) if test.features[i].tobytes() not in member_rows
    ]
    n_eval = min(len(members_idx), len(eligible))
    members = train.take(members_idx[:n_eval])
    nonmembers = test.take(rng.permutation(np.asarray(eligible))[:n_eval])
    if cfg.target_noise > 0:
        members = dk.add_uniform_noise_dataset(
            members, cfg.target_noise, (*seed_keys, "probe-noise", 0)
        )
        nonmembers = dk.add_uniform_noise_dataset(
            nonmembers, cfg.target_noise, (*seed_keys, "probe-noise", 1)
        )
    report = atk.evaluate_attack(fa, api, members, nonmembers)
    return FoldMetrics(
        attack=report,
        target_train_accuracy=md.accuracy(target, train),
        target_test_accuracy=md.accuracy(target, test),
        queries_spent=api.query_count - queries_before,
    )


def run_attack_pipeline(dataset, cfg, plan, seed, api_wrapper=None):
    """Full protocol: run_count runs of fold_count-fold cross-validation."""
    split_rng = derive_rng(seed, "pool-split")
    target_pool, attacker_pool = dk.stratified_split(dataset, 0.5, split_rng)
    folds = []
    for run in range(plan.run_count):
        run_plan = dk.SplitPlan(
            fold_count=plan.fold_count,
            run_count=1,
            seed=int(derive_rng(seed, "plan", run).integers(2**31)),
        )
        for fold_i, (train, test) in enumerate(dk.kfold_splits(target_pool, run_plan)):
            folds.append(
                run_fold(
                    cfg, train, test, attacker_pool,
                    (seed, "fold", run, fold_i), api_wrapper,
                )
            )
    return PipelineResult.from_folds(folds)
