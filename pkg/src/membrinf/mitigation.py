"""API-hardening transforms and model-hardening knobs, with before/after
attack evaluation.

API hardening rewrites the probability vector at the service boundary:
top-k' truncation, label-only responses, or additive output noise. Model
hardening retrains the target with regularization (L2 for logistic
regression, cost-complexity pruning for trees). ``mitigation_report`` runs
the full attack pipeline under each setting and tabulates the utility cost.
"""

import csv
import threading
from dataclasses import dataclass, replace

import numpy as np

from . import models as md
from . import pipeline as pl
from .datakit import SplitPlan
from .seeding import derive_rng

NONE = "none"
TOP_K = "topk"
LABEL_ONLY = "label_only"
OUTPUT_NOISE = "noise"


@dataclass(frozen=True)
class HardeningPolicy:
    variant: str = NONE
    top_k: int = None
    noise_scale: float = 0.0
    seed: int = 0
    renormalize: bool = True

    def describe(self):
        if self.variant == TOP_K:
            return f"topk(k'={self.top_k})"
        if self.variant == OUTPUT_NOISE:
            return f"noise(scale={self.noise_scale})"
        return self.variant


def harden_topk(p, k_prime, renormalize=True):
    """Keep the k' largest entries (ties to the lower index), zero the rest.

    Renormalizes to a valid probability vector by default; the raw truncated
    variant (which no longer sums to 1) is available for comparison.
    """
    p = np.asarray(p, dtype=np.float64)
    k = len(p)
    if not 1 <= k_prime < k:
        raise ValueError("k' must satisfy 1 <= k' < k")
    keep = np.argsort(-p, kind="stable")[:k_prime]
    out = np.zeros_like(p)
    out[keep] = p[keep]
    if renormalize:
        out = out / out.sum()
    return out


def harden_label_only(p):
    """One-hot vector at the argmax (ties to the lowest index)."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    out[int(np.argmax(p))] = 1.0
    return out


def harden_noise(p, scale, rng):
    """Laplace noise per entry, clipped at zero and renormalized.

    If every entry clips to zero the uniform vector is returned.
    """
    if scale < 0:
        raise ValueError("scale must be >= 0")
    p = np.asarray(p, dtype=np.float64)
    if scale == 0:
        return p.copy()
    noisy = np.maximum(p + rng.laplace(0.0, scale, size=p.shape), 0.0)
    total = noisy.sum()
    if total <= 0:
        return np.full_like(p, 1.0 / len(p))
    return noisy / total


class HardenedApi:
    """Prediction service wrapper applying a hardening policy to every
    response. Query accounting passes through to the inner service."""

    def __init__(self, inner, policy):
        self.inner = inner
        self.policy = policy
        self.m = inner.m
        self.k = inner.k
        self._rng = derive_rng(policy.seed, "harden-noise")
        self._lock = threading.Lock()

    def query(self, x):
        p = self.inner.query(x)
        v = self.policy.variant
        if v == NONE:
            return p
        if v == TOP_K:
            return harden_topk(p, self.policy.top_k, self.policy.renormalize)
        if v == LABEL_ONLY:
            return harden_label_only(p)
        if v == OUTPUT_NOISE:
            with self._lock:
                return harden_noise(p, self.policy.noise_scale, self._rng)
        raise ValueError(f"unknown hardening variant {v!r}")

    @property
    def query_count(self):
        return self.inner.query_count


def hardened_api(api, policy):
    return HardenedApi(api, policy)


# ---------------------------------------------------------------------------
# Mitigation report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MitigationRow:
    mitigation: str
    parameter: str
    model_accuracy: float
    attack_accuracy: float
    utility_delta: float


@dataclass(frozen=True)
class MitigationReport:
    rows: tuple
    attack_description: str


def mitigation_report(dataset, target_kind, policies, regularization_grid,
                      seed, pipeline_config=None, plan=None):
    """Target utility vs attack accuracy for each hardening setting.

    Row one is the unhardened baseline; then one row per API policy; then one
    row per regularization value (L2 lambda for logistic-regression targets,
    pruning alpha for decision trees), retraining the target each time. The
    attack configuration is held fixed across rows and recorded in the report.
    """
    target_kind = md.ModelKind(target_kind)
    base_cfg = pipeline_config or pl.PipelineConfig(target_kind=target_kind)
    base_cfg = replace(base_cfg, target_kind=target_kind)
    plan = plan or SplitPlan(fold_count=3, run_count=1, seed=0)

    def run(cfg, wrapper=None):
        result = pl.run_attack_pipeline(dataset, cfg, plan, seed, api_wrapper=wrapper)
        return result.target_test_accuracy, result.accuracy_mean

    rows = []
    base_model_acc, base_attack_acc = run(base_cfg)
    rows.append(MitigationRow(NONE, "", base_model_acc, base_attack_acc, 0.0))

    for policy in policies:
        if policy.variant == NONE:
            continue
        model_acc, attack_acc = run(
            base_cfg, wrapper=lambda api, p=policy: hardened_api(api, p)
        )
        rows.append(
            MitigationRow(
                policy.variant,
                policy.describe(),
                model_acc,
                attack_acc,
                model_acc - base_model_acc,
            )
        )

    for value in regularization_grid:
        if target_kind is md.ModelKind.LOGISTIC_REGRESSION:
            tc = replace(base_cfg.target_config, l2_lambda=float(value))
            label = f"l2_lambda={value}"
        elif target_kind is md.ModelKind.DECISION_TREE:
            tc = replace(base_cfg.target_config, pruning_alpha=float(value))
            label = f"pruning_alpha={value}"
        else:
            raise ValueError(
                "regularization grid applies to logistic-regression or "
                "decision-tree targets"
            )
        model_acc, attack_acc = run(replace(base_cfg, target_config=tc))
        rows.append(
            MitigationRow(
                "regularization", label, model_acc, attack_acc,
                model_acc - base_model_acc,
            )
        )

    description = (
        f"gen={base_cfg.gen_kind} attack={base_cfg.attack_kind} "
        f"shadow={base_cfg.shadow_source}/{base_cfg.shadow_size} "
        f"q={base_cfg.shadow_partitions} folds={plan.fold_count} seed={seed}"
    )
    return MitigationReport(tuple(rows), description)


def save_mitigation_report(report, path):
    """Table-shaped CSV: mitigation, parameter, model accuracy, attack
    accuracy, utility delta. The fixed attack configuration is recorded in a
    leading comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# attack configuration: {report.attack_description}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["mitigation", "parameter", "model_accuracy", "attack_accuracy",
             "utility_delta"]
        )
        for row in report.rows:
            writer.writerow(
                [row.mitigation, row.parameter, repr(row.model_accuracy),
                 repr(row.attack_accuracy), repr(row.utility_delta)]
            )
