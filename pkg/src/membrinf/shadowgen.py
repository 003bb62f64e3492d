"""Shadow-dataset construction against a black-box prediction API.

Adversary code in this module reaches the target model only through
``TargetApi.query``; neither training data nor model internals are visible.
Four generation techniques are provided: statistics-based sampling,
confidence-thresholded query search, hypercube region expansion around an
accepted point, and the combined query-plus-region loop.
"""

import json
import math
import threading
from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np

from .datakit import Dataset, sample_from_stats, save_dataset
from .seeding import derive_rng


class ProtocolError(RuntimeError):
    """The API returned inconsistently shaped responses."""


class QueryBudgetError(RuntimeError):
    """Query budget exhausted; carries the best point found and any partial
    shadow data accumulated so far."""

    def __init__(self, message, best_point=None, best_proba=None, partial=None,
                 queries_spent=0):
        super().__init__(message)
        self.best_point = best_point
        self.best_proba = best_proba
        self.partial = partial
        self.queries_spent = queries_spent


class TargetApi:
    """Black-box prediction interface with a cumulative query counter."""

    def __init__(self, query_fn, m, k):
        self._query_fn = query_fn
        self.m = m
        self.k = k
        self._count = 0
        self._lock = threading.Lock()

    def query(self, x):
        x = np.asarray(x, dtype=np.float64)
        with self._lock:
            self._count += 1
        return np.asarray(self._query_fn(x), dtype=np.float64)

    @property
    def query_count(self):
        return self._count


def model_api(model):
    """Wrap a fitted classifier as a prediction service."""
    return TargetApi(model.predict_proba, model.m, model.k)


class Technique(str, Enum):
    STATISTICS = "statistics"
    QUERY = "query"
    REGION = "region"
    QUERY_PLUS_REGION = "query_plus_region"


@dataclass(frozen=True)
class ShadowGenConfig:
    technique: Technique = Technique.QUERY_PLUS_REGION
    confidence_threshold: float = 0.8
    max_updates: int = 20
    region_radius: float = 0.1
    samples_per_region: int = 9
    target_size: int = 1000
    query_budget: int = 10_000

    def validate(self, k):
        if not (1.0 / k) < self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must lie in (1/k, 1]")
        if not 0.0 < self.region_radius < 1.0:
            raise ValueError("region_radius must lie in (0, 1)")
        if self.target_size < 1 or self.query_budget < 1:
            raise ValueError("target_size and query_budget must be >= 1")
        if self.max_updates < 1 or self.samples_per_region < 0:
            raise ValueError("max_updates must be >= 1, samples_per_region >= 0")


def probe_structure(api, stats, probes=2, query_budget=None):
    """Infer (m, k) by sending trial queries and observing response arity."""
    if query_budget is not None and probes > query_budget:
        raise QueryBudgetError(
            f"probing needs {probes} queries, budget is {query_budget}",
            queries_spent=0,
        )
    rng = derive_rng(0, "probe")
    arities = []
    m = stats.m
    for _ in range(probes):
        x = sample_from_stats(stats, 1, rng)[0]
        p = api.query(x)
        arities.append(len(p))
    if len(set(arities)) != 1:
        raise ProtocolError(f"inconsistent response arity across probes: {arities}")
    return m, arities[0]


def gen_statistics_based(stats, size, seed):
    """Instances sampled feature-by-feature from population statistics; class
    labels drawn from the class prior. Consumes no API queries."""
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "statgen")
    k = stats.k
    features = sample_from_stats(stats, size, rng)
    labels = rng.choice(k, size=size, p=stats.class_prior)
    return Dataset(features, labels, k, stats.kinds)


def _perturb(point, stats, rng):
    """Resample a random quarter of the features from their descriptors."""
    m = len(point)
    count = max(1, math.ceil(m / 4))
    subset = rng.choice(m, size=count, replace=False)
    fresh = sample_from_stats(stats, 1, rng)[0]
    out = point.copy()
    out[subset] = fresh[subset]
    return out


def _query_search(api, stats, cfg, rng, budget):
    """Search for a point the target classifies above the confidence
    threshold. Returns (point, proba, queries_used)."""
    used = 0
    best_point, best_proba, best_conf = None, None, -1.0
    while True:
        point = sample_from_stats(stats, 1, rng)[0]
        for _ in range(cfg.max_updates):
            if used >= budget:
                raise QueryBudgetError(
                    f"budget of {budget} queries exhausted before acceptance",
                    best_point=best_point,
                    best_proba=best_proba,
                    queries_spent=used,
                )
            proba = api.query(point)
            used += 1
            conf = float(proba.max())
            if conf > best_conf:
                best_point, best_proba, best_conf = point.copy(), proba, conf
            if conf >= cfg.confidence_threshold:
                return point, proba, used
            point = _perturb(point, stats, rng)


def gen_query_based(api, stats, cfg, seed):
    """One accepted (point, probability vector) pair via threshold search."""
    cfg.validate(api.k)
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "querygen")
    point, proba, _ = _query_search(api, stats, cfg, rng, cfg.query_budget)
    return point, proba


def gen_region_based(d_f, label, cfg, seed):
    """Hypercube samples around an accepted point, all sharing its class.

    Returns samples_per_region + 1 feature vectors (the accepted point is
    included); every output is within L-inf radius of d_f and inside [0,1]^m.
    """
    if not 0.0 < cfg.region_radius < 1.0:
        raise ValueError("region_radius must lie in (0, 1)")
    rng = derive_rng(*seed) if isinstance(seed, tuple) else derive_rng(seed, "region")
    d_f = np.asarray(d_f, dtype=np.float64)
    lo = np.maximum(d_f - cfg.region_radius, 0.0)
    hi = np.minimum(d_f + cfg.region_radius, 1.0)
    samples = rng.uniform(lo, hi, size=(cfg.samples_per_region, len(d_f)))
    features = np.vstack([d_f[None, :], samples])
    labels = np.full(len(features), label, dtype=np.int64)
    return features, labels


@dataclass(frozen=True)
class ShadowProvenance:
    technique: str
    confidence_threshold: float
    region_radius: float
    max_updates: int
    samples_per_region: int
    queries_spent: int
    seed: int


@dataclass(frozen=True)
class ShadowBuildResult:
    dataset: Dataset
    queries_spent: int
    provenance: ShadowProvenance


def build_shadow_dataset(api, stats, cfg, seed):
    """Accumulate a shadow dataset of at least target_size instances.

    Statistics technique spends no queries. Query labels each accepted point
    with the API argmax. Region draws a seed point from statistics, labels it
    with one query, and expands. Query-plus-region runs the threshold search
    per seed point, then expands. Budget exhaustion raises QueryBudgetError
    with the partial dataset attached.
    """
    cfg.validate(api.k)
    rng = derive_rng(seed, "shadow-build")
    k = api.k

    if cfg.technique is Technique.STATISTICS:
        d = gen_statistics_based(stats, cfg.target_size, (seed, "shadow-stats"))
        return ShadowBuildResult(d, 0, _provenance(cfg, 0, seed))

    feats, labels = [], []
    used = 0
    size = 0
    while size < cfg.target_size:
        try:
            if cfg.technique is Technique.REGION:
                if used >= cfg.query_budget:
                    raise QueryBudgetError(
                        f"budget of {cfg.query_budget} queries exhausted",
                        queries_spent=used,
                    )
                point = sample_from_stats(stats, 1, rng)[0]
                proba = api.query(point)
                used += 1
            else:
                point, proba, spent = _query_search(
                    api, stats, cfg, rng, cfg.query_budget - used
                )
                used += spent
        except QueryBudgetError as err:
            raise QueryBudgetError(
                str(err),
                best_point=err.best_point,
                best_proba=err.best_proba,
                partial=_assemble(feats, labels, k, stats) if feats else None,
                queries_spent=used + err.queries_spent,
            ) from None

        label = int(np.argmax(proba))
        if cfg.technique is Technique.QUERY:
            feats.append(point[None, :])
            labels.append(np.array([label]))
            size += 1
        else:
            f, l = gen_region_based(
                point, label, cfg, (seed, "shadow-region", size)
            )
            feats.append(f)
            labels.append(l)
            size += len(f)

    dataset = _assemble(feats, labels, k, stats)
    return ShadowBuildResult(dataset, used, _provenance(cfg, used, seed))


def _assemble(feats, labels, k, stats):
    return Dataset(np.vstack(feats), np.concatenate(labels), k, stats.kinds)


def _provenance(cfg, used, seed):
    return ShadowProvenance(
        technique=cfg.technique.value,
        confidence_threshold=cfg.confidence_threshold,
        region_radius=cfg.region_radius,
        max_updates=cfg.max_updates,
        samples_per_region=cfg.samples_per_region,
        queries_spent=used,
        seed=seed if isinstance(seed, int) else 0,
    )


def save_shadow_dataset(result, path):
    """Dataset in the standard format plus a provenance sidecar."""
    save_dataset(result.dataset, path)
    with open(f"{path}.provenance.json", "w") as fh:
        json.dump(asdict(result.provenance), fh, sort_keys=True)
