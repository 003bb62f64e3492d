import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrinf import datakit as dk
from membrinf import mitigation as mit
from membrinf import models as md
from membrinf import pipeline as pl
from membrinf import shadowgen as sg
from membrinf.seeding import derive_rng


# ---------------------------------------------------------------------------
# Top-k truncation
# ---------------------------------------------------------------------------

def test_topk_singleton():
    out = mit.harden_topk(np.array([0.5, 0.3, 0.2]), 1)
    assert np.allclose(out, [1.0, 0.0, 0.0])


def test_topk_hand_case():
    out = mit.harden_topk(np.array([0.5, 0.3, 0.2]), 2)
    assert np.allclose(out, [0.625, 0.375, 0.0])


def test_topk_noop_when_minimum_already_zero():
    p = np.array([0.6, 0.4, 0.0])
    assert np.allclose(mit.harden_topk(p, 2), p)


def test_topk_tie_keeps_lower_index():
    out = mit.harden_topk(np.array([0.4, 0.4, 0.2]), 1)
    assert np.allclose(out, [1.0, 0.0, 0.0])


def test_topk_range_checked():
    with pytest.raises(ValueError):
        mit.harden_topk(np.array([0.5, 0.5]), 2)
    with pytest.raises(ValueError):
        mit.harden_topk(np.array([0.5, 0.5]), 0)


def test_topk_unnormalized_variant():
    out = mit.harden_topk(np.array([0.5, 0.3, 0.2]), 2, renormalize=False)
    assert np.allclose(out, [0.5, 0.3, 0.0])


def test_topk_preserves_argmax():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = rng.dirichlet(np.ones(6))
        for kp in (1, 3, 5):
            assert np.argmax(mit.harden_topk(p, kp)) == np.argmax(p)


# ---------------------------------------------------------------------------
# Label-only
# ---------------------------------------------------------------------------

def test_label_only_hand_case():
    assert np.allclose(
        mit.harden_label_only(np.array([0.2, 0.5, 0.3])), [0.0, 1.0, 0.0]
    )


def test_label_only_idempotent_and_argmax_preserving():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p = rng.dirichlet(np.ones(5))
        once = mit.harden_label_only(p)
        assert np.array_equal(mit.harden_label_only(once), once)
        assert np.argmax(once) == np.argmax(p)


def test_label_only_is_topk1_fixed_point():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = rng.dirichlet(np.ones(4))
        top1 = mit.harden_topk(p, 1)
        assert np.array_equal(mit.harden_label_only(p), top1)
        assert np.array_equal(mit.harden_label_only(top1), top1)


# ---------------------------------------------------------------------------
# Output noise
# ---------------------------------------------------------------------------

def test_noise_scale_zero_identity():
    p = np.array([0.2, 0.5, 0.3])
    out = mit.harden_noise(p, 0.0, derive_rng(0))
    assert np.array_equal(out, p)


def test_noise_always_simplex():
    rng = derive_rng(3)
    p = np.array([0.7, 0.2, 0.1])
    for _ in range(10_000):
        md.assert_probability_vector(mit.harden_noise(p, 0.5, rng), 3)


def test_noise_distance_grows_with_scale():
    p = np.array([0.6, 0.3, 0.1])
    means = []
    for scale in (0.01, 0.1, 1.0):
        rng = derive_rng(4, scale)
        dists = [np.abs(mit.harden_noise(p, scale, rng) - p).sum() for _ in range(3000)]
        means.append(np.mean(dists))
    assert means[0] < means[1] < means[2]


def test_noise_all_clipped_returns_uniform():
    class NegativeRng:
        def laplace(self, loc, scale, size):
            return np.full(size, -10.0)

    out = mit.harden_noise(np.array([0.5, 0.5]), 1.0, NegativeRng())
    assert np.allclose(out, [0.5, 0.5])


@given(st.floats(min_value=0.0, max_value=2.0), st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_noise_property(scale, seed):
    rng = derive_rng(seed)
    p = rng.dirichlet(np.ones(4))
    md.assert_probability_vector(mit.harden_noise(p, scale, rng), 4)


# ---------------------------------------------------------------------------
# Hardened API wrapper
# ---------------------------------------------------------------------------

def fitted_api():
    d = dk.synth_blobs(200, 4, 3, 0.1, 5)
    model = md.fit(md.ModelKind.KNN, md.TrainConfig(), d)
    return sg.model_api(model), d


def test_policy_none_bit_identical():
    api, d = fitted_api()
    wrapped = mit.hardened_api(api, mit.HardeningPolicy(variant=mit.NONE))
    for x in d.features[:20]:
        assert np.array_equal(wrapped.query(x), api.query(x))


def test_policy_label_only_all_onehot():
    api, d = fitted_api()
    wrapped = mit.hardened_api(api, mit.HardeningPolicy(variant=mit.LABEL_ONLY))
    for x in d.features[:20]:
        p = wrapped.query(x)
        assert sorted(p.tolist(), reverse=True)[:1] == [1.0]
        assert p.sum() == 1.0


def test_query_accounting_passes_through():
    api, d = fitted_api()
    wrapped = mit.hardened_api(api, mit.HardeningPolicy(variant=mit.LABEL_ONLY))
    before = wrapped.query_count
    for x in d.features[:7]:
        wrapped.query(x)
    assert wrapped.query_count - before == 7
    assert wrapped.query_count == api.query_count


def test_attack_is_built_against_hardened_api():
    """No raw vector may leak into attack construction under a policy."""

    class AuditApi(sg.TargetApi):
        def __init__(self, inner):
            super().__init__(inner.query, inner.m, inner.k)
            self.responses = []

        def query(self, x):
            p = super().query(x)
            self.responses.append(p)
            return p

    d = dk.synth_blobs(400, 8, 4, 0.2, 9)
    plan = dk.SplitPlan(fold_count=2, run_count=1, seed=0)
    audits = []

    def wrapper(api):
        hardened = mit.hardened_api(api, mit.HardeningPolicy(variant=mit.LABEL_ONLY))
        audit = AuditApi(hardened)
        audits.append(audit)
        return audit

    pl.run_attack_pipeline(d, pl.PipelineConfig(eval_size=30), plan, 0,
                           api_wrapper=wrapper)
    assert audits
    seen = [p for a in audits for p in a.responses]
    assert seen
    for p in seen:
        assert p.max() == 1.0 and p.sum() == 1.0  # one-hot only


# ---------------------------------------------------------------------------
# Mitigation report
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_report():
    d = dk.synth_blobs(400, 16, 8, 0.35, 11)
    policies = [
        mit.HardeningPolicy(variant=mit.TOP_K, top_k=3),
        mit.HardeningPolicy(variant=mit.LABEL_ONLY),
    ]
    cfg = pl.PipelineConfig(
        target_kind="lr", gen_kind="lr", attack_kind="lr", eval_size=60
    )
    return mit.mitigation_report(
        d, "lr", policies, [1e-3, 10.0], seed=2,
        pipeline_config=cfg, plan=dk.SplitPlan(fold_count=2, run_count=1, seed=0),
    )


def test_report_row_count(small_report):
    # 1 baseline + 2 policies + 2 grid values
    assert len(small_report.rows) == 5


def test_report_baseline_identity(small_report):
    base = small_report.rows[0]
    assert base.mitigation == mit.NONE
    assert base.utility_delta == 0.0


def test_report_serialization(tmp_path, small_report):
    path = tmp_path / "mitigation.csv"
    mit.save_mitigation_report(small_report, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# attack configuration:")
    assert lines[1].split(",")[:2] == ["mitigation", "parameter"]
    assert len(lines) == 2 + len(small_report.rows)


def test_report_rejects_grid_for_unsupported_kind():
    d = dk.synth_blobs(300, 8, 4, 0.2, 3)
    with pytest.raises(ValueError, match="regularization"):
        mit.mitigation_report(
            d, "nb", [], [0.1], seed=0,
            plan=dk.SplitPlan(fold_count=2, run_count=1, seed=0),
        )
