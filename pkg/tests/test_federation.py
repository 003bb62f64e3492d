import numpy as np
import pytest

from membrinf import datakit as dk
from membrinf import federation as fd
from membrinf import models as md


def make_parts(n=300, k=3, parties=3, knob=0.0, seed=5):
    base = dk.synth_blobs(n, 4, k, 0.1, seed)
    return dk.disjoint_party_split(base, parties, knob, seed), base


def small_federation(**kw):
    parts, _ = make_parts(**kw)
    return fd.build_federation(parts, md.ModelKind.KNN, md.TrainConfig())


# ---------------------------------------------------------------------------
# Construction and prediction
# ---------------------------------------------------------------------------

def test_build_federation_three_parties():
    fed = small_federation()
    assert fed.party_count == 3
    assert fed.m == 4 and fed.k == 3


def test_single_party_rejected():
    parts, _ = make_parts()
    with pytest.raises(ValueError, match="at least 2"):
        fd.build_federation(parts[:1], md.ModelKind.KNN, md.TrainConfig())


def test_overlapping_parties_rejected():
    parts, _ = make_parts()
    with pytest.raises(ValueError, match="overlap"):
        fd.build_federation([parts[0], parts[0]], md.ModelKind.KNN, md.TrainConfig())


def test_federated_predict_is_pointwise_mean():
    class Stub:
        def __init__(self, vec):
            self.vec = np.asarray(vec, dtype=np.float64)
        def predict_proba(self, x):
            return self.vec

    fed = fd.Federation((Stub([1.0, 0.0]), Stub([0.0, 1.0])), (None, None), 2, 2)
    assert np.allclose(fd.federated_predict(fed, np.zeros(2)), [0.5, 0.5])


def test_identical_parties_average_to_single_output():
    parts, _ = make_parts()
    model = md.fit(md.ModelKind.KNN, md.TrainConfig(), parts[0])
    fed = fd.Federation((model, model, model), tuple(parts), parts[0].m, parts[0].k)
    x = parts[1].features[0]
    assert np.allclose(fd.federated_predict(fed, x), model.predict_proba(x))


def test_federated_output_is_simplex():
    fed = small_federation()
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = fd.federated_predict(fed, rng.uniform(size=4))
        md.assert_probability_vector(p, 3)


def test_iid_parties_give_similar_outputs():
    parts, _ = make_parts(n=600, knob=0.0, seed=9)
    fed = fd.build_federation(parts, md.ModelKind.LOGISTIC_REGRESSION,
                              md.TrainConfig(epochs=200))
    rng = np.random.default_rng(1)
    probes = rng.uniform(size=(40, 4))
    for x in probes:
        vecs = [m.predict_proba(x) for m in fed.models]
        avg = np.mean(vecs, axis=0)
        for v in vecs:
            assert np.abs(v - avg).sum() < 0.2


# ---------------------------------------------------------------------------
# Insider attack
# ---------------------------------------------------------------------------

def hetero_federation(seed=0, knob=0.8, kind=md.ModelKind.DECISION_TREE):
    base = dk.synth_blobs(1200, 16, 8, 0.25, 13)
    parts = dk.disjoint_party_split(base, 3, knob, (seed, "split"))
    return fd.build_federation(parts, kind, md.TrainConfig())


def test_insider_attack_shapes_and_range():
    fed = hetero_federation()
    view = fd.InsiderView(fed, 2)
    probes, owners = fd.sample_member_probes(fed, 2, 30, 1)
    result = fd.insider_attack(view, probes, seed=1)
    assert result.attributions.shape == owners.shape
    assert set(result.attributions.tolist()) <= {0, 1}
    assert result.candidate_parties == (0, 1)
    # insider party column never scored
    assert np.all(result.confidences[:, 2] == 0.0)


def test_insider_beats_baseline_on_heterogeneous_split():
    fed = hetero_federation(seed=3)
    view = fd.InsiderView(fed, 2)
    probes, owners = fd.sample_member_probes(fed, 2, 60, 3)
    result = fd.insider_attack(view, probes, seed=3)
    metrics = fd.evaluate_insider(result, owners)
    assert metrics.accuracy > 0.6
    assert metrics.precision > 0.6


def test_memorizing_party_attracts_attribution():
    # one party's model memorizes its region; the other returns uniform
    class OneHot:
        def __init__(self, m, k):
            self.m, self.k = m, k
        def predict_proba(self, x):
            return np.eye(self.k)[0]

    class Uniform:
        def __init__(self, m, k):
            self.m, self.k = m, k
        def predict_proba(self, x):
            return np.full(self.k, 1.0 / self.k)

    parts, _ = make_parts(n=240, k=3)
    fed = fd.Federation(
        (OneHot(4, 3), Uniform(4, 3), md.fit(md.ModelKind.KNN, md.TrainConfig(), parts[2])),
        tuple(parts), 4, 3,
    )
    view = fd.InsiderView(fed, 2)
    probes = dk.Dataset(
        np.random.default_rng(0).uniform(size=(20, 4)), np.zeros(20, dtype=int), 3
    )
    result = fd.insider_attack(view, probes, seed=2)
    assert np.all(result.attributions == 0)


def test_insider_isolation_sealed_double():
    """Insider code may touch only per-party outputs and its own dataset."""
    fed = hetero_federation(seed=5)

    touched = []

    class SealedView(fd.InsiderView):
        def query_party(self, party, x):
            touched.append(party)
            return super().query_party(party, x)

    view = SealedView(fed, 2)
    probes, owners = fd.sample_member_probes(fed, 2, 10, 5)
    fd.insider_attack(view, probes, seed=5)
    assert set(touched) <= {0, 1}  # never queries itself, never reads datasets


def test_insider_baseline_at_uniform_split():
    # statistically identical parties + a generalizing model kind: attribution
    # collapses to the 1/(parties-1) baseline
    base = dk.synth_blobs(2400, 8, 10, 0.2, 13)
    accs = []
    for seed in range(10):
        parts = dk.disjoint_party_split(base, 3, 0.0, (seed, "s"))
        fed = fd.build_federation(parts, md.ModelKind.LOGISTIC_REGRESSION,
                                  md.TrainConfig(epochs=200))
        view = fd.InsiderView(fed, 2)
        probes, owners = fd.sample_member_probes(fed, 2, 50, (seed, "p"))
        result = fd.insider_attack(
            view, probes, gen_kind=md.ModelKind.LOGISTIC_REGRESSION,
            gen_config=md.TrainConfig(epochs=200), seed=(seed, "i"),
        )
        accs.append(fd.evaluate_insider(result, owners).accuracy)
    assert abs(float(np.mean(accs)) - 0.5) <= 0.07


def test_random_attribution_precision_baseline():
    rng = np.random.default_rng(7)
    owners = rng.integers(0, 2, size=2000)
    result = fd.InsiderAttackResult(
        attributions=rng.integers(0, 2, size=2000),
        confidences=np.zeros((2000, 3)),
        candidate_parties=(0, 1),
    )
    metrics = fd.evaluate_insider(result, owners)
    assert abs(metrics.precision - 0.5) < 0.05


# ---------------------------------------------------------------------------
# Outsider comparison and sweep
# ---------------------------------------------------------------------------

def test_outsider_weaker_than_insider_when_heterogeneous():
    base = dk.synth_blobs(1800, 32, 10, 0.3, 13)
    wins = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        idx = rng.permutation(len(base))
        fed_base, holdout = base.take(idx[:1200]), base.take(idx[1200:])
        parts = dk.disjoint_party_split(fed_base, 3, 0.8, (seed, "s"))
        fed = fd.build_federation(parts, md.ModelKind.DECISION_TREE, md.TrainConfig())
        out_acc = fd.outsider_attack_accuracy(fed, holdout, seed=seed)
        view = fd.InsiderView(fed, 2)
        probes, owners = fd.sample_member_probes(fed, 2, 75, (seed, "p"))
        in_acc = fd.evaluate_insider(
            fd.insider_attack(view, probes, seed=(seed, "i")), owners
        ).accuracy
        wins += in_acc > out_acc
    assert wins >= 3


def test_heterogeneity_sweep_deterministic():
    base = dk.synth_blobs(600, 8, 5, 0.2, 3)
    a = fd.heterogeneity_sweep(base, [0.0], parties=3, seed=4, probes_per_party=20)
    b = fd.heterogeneity_sweep(base, [0.0], parties=3, seed=4, probes_per_party=20)
    assert a == b


def test_sweep_csv_roundtrip(tmp_path):
    base = dk.synth_blobs(600, 8, 5, 0.2, 3)
    points = fd.heterogeneity_sweep(base, [0.0, 1.0], parties=3, seed=4,
                                    probes_per_party=20)
    path = tmp_path / "sweep.csv"
    fd.save_sweep(points, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("knob,")
    assert len(lines) == 3
