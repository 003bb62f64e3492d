import json

import numpy as np
import pytest
import yaml

from membrinf import expcli as xc
from membrinf import mitigation as mit


def tiny_config(**overrides):
    base = dict(
        experiment="matrix",
        dataset=xc.DatasetSpec(source="blobs", n=240, m=8, k=4, sigma=0.3, seed=3),
        target_kinds=("dt",),
        gen_kinds=("dt",),
        attack_kinds=("lr",),
        shadow_size=120,
        eval_size=40,
        fold_count=2,
        run_count=1,
        seed=1,
    )
    base.update(overrides)
    return xc.ExperimentConfig(**base)


TINY_YAML = """
experiment: matrix
dataset: {source: blobs, n: 240, m: 8, k: 4, sigma: 0.3, seed: 3}
models: {targets: [dt], generators: [dt], attacks: [lr]}
pipeline: {shadow_size: 120, eval_size: 40}
protocol: {folds: 2, runs: 1}
output: {directory: OUTDIR, formats: [csv, jsonl]}
seed: 1
"""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def test_parse_valid_config():
    cfg, errors = xc.parse_config(yaml.safe_load(TINY_YAML))
    assert errors == []
    assert cfg.experiment == "matrix"
    assert cfg.target_kinds == ("dt",)
    assert cfg.fold_count == 2


def test_parse_rejects_unknown_experiment():
    data = yaml.safe_load(TINY_YAML)
    data["experiment"] = "mystery"
    cfg, errors = xc.parse_config(data)
    assert cfg is None
    assert any("experiment" in e for e in errors)


def test_parse_rejects_unknown_model_kind():
    data = yaml.safe_load(TINY_YAML)
    data["models"]["targets"] = ["svm"]
    cfg, errors = xc.parse_config(data)
    assert cfg is None and any("svm" in e for e in errors)


def test_parse_rejects_missing_csv_path(tmp_path):
    data = yaml.safe_load(TINY_YAML)
    data["dataset"] = {"source": "csv", "path": str(tmp_path / "nope.csv")}
    cfg, errors = xc.parse_config(data)
    assert cfg is None and any("does not exist" in e for e in errors)


def test_config_hash_stable_and_sensitive():
    a = tiny_config()
    b = tiny_config()
    c = tiny_config(seed=2)
    assert xc.config_hash(a) == xc.config_hash(b)
    assert xc.config_hash(a) != xc.config_hash(c)


# ---------------------------------------------------------------------------
# fixed_model_stddev
# ---------------------------------------------------------------------------

def matrix_from(acc):
    kinds = ("dt", "knn", "lr", "nb")
    return xc.MatrixReport(kinds, kinds, kinds, acc, np.zeros_like(acc), {})


def test_fixed_std_all_equal_grid_is_zero():
    result = xc.fixed_model_stddev(matrix_from(np.full((4, 4, 4), 0.7)))
    assert result.fixed_target == result.fixed_gen == result.fixed_attack == 0.0


def test_fixed_std_target_only_dependence():
    acc = np.zeros((4, 4, 4))
    for t, level in enumerate((0.5, 0.6, 0.7, 0.8)):
        acc[t, :, :] = level
    result = xc.fixed_model_stddev(matrix_from(acc))
    assert result.fixed_target == 0.0
    assert result.fixed_gen > 0.0 and result.fixed_attack > 0.0


def test_fixed_std_incomplete_grid_lists_missing():
    acc = np.full((4, 4, 4), 0.6)
    acc[1, 2, 3] = np.nan
    with pytest.raises(ValueError, match=r"\(knn,lr,nb\)"):
        xc.fixed_model_stddev(matrix_from(acc))


def test_reference_oracle_reproduces_published_summary():
    result, ok = xc.run_reference_oracle()
    assert ok
    assert result.fixed_target == pytest.approx(0.0643, abs=0.0005)
    assert result.fixed_gen == pytest.approx(0.1233, abs=0.0005)
    assert result.fixed_attack == pytest.approx(0.1366, abs=0.0005)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def test_matrix_1x1x1_matches_direct_pipeline():
    from membrinf import pipeline as pl

    cfg = tiny_config()
    matrix, report = xc.run_matrix(cfg)
    assert matrix.accuracy.shape == (1, 1, 1)
    direct = pl.run_attack_pipeline(
        cfg.dataset.load(), cfg.pipeline_config("dt", "dt", "lr"),
        cfg.plan(), cfg.seed,
    )
    assert matrix.accuracy[0, 0, 0] == pytest.approx(direct.accuracy_mean)
    assert len(report.rows) == 1


def test_matrix_cell_count_and_errors_recorded():
    cfg = tiny_config(
        target_kinds=("dt", "nb"), gen_kinds=("dt", "knn"), attack_kinds=("lr", "nb"),
    )
    matrix, report = xc.run_matrix(cfg)
    assert len(report.rows) == 8
    assert matrix.errors == {}


def test_matrix_partial_failure_recorded_and_run_continues():
    # a shadow set this small cannot train partitioned shadow models: every
    # cell fails, is recorded, and the run still returns a report
    cfg = tiny_config(shadow_size=4, target_kinds=("dt", "nb"))
    matrix, report = xc.run_matrix(cfg)
    assert len(report.rows) == 2
    assert len(matrix.errors) == 2
    assert all(np.isnan(v) for v in matrix.accuracy.ravel())
    with pytest.raises(ValueError, match="incomplete grid"):
        xc.fixed_model_stddev(matrix)


def test_cli_partial_failure_exit_code(tmp_path, capsys):
    text = TINY_YAML.replace("shadow_size: 120", "shadow_size: 4")
    path = write_config(tmp_path, text)
    assert xc.main(["run", str(path)]) == xc.EXIT_PARTIAL
    assert "cell error" in capsys.readouterr().err


def test_max_combo_planted_maximum():
    kinds = ("dt", "knn", "lr", "nb")
    acc = np.full((4, 4, 4), 0.55)
    for i in range(4):
        acc[i, i, i] = 0.6 + 0.01 * i
    acc[0, 2, 3] = 0.95  # planted max: target=dt, gen=lr, attack=nb
    matrix = matrix_from(acc)
    cfg = tiny_config()
    report = xc.run_max_combo(cfg, matrix=matrix)
    rows = {r[0]: r for r in report.rows}
    assert rows["max"][1:4] == ("dt", "lr", "nb")
    assert rows["max"][4] == pytest.approx(0.95)
    assert rows["all_target_type"][4] == pytest.approx(0.60)
    assert rows["all_gen_type"][4] == pytest.approx(0.62)
    assert rows["all_attack_type"][4] == pytest.approx(0.63)
    for label in ("all_target_type", "all_gen_type", "all_attack_type"):
        assert rows[label][5] == pytest.approx(rows[label][4] - 0.95)


def test_data_driven_row_count():
    cfg = tiny_config(
        experiment="data_driven",
        dataset=xc.DatasetSpec(source="blobs", n=240, m=8, k=4, sigma=0.3, seed=3),
        k_grid=(3, 4),
        sigma_grid=(0.2, 0.3),
        eval_size=30,
    )
    report = xc.run_data_driven(cfg)
    assert len(report.rows) == 4
    assert report.errors == {}


def test_knowledge_sweep_shapes():
    cfg = tiny_config(experiment="target_noise", noise_grid=(0.0, 0.5), eval_size=30)
    report = xc.run_knowledge_sweep(cfg)
    assert [r[0] for r in report.rows] == [0.0, 0.5]


def test_mitigation_experiment_rows():
    cfg = tiny_config(
        experiment="mitigation",
        target_kinds=("lr",), gen_kinds=("lr",), attack_kinds=("lr",),
        policies=({"variant": mit.LABEL_ONLY},),
        lambda_grid=(10.0,),
        eval_size=30,
    )
    report = xc.run_mitigation(cfg)
    assert len(report.rows) == 3  # baseline + 1 policy + 1 lambda
    assert report.metadata["attack_configuration"]


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def test_emit_deterministic_bytes(tmp_path):
    cfg = tiny_config()
    _, report1 = xc.run_matrix(cfg)
    _, report2 = xc.run_matrix(cfg)
    p1 = xc.emit_report(report1, tmp_path / "a")
    p2 = xc.emit_report(report2, tmp_path / "b")
    for a, b in zip(p1, p2):
        assert a.read_bytes() == b.read_bytes()


def test_emit_jsonl_line_count_and_schema(tmp_path):
    cfg = tiny_config(
        target_kinds=("dt", "nb"), gen_kinds=("dt",), attack_kinds=("lr",),
    )
    _, report = xc.run_matrix(cfg)
    paths = xc.emit_report(report, tmp_path, formats=("csv", "jsonl"))
    jsonl = [p for p in paths if p.suffix == ".jsonl"][0]
    lines = jsonl.read_text().strip().splitlines()
    assert len(lines) == len(report.rows)
    for p in paths:
        assert xc.validate_report_file(p)


def test_report_without_provenance_fails_validation(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="provenance"):
        xc.validate_report_file(bad)
    bad_jsonl = tmp_path / "bad.jsonl"
    bad_jsonl.write_text(json.dumps({"a": 1}) + "\n")
    with pytest.raises(ValueError, match="provenance"):
        xc.validate_report_file(bad_jsonl)


def test_plot_data_axes(tmp_path):
    cfg = tiny_config(experiment="target_noise", noise_grid=(0.0, 0.5, 1.0),
                      eval_size=30)
    report = xc.run_knowledge_sweep(cfg)
    paths = xc.emit_report(report, tmp_path, formats=("plot",),
                           plot_axes=("x", "attack_accuracy", None))
    plot = paths[0]
    lines = [l for l in plot.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "x,y,series"
    assert len(lines) == 4


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def write_config(tmp_path, text=None):
    path = tmp_path / "exp.yaml"
    path.write_text((text or TINY_YAML).replace("OUTDIR", str(tmp_path / "out")))
    return path


def test_cli_validate_ok(tmp_path, capsys):
    assert xc.main(["validate", str(write_config(tmp_path))]) == xc.EXIT_OK
    assert "config ok" in capsys.readouterr().out


def test_cli_validate_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("experiment: nonsense\n")
    assert xc.main(["validate", str(path)]) == xc.EXIT_CONFIG_ERROR


def test_cli_validate_missing_file(tmp_path):
    assert xc.main(["validate", str(tmp_path / "nope.yaml")]) == xc.EXIT_CONFIG_ERROR


def test_cli_run_writes_reports(tmp_path, capsys):
    code = xc.main(["run", str(write_config(tmp_path))])
    assert code == xc.EXIT_OK
    out = capsys.readouterr().out
    assert "wrote" in out
    written = list((tmp_path / "out").iterdir())
    assert any(p.suffix == ".csv" for p in written)
    assert any(p.suffix == ".jsonl" for p in written)


def test_cli_run_seed_override_changes_hash(tmp_path):
    path = write_config(tmp_path)
    assert xc.main(["run", str(path)]) == xc.EXIT_OK
    assert xc.main(["run", str(path), "--seed", "9"]) == xc.EXIT_OK
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert len({n for n in names if n.endswith(".csv")}) == 2


def test_cli_oracle_table6(capsys):
    assert xc.main(["oracle", "table6"]) == xc.EXIT_OK
    assert "oracle PASS" in capsys.readouterr().out


def test_cli_exclusive_protocol_flags(tmp_path):
    path = write_config(tmp_path)
    code = xc.main(["run", str(path), "--desk", "--paper-protocol"])
    assert code == xc.EXIT_CONFIG_ERROR
