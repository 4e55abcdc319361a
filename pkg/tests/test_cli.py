import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from qcopula.cli import main
from qcopula.datasets import ASSETS, bundled_paths
from qcopula.marginals import StudentTMarginal, student_t_quantile
from qcopula.tcopula import TCopulaModel, kendall_tau_matrix, sample_t_copula

INDEX_DATA = os.environ.get("QCOPULA_INDEX_DATA")


def make_config(tmp_path, **sections):
    doc = {"version": 1, "output": "out"}
    doc.update(sections)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return path


def run(config, *args):
    return main([args[0], "--config", str(config), *args[1:]])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def manifest(tmp_path):
    return json.loads((tmp_path / "out" / "manifest.json").read_text())


@pytest.fixture(scope="module")
def classical_run(tmp_path_factory):
    """Full classical pipeline on the bundled four-index data."""
    root = tmp_path_factory.mktemp("classical")
    cfg = make_config(root, model={"kind": "classical_t"})
    for step in ("ingest", "fit-classical", "sample", "evaluate"):
        assert run(cfg, step) == 0
    return root, cfg


def test_ingest_stats_table(classical_run):
    root, _ = classical_run
    rows = read_csv(root / "out" / "stats.csv")
    assert rows[0][:8] == ["m", "Assets", "mu(%)", "sigma(%)", "s", "kappa", "Min(%)", "Max(%)"]
    assert [r[1] for r in rows[1:]] == list(ASSETS)
    assert all(r[0] == "4729" for r in rows[1:])


def test_ingest_is_byte_identical_on_rerun(classical_run, tmp_path):
    root, cfg = classical_run
    before = {k: v["sha256"] for k, v in manifest(root)["artifacts"].items()}
    assert run(cfg, "ingest") == 0
    after = {k: v["sha256"] for k, v in manifest(root)["artifacts"].items()}
    assert before == after


def test_manifest_has_no_orphans(classical_run):
    root, _ = classical_run
    doc = manifest(root)
    on_disk = {p.name for p in (root / "out").iterdir()} - {"manifest.json"}
    assert on_disk == set(doc["artifacts"])
    assert doc["config"]["version"] == 1 and doc["toolkit_version"]
    assert {"ingest", "fit-classical", "sample", "evaluate"} <= set(doc["steps"])
    assert doc["artifacts"]["test.csv"]["provenance"] == "test"
    assert doc["artifacts"]["train.csv"]["provenance"] == "train"


def test_pseudo_sample_sign_pattern(classical_run):
    root, _ = classical_run
    rows = np.array(read_csv(root / "out" / "pseudo_train.csv")[1:])[:, 1:].astype(float)
    tau = kendall_tau_matrix(rows)
    dji, vix, n225, rut = range(4)
    assert tau[dji, rut] > 0.5 and tau[dji, vix] < -0.3 and tau[vix, rut] < -0.3
    assert tau[dji, n225] > 0 and tau[vix, n225] < 0


def test_classical_samples_uniform(classical_run):
    root, _ = classical_run
    rows = np.array(read_csv(root / "out" / "samples_copula.csv")[1:])[:, 1:].astype(float)
    assert rows.shape == (100_000, 4)
    for j in range(4):
        assert stats.kstest(rows[:, j], "uniform").pvalue > 0.001


def test_evaluate_outputs(classical_run):
    root, _ = classical_run
    risk = json.loads((root / "out" / "risk.json").read_text())
    corr = json.loads((root / "out" / "correlators.json").read_text())
    assert set(risk) == {"copula", "return"} and set(corr) == {"model", "ground_truth"}
    for rep in risk.values():
        lo, hi = rep["ci"]["failure_ratio"]
        # a correctly specified model: the interval should cover 1
        assert lo <= 1.0 <= hi
    model = np.array(corr["model"]["pearson"])
    truth = np.array(corr["ground_truth"]["pearson"])
    assert np.abs(model - truth).max() < 0.05
    assert len(read_csv(root / "out" / "risk.csv")) == 1 + 2 * 4


@pytest.mark.skipif(not INDEX_DATA, reason="set QCOPULA_INDEX_DATA to the 2001-2020 index CSVs")
def test_classical_failure_ratio_on_index_data(tmp_path):
    paths = {a: str(Path(INDEX_DATA) / f"{a}.csv") for a in ASSETS}
    cfg = make_config(tmp_path, data={"paths": paths})
    for step in ("ingest", "fit-classical", "sample", "evaluate"):
        assert run(cfg, step) == 0
    risk = json.loads((tmp_path / "out" / "risk.json").read_text())
    assert risk["copula"]["failure_ratio"] <= 1.05


def test_report_prints_summary(classical_run, capsys):
    _, cfg = classical_run
    assert run(cfg, "report") == 0
    out = capsys.readouterr().out
    assert "failure=" in out and "DJI" in out


def test_provenance_tags_are_enforced(tmp_path, classical_run):
    root, _ = classical_run
    import shutil
    shutil.copytree(root / "out", tmp_path / "out")
    cfg = make_config(tmp_path)
    doc = manifest(tmp_path)
    doc["artifacts"]["pseudo_test.csv"]["provenance"] = "train"
    (tmp_path / "out" / "manifest.json").write_text(json.dumps(doc))
    assert run(cfg, "evaluate") == 2


def test_malformed_row_exit_code(tmp_path, capsys):
    good = bundled_paths()["DJI"].read_text().splitlines()
    good[5] = "2001-01-11,abc"
    (tmp_path / "A.csv").write_text("\n".join(good) + "\n")
    cfg = make_config(tmp_path, data={"paths": {"A": "A.csv", "B": str(bundled_paths()["VIX"])}})
    assert run(cfg, "ingest") == 3
    assert "A.csv:6" in capsys.readouterr().err


def test_one_asset_copula_refused(tmp_path):
    cfg = make_config(tmp_path, data={"paths": {"DJI": str(bundled_paths()["DJI"])}})
    assert run(cfg, "ingest") == 0
    assert run(cfg, "fit-classical") == 2


def test_config_errors(tmp_path):
    cfg = make_config(tmp_path, version=2)
    assert run(cfg, "ingest") == 2
    cfg = make_config(tmp_path, ansatz={"n": 3})
    assert run(cfg, "ingest") == 2
    cfg = make_config(tmp_path, ansatz={"m": 7})
    assert run(cfg, "ingest") == 2
    assert main(["ingest", "--config", str(tmp_path / "missing.json")]) == 2


def test_missing_model_names_path(tmp_path, capsys):
    cfg = make_config(tmp_path)
    assert run(cfg, "evaluate") == 3
    assert "samples_copula.csv" in capsys.readouterr().err


def write_price_dir(root, rows, names):
    """Turn a return matrix into price CSVs on consecutive calendar days."""
    import datetime as dt
    paths = {}
    start = dt.date(2000, 1, 1)
    for j, name in enumerate(names):
        prices = 100 * np.exp(np.concatenate([[0.0], np.cumsum(rows[:, j])]))
        path = root / f"{name}.csv"
        with path.open("w") as fh:
            fh.write("date,close\n")
            for i, p in enumerate(prices):
                fh.write(f"{start + dt.timedelta(days=i)},{float(p)!r}\n")
        paths[name] = str(path)
    return paths


def test_fit_classical_recovers_synthetic_copula(tmp_path):
    truth = TCopulaModel(np.array([[1.0, 0.7], [0.7, 1.0]]), 4.0)
    u = sample_t_copula(truth, 50_000, seed=3).rows
    marg = StudentTMarginal(0.0, 0.01, 5.0)
    returns = np.column_stack([student_t_quantile(marg, u[:, j]) for j in range(2)])
    paths = write_price_dir(tmp_path, returns, ["X", "Y"])
    cfg = make_config(tmp_path, data={"paths": paths})
    assert run(cfg, "ingest") == 0 and run(cfg, "fit-classical") == 0
    fit = TCopulaModel.load(tmp_path / "out" / "copula.json")
    assert fit.corr[0, 1] == pytest.approx(0.7, abs=0.02)
    assert 3 <= fit.dof <= 5.5


@pytest.fixture
def qcbm_config(tmp_path):
    paths = {a: str(bundled_paths()[a]) for a in ("DJI", "VIX", "N225")}
    cfg = make_config(tmp_path, data={"paths": paths}, model={"kind": "qcbm"},
                      ansatz={"n": 3, "m": 2, "L": 2})
    assert run(cfg, "ingest") == 0 and run(cfg, "fit-classical") == 0
    return cfg


def test_train_trace_length(qcbm_config, tmp_path):
    assert run(qcbm_config, "train") == 0
    assert len(read_csv(tmp_path / "out" / "trace.csv")) == 1 + 500
    ckpt = json.loads((tmp_path / "out" / "model.json").read_text())
    assert (ckpt["n"], ckpt["m"], ckpt["L"]) == (3, 2, 2) and len(ckpt["params"]) == 30


def test_train_annealing_trace_length(qcbm_config, tmp_path):
    assert run(qcbm_config, "train", "--set", "training.annealing.enabled=true") == 0
    trace = read_csv(tmp_path / "out" / "trace.csv")[1:]
    assert len(trace) == 41 * 200
    assert {r[3] for r in trace} == {str(c) for c in range(41)}


def test_train_flag_overrides(qcbm_config, tmp_path):
    assert run(qcbm_config, "train", "--set", "training.spsa.iterations=7", "--seed", "3",
               "--threads", "1") == 0
    assert len(read_csv(tmp_path / "out" / "trace.csv")) == 8
    assert manifest(tmp_path)["config"]["training"]["seed"] == 3


def test_train_resume_matches_unbroken(qcbm_config, tmp_path):
    out = tmp_path / "out"
    assert run(qcbm_config, "train", "--set", "training.spsa.iterations=40") == 0
    full = (out / "model.json").read_bytes(), (out / "trace.csv").read_bytes()
    assert run(qcbm_config, "train", "--set", "training.spsa.iterations=40", "--stop-after", "13") == 0
    assert len(read_csv(out / "trace.csv")) == 14
    assert run(qcbm_config, "train", "--set", "training.spsa.iterations=40", "--resume") == 0
    assert ((out / "model.json").read_bytes(), (out / "trace.csv").read_bytes()) == full


def test_qcbm_sample_counts(qcbm_config, tmp_path):
    assert run(qcbm_config, "train", "--set", "training.spsa.iterations=20") == 0
    assert run(qcbm_config, "sample", "--count", "5000") == 0
    for name in ("samples_copula.csv", "samples_return.csv"):
        assert len(read_csv(tmp_path / "out" / name)) == 5001
    assert run(qcbm_config, "sample", "--count", "0") == 0
    for name in ("samples_copula.csv", "samples_return.csv"):
        assert len(read_csv(tmp_path / "out" / name)) == 1


def test_shot_mode_defaults_to_5000_trials(qcbm_config, tmp_path):
    args = ("--set", "training.shots=4096", "--set", "training.spsa.iterations=5")
    assert run(qcbm_config, "train", *args) == 0
    assert run(qcbm_config, "sample", *args) == 0
    assert len(read_csv(tmp_path / "out" / "samples_copula.csv")) == 5001


def test_empirical_model_is_calibrated(tmp_path):
    cfg = make_config(tmp_path, model={"kind": "empirical"})
    for step in ("ingest", "fit-classical", "sample", "evaluate"):
        assert run(cfg, step) == 0
    risk = json.loads((tmp_path / "out" / "risk.json").read_text())
    for rep in risk.values():
        for key in ("failure_ratio", "severity_ratio"):
            lo, hi = rep["ci"][key]
            assert lo <= 1.0 <= hi, (rep["space"], key, rep[key], lo, hi)


def test_grid_sweep(tmp_path):
    paths = {a: str(bundled_paths()[a]) for a in ("DJI", "VIX")}
    cfg = make_config(tmp_path, data={"paths": paths}, model={"kind": "qcbm"},
                      training={"spsa": {"iterations": 20}},
                      evaluation={"samples": 20_000, "bootstrap": 100},
                      grid={"m": [1, 2], "L": [1, 2]})
    assert run(cfg, "run") == 0
    rows = read_csv(tmp_path / "out" / "grid.csv")
    assert rows[0][:3] == ["m", "L", "space"] and len(rows) == 1 + 4 * 2
    seeds = {json.loads((tmp_path / "out" / "grid" / f"m{m}_L{L}" / "model.json").read_text())["seed"]
             for m in (1, 2) for L in (1, 2)}
    assert len(seeds) == 4
