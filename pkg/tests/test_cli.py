import json
import subprocess
import sys

import numpy as np
import pytest

from piac.cli import main
from piac.scenario_io import DATA, read_timeseries


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_ieee39_mlpiac(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "run", "--scenario", "scenario_fig3.json", "--variant", "mlpiac",
                           "--out", str(tmp_path), "--every", "100")
    assert code == 0
    summary = json.loads((tmp_path / "ieee39-fig3_mlpiac_summary.json").read_text())
    assert summary == json.loads(out)
    assert summary["final_omega_max_pu"] < 1e-4
    assert summary["imbalance_residual"] < 1e-3
    header, data = read_timeseries(tmp_path / "ieee39-fig3_mlpiac.csv")
    assert header[0] == "t" and data[-1, 0] == pytest.approx(70.0)


def test_zero_horizon_is_usage_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--t-end", "0.0", "--out", str(tmp_path))
    assert code == 1 and "t_end" in err


@pytest.mark.parametrize("argv", [["frobnicate"], ["run", "--variant", "xpiac"], ["run", "--every", "0"],
                                  ["run", "--k1", "-1"], ["run", "--scenario", "/nonexistent.json"]])
def test_usage_errors(argv, capsys):
    assert run_cli(capsys, *argv)[0] == 1


def test_balanced_run_is_flat(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "run", "--scenario", "balanced.json", "--variant", "dpiac", "--dt", "0.01",
                         "--out", str(tmp_path))
    assert code == 0
    header, data = read_timeseries(tmp_path / "five-node-balanced_dpiac.csv")
    for k, name in enumerate(header):
        if name == "t":
            continue
        if name.startswith("freq_"):
            assert np.all(data[:, k] == 60.0)
        else:
            assert np.all(np.abs(data[:, k]) < 1e-9), name


def test_solver_failure_exit_code(tmp_path, capsys):
    doc = json.loads((DATA / "five_node.json").read_text())
    doc["disturbances"] = [{"at": 1.0, "node": 4, "delta_P": -6.0}]
    path = tmp_path / "crash.json"
    path.write_text(json.dumps(doc))
    code, out, _ = run_cli(capsys, "run", "--scenario", str(path), "--variant", "gbpiac", "--dt", "0.01",
                           "--t-end", "20", "--out", str(tmp_path))
    assert code == 2 and "error" in json.loads(out)
    assert list(tmp_path.glob("*_partial.csv"))


def test_compare_duplicate_variant_is_deterministic(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "compare", "--scenario", "five_node.json", "--variants", "mlpiac", "mlpiac",
                           "--dt", "0.01", "--t-end", "20", "--out", str(tmp_path))
    assert code == 0
    rows = json.loads(out)["variants"]
    assert rows["mlpiac"] == rows["mlpiac#1"]
    a = (tmp_path / "five-node-ring_mlpiac.csv").read_bytes()
    b = (tmp_path / "five-node-ring_mlpiac_1.csv").read_bytes()
    assert a == b


def test_compare_empty_list_is_usage_error(tmp_path, capsys):
    assert run_cli(capsys, "compare", "--variants", "--out", str(tmp_path))[0] == 1


def test_compare_ieee39_ordering(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "compare", "--variants", "gbpiac", "dpiac", "mlpiac", "--every", "100",
                           "--out", str(tmp_path))
    assert code == 0
    rows = json.loads(out)["variants"]
    assert rows["mlpiac"]["consensus_settle_5pct"] < rows["dpiac"]["consensus_settle_5pct"]
    assert rows["gbpiac"]["consensus_settle_5pct"] == 0.0
    heads = {v: read_timeseries(tmp_path / f"ieee39-fig3_{v}.csv")[1][:, 0] for v in rows}
    assert all(np.array_equal(heads["gbpiac"], t) for t in heads.values())
    assert (tmp_path / "comparison.json").exists()


def test_check_reports_unsatisfied(capsys):
    code, out, _ = run_cli(capsys, "check", "--variant", "mlpiac")
    rep = json.loads(out)
    assert code == 3
    assert rep["gain_condition"]["satisfied"] is False
    assert rep["no_overshoot"] is True
    assert [e["re"] for e in rep["us_eigenvalues"]] == pytest.approx([-0.8, -0.8])
    assert all(e["im"] == 0.0 for e in rep["us_eigenvalues"])


def test_check_with_published_extremes(capsys):
    code, out, _ = run_cli(capsys, "check", "--variant", "mlpiac", "--alpha-d-min", "70", "--alpha-d-max", "42560",
                           "--form", "reported")
    rep = json.loads(out)["gain_condition"]
    assert code == 3 and 100 < rep["required"] < 10000


def test_check_passes_for_gbpiac(capsys):
    assert run_cli(capsys, "check", "--variant", "gbpiac")[0] == 0


def test_decompose_two_areas(capsys):
    code, out, _ = run_cli(capsys, "decompose", "--scenario", "five_node.json", "--variant", "mlpiac")
    rep = json.loads(out)
    assert code == 0
    a = np.array(rep["alpha_R"])
    assert rep["eigenvalues"] == pytest.approx([0.0, a.sum()], abs=1e-12)
    assert rep["residuals"]["diagonalization"] < 1e-12


def test_dispatch_table(capsys):
    code, out, _ = run_cli(capsys, "dispatch", "--ps", "-1.98")
    rep = json.loads(out)
    assert code == 0 and len(rep["dispatch"]) == 39
    u = np.array([r["u"] for r in rep["dispatch"]])
    alpha = np.array([r["alpha"] for r in rep["dispatch"]])
    assert u.sum() == pytest.approx(1.98, abs=1e-12)
    np.testing.assert_allclose(alpha * u, rep["lambda_star"], rtol=1e-12)


def test_outputs_are_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert run_cli(capsys, "run", "--scenario", "five_node.json", "--variant", "dpiac", "--dt", "0.01",
                       "--t-end", "10", "--seed", "7", "--out", str(tmp_path / d))[0] == 0
    for name in ("five-node-ring_dpiac.csv", "five-node-ring_dpiac_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_json_format_and_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "piac.cli", "run", "--scenario", "five_node.json", "--dt", "0.05",
                           "--t-end", "6", "--format", "json", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    doc = json.loads((tmp_path / "five-node-ring_mlpiac.json").read_text())
    assert doc["columns"][0] == "t" and len(doc["data"]["t"]) == 121
