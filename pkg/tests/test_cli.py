import json
import subprocess
import sys

import pytest

from conesphere.cli import main


def run_cli(args):
    return main(list(args))


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")


@pytest.fixture()
def n3_config(tmp_path):
    p = tmp_path / "n3.json"
    write_json(p, {"alphas": [0.8, 0.8, 0.8], "free_points": []})
    return p


@pytest.fixture()
def n4_config(tmp_path):
    p = tmp_path / "n4.json"
    write_json(p, {"alphas": [0.7, 0.7, 0.7, 0.7], "free_points": [[0.3, 0.0]],
                   "budget": "low"})
    return p


class TestSolveCommand:
    def test_n3_forced_values(self, n3_config, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = run_cli(["solve", str(n3_config), "-o", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["solve"]["c_zero"] == pytest.approx([0.48, 0.0], abs=1e-13)
        assert report["solve"]["c_one"] == pytest.approx([-0.48, 0.0], abs=1e-13)
        assert report["solve"]["status"] == "success"
        assert report["config"]["alphas"] == [0.8, 0.8, 0.8]

    def test_symmetric_c1_zero(self, tmp_path):
        cfg = tmp_path / "sym.json"
        write_json(cfg, {"alphas": [0.7] * 4, "free_points": [[0.5, 0.0]]})
        out = tmp_path / "report.json"
        assert run_cli(["solve", str(cfg), "-o", str(out)]) == 0
        report = json.loads(out.read_text())
        c1 = complex(*report["solve"]["free_accessories"][0])
        assert abs(c1) < 1e-6

    def test_invalid_orders_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        write_json(cfg, {"alphas": [0.5, 0.5, 0.5], "free_points": []})
        assert run_cli(["solve", str(cfg)]) == 2
        assert "validation" in capsys.readouterr().err

    def test_missing_file_exit_3(self, tmp_path):
        assert run_cli(["solve", str(tmp_path / "nope.json")]) == 3

    def test_malformed_json_exit_2(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json", encoding="utf-8")
        assert run_cli(["solve", str(p)]) == 2

    def test_unknown_field_exit_2(self, tmp_path):
        p = tmp_path / "extra.json"
        write_json(p, {"alphas": [0.8] * 3, "free_points": [], "bogus": 1})
        assert run_cli(["solve", str(p)]) == 2

    def test_deterministic_reports_identical(self, n3_config, tmp_path):
        out1 = tmp_path / "r1.json"
        out2 = tmp_path / "r2.json"
        assert run_cli(["solve", str(n3_config), "-o", str(out1)]) == 0
        assert run_cli(["solve", str(n3_config), "-o", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestVerifyCommand:
    def test_n3_skips_with_explanation(self, n3_config, tmp_path):
        out = tmp_path / "verify.json"
        assert run_cli(["verify", str(n3_config), "--which", "all",
                        "-o", str(out)]) == 0
        report = json.loads(out.read_text())
        assert "skipped" in report["verify"]
        assert "no free moduli" in report["verify"]["skipped"]

    def test_theorem2_low_budget(self, n4_config, tmp_path):
        out = tmp_path / "verify.json"
        code = run_cli(["verify", str(n4_config), "--which", "theorem2",
                        "-o", str(out)])
        report = json.loads(out.read_text())
        assert code == 0
        body = report["verify"]["theorem2"]
        assert body["passed"] is True
        assert body["residual"] < body["tolerance"]
        assert body["convention"] in ("D G", "D^T G", "D conj(G)", "D^T conj(G)")


class TestActionCommand:
    def test_action_with_convergence_table(self, n4_config, tmp_path):
        out = tmp_path / "action.json"
        table = tmp_path / "table.csv"
        code = run_cli(["action", str(n4_config), "-o", str(out),
                        "--convergence-csv", str(table)])
        assert code == 0
        report = json.loads(out.read_text())
        assert "value" in report["action"]
        lines = table.read_text().strip().splitlines()
        assert lines[0] == "eps,S_eps,extrapolant"
        assert len(lines) == 1 + len(report["action"]["eps_samples"])


class TestMetricCommand:
    def test_metric_report(self, n4_config, tmp_path):
        out = tmp_path / "metric.json"
        assert run_cli(["metric", str(n4_config), "-o", str(out)]) == 0
        report = json.loads(out.read_text())
        g11 = complex(*report["gram"]["matrix"][0][0])
        m11 = complex(*report["metric"]["matrix"][0][0])
        assert g11.real > 0
        assert m11.real == pytest.approx(1.0 / g11.real, rel=1e-10)


class TestSweepCommand:
    def test_small_real_sweep(self, n4_config, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        code = run_cli(["sweep", str(n4_config), "--grid", "0.35:0.65:3",
                        "--csv", str(csv_path)])
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].startswith("z1_re,z1_im,c1_re,c1_im")
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 3
        c_values = [float(r[2]) for r in rows]
        # real sweep keeps c real, and the sign flips across 1/2
        for r in rows:
            assert abs(float(r[3])) < 1e-6
        assert c_values[0] * c_values[-1] < 0

    def test_sweep_needs_one_modulus(self, n3_config):
        assert run_cli(["sweep", str(n3_config), "--grid", "0.2:0.8:3"]) == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "conesphere.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
