import csv
import io
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from conftest import FIGURE_CONFIGS, config_dict, config_path, summary_schema

from actin_rlc.cli import main
from actin_rlc.config import gate_to_dict
from actin_rlc.params import DerivationInputs, derive_params

UNFORCED_GATE = {"gate": {"name": "AND_u", "inputs": [1, 1]}}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


def read_csv(path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    return rows[0], np.array(rows[1:], dtype=float)


class TestDeriveParams:
    def test_table(self, capsys):
        code, out, _ = run(capsys, "derive-params")
        assert code == 0
        for name in ("lambda_B", "C0", "L", "rho", "R1", "R2"):
            assert any(line.startswith(name) for line in out.splitlines())
        assert "pF" in out and "Mohm" in out

    def test_json_matches_library(self, capsys):
        code, out, _ = run(capsys, "derive-params", "--json")
        doc = json.loads(out)
        d = derive_params(DerivationInputs())
        assert doc["derived"]["R1_ohm"] == d.R1 and doc["derived"]["C0_pF"] == pytest.approx(d.capacitance * 1e12)
        assert doc["inputs"]["dielectric_constant"] == 80.0

    def test_table_agrees_with_json(self, capsys):
        _, text, _ = run(capsys, "derive-params")
        _, js, _ = run(capsys, "derive-params", "--json")
        derived = json.loads(js)["derived"]
        r1 = next(line for line in text.splitlines() if line.startswith("R1"))
        assert float(r1.split()[1]) == pytest.approx(derived["R1_ohm"], rel=1e-5)

    def test_override(self, capsys):
        _, out, _ = run(capsys, "derive-params", "--json", "--dielectric-constant", "40")
        derived = json.loads(out)["derived"]
        assert derived["bjerrum_length_m"] == pytest.approx(1.42577599646e-9, rel=1e-9)


class TestSimulate:
    def test_zero_stimulus_is_all_zero(self, capsys, tmp_path):
        cfg = config_dict("fig2a")
        cfg["stimuli"] = []
        cfg["run"] = {"t_end_ns": 1.0}
        code, _, _ = run(capsys, "simulate", write_json(tmp_path / "c.json", cfg), tmp_path / "out")
        assert code == 0
        header, data = read_csv(tmp_path / "out" / "trace.csv")
        assert header == ["t_ns"] + [f"V{i}" for i in range(1, 21)]
        assert np.all(data[:, 1:] == 0.0)
        assert (tmp_path / "out" / "raster.pbm").read_bytes().startswith(b"P1")

    def test_fig2a_outputs(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", config_path("fig2a"), tmp_path)
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        jsonschema.validate(summary, summary_schema())
        assert summary["n_samples"] == 1001 and summary["step_t0_ns"] == 3.0
        assert summary["speed_m_per_s"] > 0
        _, data = read_csv(tmp_path / "trace.csv")
        assert data[-1, 0] == pytest.approx(10.0)
        assert data[0, 1] == pytest.approx(1.0, abs=0.01) and abs(data[-1, 1]) < 1e-5

    def test_fig3b_antisymmetric(self, capsys, tmp_path):
        assert run(capsys, "simulate", config_path("fig3b"), tmp_path)[0] == 0
        _, data = read_csv(tmp_path / "trace.csv")
        v = data[:, 1:]
        assert np.max(np.abs(v + v[:, ::-1])) < 1e-10

    def test_gate_summary(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", write_json(tmp_path / "g.json", UNFORCED_GATE), tmp_path / "o")
        assert code == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        jsonschema.validate(summary, summary_schema())
        assert summary["gate"]["rows"] == [{"inputs": [1, 1], "level": pytest.approx(summary["gate"]["rows"][0]["level"]), "bit": 1, "expected": 1}]

    def test_bad_config_exit_1(self, capsys, tmp_path):
        cfg = config_dict("fig2a")
        cfg["run"]["dampening"] = 1
        code, _, err = run(capsys, "simulate", write_json(tmp_path / "c.json", cfg), tmp_path / "o")
        assert code == 1 and "dampening" in err

    def test_missing_file_exit_1(self, capsys, tmp_path):
        assert run(capsys, "simulate", tmp_path / "nope.json", tmp_path / "o")[0] == 1

    def test_truth_table_config_needs_inputs(self, capsys, tmp_path):
        path = write_json(tmp_path / "g.json", {"gate": {"name": "AND_u"}})
        assert run(capsys, "simulate", path, tmp_path / "o")[0] == 1

    def test_numerical_failure_exit_2(self, capsys, tmp_path):
        cfg = config_dict("fig2a")
        cfg["run"] = {"t_end_ns": 1.0, "dt_ns": 0.01, "method": "explicit_rk4"}
        code, _, err = run(capsys, "simulate", write_json(tmp_path / "c.json", cfg), tmp_path / "o")
        assert code == 2 and "non-finite" in err
        assert (tmp_path / "o" / "trace.csv.partial").exists()
        assert not (tmp_path / "o" / "trace.csv").exists()

    def test_repeat_byte_identical(self, capsys, tmp_path):
        path = write_json(tmp_path / "g.json", UNFORCED_GATE)
        for d in ("a", "b"):
            assert run(capsys, "simulate", path, tmp_path / d)[0] == 0
        for f in ("trace.csv", "raster.pbm", "summary.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


class TestGate:
    def test_truth_table_text(self, capsys):
        code, out, _ = run(capsys, "gate", "AND_u", "--truth-table")
        assert code == 0
        assert out.splitlines()[-1] == "out: 0,0,0,1"
        assert out.splitlines()[0].startswith("AND_u 00 -> out=0")

    def test_half_adder(self, capsys):
        code, out, _ = run(capsys, "gate", "HALFADDER_f", "1", "1")
        assert code == 0 and "carry=1 sum=0" in out

    def test_json_and_raster(self, capsys, tmp_path):
        code, out, _ = run(capsys, "gate", "OR_u", "--truth-table", "--json", "--raster", tmp_path)
        doc = json.loads(out)
        assert doc["columns"] == {"out": [0, 1, 1, 1]} and doc["margins"]["out"] > 0.1
        assert sorted(p.name for p in tmp_path.iterdir()) == [f"OR_u_{b}.pbm" for b in ("00", "01", "10", "11")]

    def test_cascade(self, capsys):
        code, out, _ = run(capsys, "gate", "XOR_u_cascade", "10", "--json")
        doc = json.loads(out)
        assert doc["rows"][0]["bits"] == {"and2": 1}
        assert doc["rows"][0]["signals"] == {"and1": 0, "not": 1, "or": 1, "and2": 1}

    def test_threshold_override(self, capsys):
        _, out, _ = run(capsys, "gate", "OR_u", "1", "0", "--threshold", "0.9")
        assert "out=0" in out
        assert run(capsys, "gate", "OR_u", "1", "0", "--threshold", "1.5")[0] == 1

    def test_uncalibrated_file_exit_2(self, capsys, tmp_path, library):
        d = gate_to_dict(library["AND_u"])
        del d["calibration"]
        code, _, err = run(capsys, "gate", write_json(tmp_path / "g.json", d), "11")
        assert code == 2 and "calibrat" in err

    def test_calibrated_file(self, capsys, tmp_path, library):
        path = write_json(tmp_path / "g.json", gate_to_dict(library["NOT_u"]))
        _, out, _ = run(capsys, "gate", path, "--truth-table")
        assert out.splitlines()[-1] == "out: 1,0"

    @pytest.mark.parametrize("bits", [["1"], ["1", "2"], ["111"]])
    def test_bad_bits(self, capsys, bits):
        assert run(capsys, "gate", "AND_u", *bits)[0] == 1

    def test_unknown_gate(self, capsys):
        assert run(capsys, "gate", "NAND_u", "11")[0] == 1


class TestSweep:
    def test_single_point_matches_simulate(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "c.json", config_dict("fig2a"))
        code, out, _ = run(capsys, "sweep", cfg, "--param", "run.t_end_ns=10")
        assert code == 0
        row = next(csv.DictReader(io.StringIO(out)))
        run(capsys, "simulate", cfg, tmp_path / "s")
        summary = json.loads((tmp_path / "s" / "summary.json").read_text())
        assert float(row["speed_m_per_s"]) == summary["speed_m_per_s"]
        assert float(row["peak_v"]) == max(summary["peak_v"])
        assert row["status"] == "ok"

    def test_threshold_grid_argmax_is_calibrated(self, capsys, tmp_path, library):
        g = library["AND_u"]
        lv = g.calibration["levels"]
        mid = g.calibration["threshold_fraction"]
        grid = {"readout.threshold_fraction": [0.05, 0.1, mid, 0.25]}
        cfg = write_json(tmp_path / "c.json", {"gate": {"name": "AND_u"}})
        code, out, _ = run(capsys, "sweep", cfg, "--grid", write_json(tmp_path / "grid.json", grid), "-o", tmp_path / "s.csv")
        assert code == 0 and out == ""
        rows = list(csv.DictReader(io.StringIO((tmp_path / "s.csv").read_text())))
        tm = [float(r["threshold_margin"]) for r in rows]
        assert float(rows[tm.index(max(tm))]["readout.threshold_fraction"]) == mid
        assert max(tm) == pytest.approx(g.calibration["margin"] / 2, rel=1e-9)
        assert rows[2]["bits"] == "0001" and rows[0]["bits"] != "0001"
        assert lv["11"] > mid

    def test_errors_recorded_per_point(self, capsys, tmp_path):
        cfg = config_dict("fig2a")
        cfg["run"] = {"t_end_ns": 0.5}
        path = write_json(tmp_path / "c.json", cfg)
        code, out, _ = run(capsys, "sweep", path, "--param", "run.newton_max_iters=1,25", "--param", "filament.params.R1_ohm=6.11e6,-1")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert [(r["run.newton_max_iters"], r["filament.params.R1_ohm"]) for r in rows] == [
            ("1", "6110000.0"), ("1", "-1"), ("25", "6110000.0"), ("25", "-1"),
        ]
        assert [r["status"] for r in rows] == ["numerical_error", "config_error", "ok", "config_error"]
        assert rows[0]["error"] and rows[2]["error"] == ""

    def test_deterministic_parallel(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"gate": {"name": "OR_u"}})
        _, a, _ = run(capsys, "sweep", cfg, "--param", "readout.threshold_fraction=0.1,0.2")
        _, b, _ = run(capsys, "sweep", cfg, "--param", "readout.threshold_fraction=0.1,0.2", "--workers", "2")
        assert a == b

    @pytest.mark.parametrize("arg", ["run.t_end_ns", "run.t_end_ns=a"])
    def test_bad_param(self, capsys, tmp_path, arg):
        cfg = write_json(tmp_path / "c.json", config_dict("fig2a"))
        assert run(capsys, "sweep", cfg, "--param", arg)[0] == 1


class TestCalibrate:
    def test_threshold_only(self, capsys, tmp_path, library):
        code, out, _ = run(capsys, "calibrate", "OR_u", "--free", "threshold", "-o", tmp_path / "g.json")
        doc = json.loads(out)
        assert code == 0 and doc["threshold_fraction"] == library["OR_u"].readout.threshold_fraction
        saved = json.loads((tmp_path / "g.json").read_text())
        assert saved["calibration"]["margin"] == doc["margin"]

    def test_cascade_rejected(self, capsys):
        assert run(capsys, "calibrate", "XOR_u_cascade")[0] == 1


@pytest.mark.parametrize("name", FIGURE_CONFIGS)
def test_shipped_configs_exit_zero(capsys, tmp_path, name):
    assert run(capsys, "simulate", config_path(name), tmp_path)[0] == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "actin_rlc", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("actin-rlc")
