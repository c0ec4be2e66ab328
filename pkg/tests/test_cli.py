import json
import subprocess
import sys

import pytest

from ctmc_waiting import config
from ctmc_waiting.cli import main


def _write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_validate_default(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "PASS plans.lln_two_state" in out and "FAIL" not in out


def test_list(capsys):
    assert main(["list"]) == 0
    assert "plan  naive_return: naive_return" in capsys.readouterr().out


def test_validate_names_bad_row(tmp_path, capsys):
    raw = config.default_raw()
    raw["models"]["cycle"]["jump_matrix"][1] = [0.0, 0.0, 0.9]
    assert main(["validate", "--config", _write(tmp_path, raw)]) == 1
    out = capsys.readouterr().out
    assert "models.cycle" in out and "row 1" in out and "row-stochasticity" in out


def test_validate_names_bad_schedule(tmp_path, capsys):
    raw = config.default_raw()
    raw["plans"]["lln_schedule"]["schedule"]["b"] = 0.6
    assert main(["validate", "--config", _write(tmp_path, raw)]) == 1
    out = capsys.readouterr().out
    assert "FAIL plans.lln_schedule" in out and "log n / (n delta_n^2)" in out


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"models": {\n  "a": [1, 2,\n}')
    assert main(["validate", "--config", str(path)]) == 1
    assert "line 3, column 1" in capsys.readouterr().err


class TestExact:
    def test_two_state_pair(self, capsys):
        assert main(["exact", "two_state_x", "two_state_y"]) == 0
        assert "s(P|P~) = 0.333333" in capsys.readouterr().out

    def test_cycle_reversed(self, capsys):
        assert main(["exact", "cycle", "--reversed"]) == 0
        assert "s(P|P~) = 1.757780" in capsys.readouterr().out

    def test_reversible_chain_is_zero(self, capsys):
        assert main(["exact", "cycle_symmetric", "--reversed"]) == 0
        assert "s(P|P~) = 0.000000" in capsys.readouterr().out

    def test_writes_curves(self, tmp_path):
        out = tmp_path / "exact"
        assert main(["exact", "two_state_x", "two_state_y", "--delta", "0.1", "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert {"scgf_E.csv", "scgf_F.csv", "rate_E.csv", "oracle.json"} <= names
        data = json.loads((out / "oracle.json").read_text())
        assert data["relative_entropy_rate"] == pytest.approx(1 / 3, abs=1e-12)
        assert data["m_delta"] > 0

    def test_absolute_continuity_exit_3(self, tmp_path, capsys):
        raw = config.default_raw()
        raw["models"]["one_way"] = {"states": [0, 1, 2], "escape_rates": [1, 1, 1],
                                    "jump_matrix": [[0, 1, 0], [0, 0, 1], [1, 0, 0]]}
        assert main(["exact", "cycle", "one_way", "--config", _write(tmp_path, raw)]) == 3
        assert "error" in capsys.readouterr().err

    def test_unknown_model(self, capsys):
        assert main(["exact", "nothing"]) == 1


class TestRun:
    def test_deterministic_files(self, tmp_path, capsys):
        args = ["run", "lln_two_state", "--replicas", "10", "--n", "40", "--seed", "5"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for suffix in ("json", "csv"):
            a = (tmp_path / "a" / f"lln_two_state.{suffix}").read_bytes()
            assert a == (tmp_path / "b" / f"lln_two_state.{suffix}").read_bytes()
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == lines[1] and lines[0].startswith("lln_two_state: estimate=")

    def test_zero_replicas(self, tmp_path, capsys):
        assert main(["run", "lln_two_state", "--replicas", "0", "--out", str(tmp_path)]) == 1
        assert "replicas" in capsys.readouterr().err

    def test_strict_on_cycle(self, tmp_path):
        # the estimator converges to the fixed-delta limit, far from s for the cycle at delta = 0.1
        args = ["run", "lln_cycle", "--replicas", "100", "--strict", "--out", str(tmp_path)]
        assert main(args) == 2

    def test_strict_passes_when_calibrated(self, tmp_path):
        args = ["run", "lln_two_state", "--replicas", "50", "--strict", "--seed", "1", "--out", str(tmp_path)]
        assert main(args) == 0

    def test_unknown_plan(self, tmp_path, capsys):
        assert main(["run", "nope", "--out", str(tmp_path)]) == 1
        assert "plans.nope" in capsys.readouterr().err

    def test_bad_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "lln_two_state", "--replicas", "many"])
        assert exc.value.code == 1


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ctmc_waiting", "exact", "two_state_x", "two_state_y"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0
    assert "0.333333" in proc.stdout
