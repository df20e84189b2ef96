import filecmp
import json

import pytest

from bsdelab.cli import BRIDGE_CASES, bundled_configs, main


class TestRun:
    def test_bundled_name_passes(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["run", "--config", "heat_baseline", "--out", str(out), "--svg"]) == 0
        assert "heat_baseline: PASS" in capsys.readouterr().out
        s = json.loads((out / "summary.json").read_text())
        assert s["passed"] and s["config"]["case"] == "heat_baseline"
        assert any(p.suffix == ".svg" for p in out.iterdir())

    def test_repeatable(self, tmp_path):
        for d in ("a", "b"):
            assert main(["run", "--config", "lewy_stampacchia_stochastic", "--out", str(tmp_path / d)]) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
        assert not mismatch and not errors

    def test_failing_check_exits_one(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        text = bundled_configs()["clock_measure"].read_text()
        cfg.write_text(text.replace("dt_factor: 1.0", "dt_factor: -1.0"))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_bad_config_exits_two(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("schema_version: 1\ncase: clock_measure\nscheme: warp\n")
        assert main(["run", "--config", str(cfg)]) == 2
        assert "line 3" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [[], ["run"], ["run", "--config", "x", "--seed", "-3"],
                                      ["run", "--config", "x", "--jobs", "0"], ["fly"]])
    def test_usage_errors(self, argv):
        assert main(argv) == 2

    def test_missing_file_exits_two(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.yaml")]) == 2


class TestList:
    def test_all_and_filtered(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        assert all(name in out for name in bundled_configs())
        assert main(["list", "put"]) == 0
        out = capsys.readouterr().out
        assert "american_put_style" in out and "heat_baseline" not in out


class TestSweep:
    def test_table(self, tmp_path):
        out = tmp_path / "s"
        rc = main(["sweep", "--config", "clock_measure", "--param", "grid.n_steps", "--values", "200,400",
                   "--out", str(out)])
        assert rc == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("grid.n_steps,passed") and len(lines) == 3

    def test_invalid_value_rejected_before_running(self, tmp_path):
        rc = main(["sweep", "--config", "clock_measure", "--param", "grid.n_steps", "--values", "200,5",
                   "--out", str(tmp_path / "s")])
        assert rc == 2
        assert not (tmp_path / "s" / "000").exists()


class TestBridge:
    def test_single_config(self, tmp_path, capsys):
        assert set(BRIDGE_CASES) <= set(bundled_configs())
        assert main(["bridge", "--config", "heat_baseline", "--out", str(tmp_path / "b")]) == 0
        assert "s,x,pde,bsde" in capsys.readouterr().out
