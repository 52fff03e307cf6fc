import csv
import json
import re

import numpy as np
import pytest

from petident.cli import main
from petident.experiments import default_scenario, scenario_to_dict


@pytest.fixture(scope="module")
def scenario_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenarios")
    scn = default_scenario()
    paths = {}
    for units in ("min", "s"):
        path = root / f"reference_{units}.json"
        path.write_text(json.dumps(scenario_to_dict(scn, units)))
        paths[units] = path
    return paths


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_writes_hundred_entry_measurement_file(self, scenario_files, tmp_path):
        out = tmp_path / "sim"
        assert run_cli("simulate", "--scenario", scenario_files["min"], "--out", out) == 0
        with open(out / "y_true.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 100
        assert {"x_true.csv", "y_true.csv", "curves.csv"} <= {
            p.name for p in out.iterdir()
        }

    def test_units_round_trip(self, scenario_files, tmp_path):
        out_min = tmp_path / "min"
        out_sec = tmp_path / "sec"
        run_cli("simulate", "--scenario", scenario_files["min"], "--out", out_min)
        run_cli("simulate", "--scenario", scenario_files["s"], "--out", out_sec)
        for name in ("x_true.csv", "y_true.csv", "curves.csv"):
            assert (out_min / name).read_bytes() == (out_sec / name).read_bytes()

    def test_invalid_json_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("not json {")
        assert run_cli("simulate", "--scenario", bad, "--out", tmp_path / "o") == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert run_cli("simulate", "--scenario", tmp_path / "nope.json", "--out", tmp_path) == 2


class TestIdentify:
    def test_noiseless_small_perturbation_recovers(self, scenario_files, tmp_path, capsys):
        code = run_cli(
            "identify", "--scenario", scenario_files["min"], "--synthesize",
            "--delta-x", "0.01", "--out", tmp_path,
        )
        assert code == 0
        out = capsys.readouterr().out
        match = re.search(r"rel_error: ([0-9.e+-]+)", out)
        assert match and float(match.group(1)) < 1e-4
        trace = (tmp_path / "identify_trace.csv").read_text().splitlines()
        assert trace[0] == "iter,residual_norm,rel_error"

    def test_known_cart_mode_reflected(self, scenario_files, tmp_path, capsys):
        code = run_cli(
            "identify", "--scenario", scenario_files["min"], "--synthesize",
            "--mode", "known_cart", "--max-iter", "20", "--out", tmp_path,
        )
        assert code == 0
        assert "mode: known_cart" in capsys.readouterr().out

    def test_tau_below_one_rejected(self, scenario_files, tmp_path):
        code = run_cli(
            "identify", "--scenario", scenario_files["min"], "--synthesize",
            "--tau", "0.9", "--out", tmp_path,
        )
        assert code == 1

    def test_data_dimension_mismatch_exits_2(self, scenario_files, tmp_path):
        data = tmp_path / "short.json"
        data.write_text(json.dumps({"y": [0.0] * 55}))
        code = run_cli(
            "identify", "--scenario", scenario_files["min"], "--data", data,
            "--out", tmp_path,
        )
        assert code == 2

    def test_simulated_file_feeds_back(self, scenario_files, tmp_path, capsys):
        out = tmp_path / "sim"
        run_cli("simulate", "--scenario", scenario_files["min"], "--out", out)
        capsys.readouterr()
        code = run_cli(
            "identify", "--scenario", scenario_files["min"],
            "--data", out / "y_true.csv", "--delta-x", "0.01",
            "--out", tmp_path,
        )
        assert code == 0
        assert "stop:" in capsys.readouterr().out


class TestCheck:
    def test_reference_scenario_report(self, scenario_files, capsys):
        assert run_cli("check", "--scenario", scenario_files["min"]) == 0
        out = capsys.readouterr().out
        assert "region diversity: satisfied" in out
        assert "T=25 >= 12 OK" in out

    def test_short_grid_warns(self, tmp_path, capsys):
        data = scenario_to_dict(default_scenario())
        data["grid"] = {"times": np.linspace(0, 62.5, 10).tolist()}
        path = tmp_path / "short.json"
        path.write_text(json.dumps(data))
        assert run_cli("check", "--scenario", path) == 0
        assert "warning T=10 < 12" in capsys.readouterr().out

    def test_duplicate_regions_named_clause(self, tmp_path, capsys):
        data = scenario_to_dict(default_scenario())
        data["regions"] = [data["regions"][0]] * 3
        data.pop("n", None)
        path = tmp_path / "dup.json"
        path.write_text(json.dumps(data))
        assert run_cli("check", "--scenario", path) == 0
        out = capsys.readouterr().out
        assert "VIOLATED" in out
        assert "k3 not pairwise distinct" in out


class TestJaccheck:
    def test_default_passes(self, capsys):
        assert run_cli("jaccheck", "--trials", "5") == 0
        assert "PASS" in capsys.readouterr().out

    def test_corruption_detected(self, capsys):
        code = run_cli("jaccheck", "--trials", "2", "--corrupt", "74", "0", "0.01")
        assert code == 3
        assert "FAIL" in capsys.readouterr().out

    def test_zero_trials_is_usage_error(self):
        assert run_cli("jaccheck", "--trials", "0") == 1


class TestReproduce:
    def test_campaign_file(self, scenario_files, tmp_path, capsys):
        campaign = tmp_path / "campaign.json"
        campaign.write_text(
            json.dumps(
                {"delta_y": 1e-3, "delta_x": 0.05, "repetitions": 3, "seed": 9}
            )
        )
        out = tmp_path / "rep"
        code = run_cli(
            "reproduce", "--campaign", campaign, "--scenario",
            scenario_files["min"], "--out", out,
        )
        assert code == 0
        table = (out / "table1.csv").read_text().splitlines()
        assert len(table) == 2 and table[0].startswith("delta_y,")
        assert (out / "results.json").exists()

    def test_requires_exactly_one_source(self, tmp_path):
        assert run_cli("reproduce", "--out", tmp_path) == 1

    def test_rerun_is_byte_identical(self, scenario_files, tmp_path):
        campaign = tmp_path / "campaign.json"
        campaign.write_text(
            json.dumps(
                {"delta_y": 1e-3, "delta_x": 0.1, "repetitions": 4, "seed": 17}
            )
        )
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli(
                "reproduce", "--campaign", campaign, "--scenario",
                scenario_files["min"], "--out", out,
            ) == 0
            outs.append(out)
        files_a = sorted(p.name for p in outs[0].iterdir())
        files_b = sorted(p.name for p in outs[1].iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
