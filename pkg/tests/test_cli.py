import json

import pytest

from covert_kalman.cli import main


def write_config(path, obj):
    path.write_text(json.dumps(obj, indent=2))
    return str(path)


@pytest.fixture
def stable_config(tmp_path):
    return write_config(
        tmp_path / "stable.json",
        {
            "model": {"scenario": "mass_spring", "c1": 1.0, "c2": 1.0},
            "partition": {"auto": "stable", "rate_budget": 0.2, "row_budget": 2},
            "strategy": {"kind": "stochastic", "rate": 0.2},
            "run": {"horizon": 30, "trials": 4, "seed": 1},
        },
    )


@pytest.fixture
def unstable_config(tmp_path):
    return write_config(
        tmp_path / "unstable.json",
        {
            "model": {"scenario": "mass_spring", "c1": -1.0, "c2": -1.0},
            "partition": {"auto": "unstable"},
            "strategy": {"kind": "single", "delta": 1},
            "run": {"horizon": 25, "trials": 4, "seed": 1},
        },
    )


class TestValidate:
    def test_ok(self, stable_config, capsys):
        assert main(["validate", stable_config]) == 0
        out = capsys.readouterr().out
        assert "model: OK" in out
        assert "partition: OK" in out
        assert "strategy: OK" in out
        assert "config: OK" in out

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.json")]) == 1

    def test_bad_field_reports_path(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "bad.json",
            {"model": {"scenario": "mass_spring", "c1": "soft", "c2": 1.0}},
        )
        assert main(["validate", cfg]) == 1
        err = capsys.readouterr().err
        assert "model.c1" in err

    def test_bad_strategy_kind(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "bad.json",
            {
                "model": {"scenario": "mass_spring", "c1": 1.0, "c2": 1.0},
                "strategy": {"kind": "quantum"},
            },
        )
        assert main(["validate", cfg]) == 1
        assert "strategy.kind" in capsys.readouterr().err

    def test_missing_rate_budget_reports_path(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "bad.json",
            {
                "model": {"scenario": "mass_spring", "c1": 1.0, "c2": 1.0},
                "partition": {"auto": "stable"},
                "strategy": {"kind": "stochastic", "rate": 0.2},
            },
        )
        assert main(["validate", cfg]) == 1
        assert "partition.rate_budget" in capsys.readouterr().err

    def test_explicit_matrices(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "explicit.json",
            {
                "model": {
                    "A": [[0.5]],
                    "B": [[1.0]],
                    "C": [[1.0]],
                    "Q": [[1.0]],
                    "R": [[1.0]],
                    "x0_mean": [0.0],
                    "P0": [[0.5]],
                }
            },
        )
        assert main(["validate", cfg]) == 0
        assert "states=1" in capsys.readouterr().out


class TestDesign:
    def test_stable_design_json(self, stable_config, capsys):
        assert main(["design", stable_config]) == 0
        obj = json.loads(capsys.readouterr().out)
        assert obj["kind"] == "stable_stochastic"
        assert obj["m_bar"] == 1
        assert obj["frequency"] == pytest.approx(0.2)
        assert len(obj["S_bar"]) == 1
        assert len(obj["S"]) == 1

    def test_unstable_design_json(self, unstable_config, capsys):
        assert main(["design", unstable_config]) == 0
        obj = json.loads(capsys.readouterr().out)
        assert obj["kind"] == "unstable"
        assert abs(complex(obj["eigenvalue"][0], obj["eigenvalue"][1])) > 1.0

    def test_design_requires_auto_block(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "manual.json",
            {
                "model": {"scenario": "mass_spring", "c1": 1.0, "c2": 1.0},
                "partition": {"S_bar": [[1.0, 0.0]], "S": [[0.0, 1.0]]},
            },
        )
        assert main(["design", cfg]) == 1

    def test_auto_stable_on_unstable_plant_fails_numerically(self, tmp_path):
        cfg = write_config(
            tmp_path / "wrong.json",
            {
                "model": {"scenario": "mass_spring", "c1": -1.0, "c2": -1.0},
                "partition": {"auto": "stable", "rate_budget": 0.2, "row_budget": 2},
            },
        )
        assert main(["design", cfg]) == 2

    def test_out_file(self, stable_config, tmp_path):
        dest = tmp_path / "design.json"
        assert main(["design", stable_config, "--out", str(dest)]) == 0
        obj = json.loads(dest.read_text())
        assert obj["m_bar"] == 1


class TestAnalyze:
    def test_stable_report(self, stable_config, capsys):
        assert main(["analyze", stable_config]) == 0
        obj = json.loads(capsys.readouterr().out)
        assert obj["verdict"] == "converged"
        assert obj["N"] == 0
        assert obj["rho"] == pytest.approx(0.9836, abs=1e-3)
        assert obj["limits"]["eavesdropper_limit"] is not None
        assert "stochastic_expected_limit" in obj["limits"]

    def test_unstable_report(self, unstable_config, capsys):
        assert main(["analyze", unstable_config]) == 0
        obj = json.loads(capsys.readouterr().out)
        assert obj["verdict"] == "diverged"
        assert obj["rho"] == pytest.approx(1.0871, abs=1e-3)
        assert obj["limits"]["eavesdropper_limit"] is None
        assert obj["single_strategy"]["unbounded"] == "yes"


class TestSimulate:
    def test_csv_output(self, stable_config, tmp_path, capsys):
        dest = tmp_path / "mse.csv"
        assert main(["simulate", stable_config, "--out", str(dest)]) == 0
        lines = dest.read_text().strip().splitlines()
        assert lines[0] == "k,user_mse,eav_mse,eav_theory"
        assert len(lines) == 31

    def test_json_output_with_echo(self, stable_config, tmp_path):
        dest = tmp_path / "mse.json"
        assert (
            main(
                [
                    "simulate",
                    stable_config,
                    "--out",
                    str(dest),
                    "--format",
                    "json",
                    "--seed",
                    "99",
                ]
            )
            == 0
        )
        obj = json.loads(dest.read_text())
        assert obj["config_echo"]["seed"] == 99
        assert len(obj["eav_mse"]) == 30

    def test_plot_writes_png(self, stable_config, tmp_path):
        dest = tmp_path / "mse.csv"
        assert main(["simulate", stable_config, "--out", str(dest), "--plot"]) == 0
        png = tmp_path / "mse.png"
        assert png.exists()
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_seed_override_changes_results(self, stable_config, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", stable_config, "--out", str(a), "--seed", "1"])
        main(["simulate", stable_config, "--out", str(b), "--seed", "2"])
        assert a.read_text() != b.read_text()


class TestReproduce:
    def test_unstable_reference_bundle(self, tmp_path):
        out = tmp_path / "repro"
        assert (
            main(
                [
                    "reproduce",
                    "fig3",
                    "--out",
                    str(out),
                    "--trials",
                    "6",
                ]
            )
            == 0
        )
        csvs = sorted(p.name for p in out.glob("*.csv"))
        pngs = sorted(p.name for p in out.glob("*.png"))
        assert len(csvs) == 4
        assert len(pngs) == 5  # one per config plus an overlay
        assert "fig3.png" in pngs  # the four-curve overlay


class TestArgumentErrors:
    def test_unknown_flag(self, stable_config, capsys):
        assert main(["simulate", stable_config, "--bogus"]) == 1

    def test_no_command(self, capsys):
        assert main([]) == 1

    def test_unknown_figure(self, capsys):
        assert main(["reproduce", "fig9"]) == 1
