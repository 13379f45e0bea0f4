import json

import pytest

from survstack.cli import main
from survstack.metrics import MetricReport


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run(["simulate", "--out", out, "--n", "400", "--seed", "5"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(tmp_path_factory, sim_dir):
    out = tmp_path_factory.mktemp("fit")
    code = run([
        "fit", "--train", sim_dir / "development.csv",
        "--schema", sim_dir / "schema.json", "--out", out,
        "--folds", "4", "--boot", "8", "--seed", "5",
    ])
    assert code == 0
    return out


class TestSimulate:
    def test_outputs_exist_with_requested_rows(self, sim_dir):
        for name in ("development.csv", "shifted.csv", "schema.json",
                     "drift_check.json", "true_risks_development.csv"):
            assert (sim_dir / name).exists()
        rows = (sim_dir / "development.csv").read_text().strip().splitlines()
        assert len(rows) == 401  # header + n

    def test_byte_identical_rerun(self, sim_dir, tmp_path):
        out2 = tmp_path / "again"
        assert run(["simulate", "--out", out2, "--n", "400", "--seed", "5"]) == 0
        for name in ("development.csv", "shifted.csv", "drift_check.json"):
            assert (sim_dir / name).read_bytes() == (out2 / name).read_bytes()

    def test_drift_flagged(self, sim_dir):
        check = json.loads((sim_dir / "drift_check.json").read_text())
        assert check["flag"] == "drift"

    def test_no_drift_flag(self, tmp_path):
        out = tmp_path / "nodrift"
        assert run(["simulate", "--out", out, "--n", "3000", "--seed", "6",
                    "--no-drift"]) == 0
        check = json.loads((out / "drift_check.json").read_text())
        assert check["flag"] == "no-drift"


class TestFit:
    def test_outputs(self, fit_dir):
        for name in ("model.json", "report.json", "calibration_curve.csv"):
            assert (fit_dir / name).exists()
        model = json.loads((fit_dir / "model.json").read_text())
        assert sum(model["weights"]) == pytest.approx(1.0, abs=1e-10)

    def test_single_learner_pool_weight_one(self, sim_dir, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "learners": [{"kind": "cox_main_terms"}],
        }))
        out = tmp_path / "single"
        assert run(["fit", "--train", sim_dir / "development.csv",
                    "--schema", sim_dir / "schema.json", "--out", out,
                    "--config", config, "--folds", "4", "--boot", "4",
                    "--seed", "3"]) == 0
        model = json.loads((out / "model.json").read_text())
        assert model["weights"] == [1.0]

    def test_rerun_byte_identical(self, sim_dir, fit_dir, tmp_path):
        out2 = tmp_path / "refit"
        assert run(["fit", "--train", sim_dir / "development.csv",
                    "--schema", sim_dir / "schema.json", "--out", out2,
                    "--folds", "4", "--boot", "8", "--seed", "5"]) == 0
        for name in ("model.json", "report.json", "calibration_curve.csv"):
            assert (fit_dir / name).read_bytes() == (out2 / name).read_bytes()

    def test_missing_train_file_exit_one(self, sim_dir, tmp_path, capsys):
        code = run(["fit", "--train", tmp_path / "nope.csv",
                    "--schema", sim_dir / "schema.json",
                    "--out", tmp_path / "x"])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ValidationError"


class TestValidate:
    def test_temporal_validation_and_drift_summary(self, sim_dir, fit_dir,
                                                   tmp_path):
        out = tmp_path / "val"
        code = run([
            "validate", "--model", fit_dir / "model.json",
            "--data", sim_dir / "shifted.csv",
            "--schema", sim_dir / "schema.json",
            "--dev-report", fit_dir / "report.json",
            "--out", out, "--boot", "8", "--seed", "5",
        ])
        assert code == 0
        assert (out / "validation_report.json").exists()
        assert (out / "validation_curve.csv").exists()
        summary = (out / "drift_summary.md").read_text()
        assert "Mean calibration" in summary
        assert "Brier score change" in summary

    def test_validate_against_training_matches_apparent(self, sim_dir,
                                                        fit_dir, tmp_path):
        out = tmp_path / "self"
        code = run([
            "validate", "--model", fit_dir / "model.json",
            "--data", sim_dir / "development.csv",
            "--schema", sim_dir / "schema.json",
            "--out", out, "--boot", "4", "--seed", "5",
        ])
        assert code == 0
        val = MetricReport.from_json(
            (out / "validation_report.json").read_text())
        dev = MetricReport.from_json((fit_dir / "report.json").read_text())
        assert val.metrics["tauroc"]["point"] == pytest.approx(
            dev.metrics["tauroc"]["point"], abs=1e-12
        )

    def test_missing_covariate_exit_one(self, sim_dir, fit_dir, tmp_path,
                                        capsys):
        # rewrite the validation csv without one covariate column
        import csv as csvmod

        src = (sim_dir / "shifted.csv").read_text().splitlines()
        header = src[0].split(",")
        drop = header.index("donor_age")
        crippled = tmp_path / "crippled.csv"
        with open(crippled, "w", newline="") as fh:
            writer = csvmod.writer(fh)
            for line in src:
                cells = line.split(",")
                writer.writerow(cells[:drop] + cells[drop + 1:])
        schema = json.loads((sim_dir / "schema.json").read_text())
        schema["covariates"] = [c for c in schema["covariates"]
                                if c != "donor_age"]
        schema_path = tmp_path / "crippled_schema.json"
        schema_path.write_text(json.dumps(schema))
        code = run(["validate", "--model", fit_dir / "model.json",
                    "--data", crippled, "--schema", schema_path,
                    "--out", tmp_path / "v2", "--boot", "4"])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert "donor_age" in err["message"]


class TestReport:
    def test_single_report_table(self, fit_dir, capsys):
        assert run(["report", fit_dir / "report.json"]) == 0
        table = capsys.readouterr().out
        assert "| Metric | report |" in table
        assert "tAUROC" in table

    def test_two_reports_share_rows(self, fit_dir, tmp_path, capsys):
        copy = tmp_path / "copy.json"
        copy.write_text((fit_dir / "report.json").read_text())
        assert run(["report", fit_dir / "report.json", copy]) == 0
        table = capsys.readouterr().out
        rows = [l for l in table.splitlines() if l.startswith("|")]
        assert all(row.count("|") == 4 for row in rows)

    def test_differing_horizons_warn(self, fit_dir, tmp_path, capsys):
        doc = json.loads((fit_dir / "report.json").read_text())
        doc["horizon"] = 5.0
        other = tmp_path / "other.json"
        other.write_text(json.dumps(doc))
        assert run(["report", fit_dir / "report.json", other]) == 0
        table = capsys.readouterr().out
        assert "Warning: reports use different horizons" in table
        assert "tau=5.0" in table
