import json
from pathlib import Path

import numpy as np
import pytest

from sparseband.cli import main
from sparseband import hsdata
from sparseband.spca import fit as fit_model, group_cardinality, load_basis
from sparseband.treesearch import TreeConfig


def run_cli(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def strip_duration(text):
    data = json.loads(text)
    data["manifest"].pop("duration_sec")
    return json.dumps(data, sort_keys=True)


@pytest.fixture()
def lowrank_csv(tmp_path, capsys):
    path = tmp_path / "data.csv"
    code, _ = run_cli(capsys, [
        "synth", "--kind", "group-lowrank", "--n", "120", "--bands", "6",
        "--group-size", "3", "--active", "0,1", "--noise-sigma", "0.02",
        "--seed", "7", "--out", str(path)])
    assert code == 0
    return path


@pytest.fixture()
def ink_page(tmp_path, capsys):
    cube = tmp_path / "page.hsc"
    truth = tmp_path / "truth.pgm"
    code, _ = run_cli(capsys, [
        "synth", "--kind", "ink-page", "--width", "96", "--height", "96",
        "--bands", "8", "--seed", "4", "--noise-sigma", "1.0",
        "--out", str(cube), "--truth-out", str(truth)])
    assert code == 0
    return cube, truth


class TestSynthDeterminism:
    def test_same_seed_byte_identical_files(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["synth", "--kind", "group-lowrank", "--seed", "7", "--n", "50",
                "--bands", "4", "--group-size", "2"]
        assert run_cli(capsys, argv + ["--out", str(a)])[0] == 0
        assert run_cli(capsys, argv + ["--out", str(b)])[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_page_and_truth_byte_identical(self, tmp_path, capsys):
        outs = []
        for tag in ("a", "b"):
            cube = tmp_path / f"{tag}.hsc"
            truth = tmp_path / f"{tag}.pgm"
            run_cli(capsys, ["synth", "--kind", "ink-page", "--seed", "9",
                             "--width", "48", "--height", "48", "--bands", "4",
                             "--out", str(cube), "--truth-out", str(truth)])
            outs.append((cube.read_bytes(), truth.read_bytes()))
        assert outs[0] == outs[1]


class TestFitAndEval:
    def test_lambda_zero_fit_then_eval(self, tmp_path, capsys, lowrank_csv):
        model = tmp_path / "model.sbm"
        code, out = run_cli(capsys, [
            "fit", "--data", str(lowrank_csv), "--algorithm", "jgspca",
            "--lambda", "0", "--out", str(model)])
        assert code == 0
        report = json.loads(out)["report"]
        assert report["converged"] is True
        code, out = run_cli(capsys, [
            "eval-recon", "--train", str(lowrank_csv), "--model", str(model)])
        assert code == 0
        curve = json.loads(out)["report"]["curve"]
        assert curve[0]["error"] < 1e-6

    def test_mean_out_csv(self, tmp_path, capsys, lowrank_csv):
        model = tmp_path / "model.sbm"
        mean_csv = tmp_path / "mean.csv"
        run_cli(capsys, ["fit", "--data", str(lowrank_csv), "--algorithm",
                         "jspca", "--lambda", "0.5", "--out", str(model),
                         "--mean-out", str(mean_csv)])
        text = mean_csv.read_text().splitlines()
        assert text[0] == "column_mean"
        assert len(text) == 1 + 18


class TestTreeSearchCli:
    def test_report_map_reverifies_by_refit(self, tmp_path, capsys, lowrank_csv):
        models_dir = tmp_path / "models"
        code, out = run_cli(capsys, [
            "tree-search", "--data", str(lowrank_csv), "--algorithm", "jgspca",
            "--depth", "4", "--save-models", str(models_dir),
            "--csv", str(tmp_path / "nodes.csv")])
        assert code == 0
        report = json.loads(out)["report"]
        dm = hsdata.load_matrix_csv(lowrank_csv)
        for r_str, entry in report["map"].items():
            basis = fit_model(dm, "jgspca", entry["lambda"], TreeConfig().fit_config)
            assert group_cardinality(basis.B, dm.groups) == int(r_str)
            saved = load_basis(entry["model"])
            assert saved.lam == entry["lambda"]
        assert (tmp_path / "nodes.csv").exists()


class TestInkDetectCli:
    def test_detect_with_truth_and_outputs(self, tmp_path, capsys, ink_page):
        cube, truth = ink_page
        pred = tmp_path / "pred.pgm"
        code, out = run_cli(capsys, [
            "ink-detect", "--cube", str(cube), "--truth", str(truth),
            "--window", "17", "--out-labels", str(pred)])
        assert code == 0
        report = json.loads(out)["report"]
        assert report["accuracy"] == 1.0
        img = hsdata.load_pgm(pred)
        assert set(np.unique(img)) <= {0, 1, 2}

    def test_band_restriction_flag(self, capsys, ink_page):
        cube, truth = ink_page
        code, out = run_cli(capsys, [
            "ink-detect", "--cube", str(cube), "--truth", str(truth),
            "--window", "17", "--bands", "0,1"])
        assert code == 0
        assert json.loads(out)["report"]["bands_used"] == [0, 1]


class TestSegmentCli:
    def test_mask_written(self, tmp_path, capsys, ink_page):
        cube, _ = ink_page
        mask_path = tmp_path / "mask.pgm"
        code, out = run_cli(capsys, [
            "segment", "--cube", str(cube), "--window", "17",
            "--out", str(mask_path)])
        assert code == 0
        report = json.loads(out)["report"]
        assert 0.0 < report["ink_density"] < 0.5
        mask = hsdata.load_pgm(mask_path)
        assert set(np.unique(mask)) <= {0, 255}


class TestSelectBandsCli:
    def test_sfbs_and_jsbs(self, tmp_path, capsys):
        spectra = tmp_path / "spectra.csv"
        labels = tmp_path / "labels.csv"
        run_cli(capsys, ["synth", "--kind", "ink-scene", "--n-per-ink", "60",
                         "--bands", "8", "--separable-band", "3", "--gap", "1.0",
                         "--noise-sigma", "0.05", "--seed", "2",
                         "--out", str(spectra), "--labels-out", str(labels)])
        code, out = run_cli(capsys, [
            "select-bands", "--spectra", str(spectra), "--labels", str(labels),
            "--method", "sfbs", "--csv", str(tmp_path / "trace.csv")])
        assert code == 0
        assert json.loads(out)["report"]["selected_bands"] == [3]
        code, out = run_cli(capsys, [
            "select-bands", "--spectra", str(spectra), "--labels", str(labels),
            "--method", "jsbs", "--lambda", "2.0"])
        assert code == 0
        assert json.loads(out)["report"]["selected_bands"] == [3]


class TestExitCodes:
    def test_usage_error_is_two(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["fit", "--no-such-flag"])
        assert err.value.code == 2

    def test_unknown_subcommand_is_two(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_missing_file_is_one(self, capsys):
        code = main(["fit", "--data", "/nonexistent.csv", "--algorithm",
                     "jspca", "--lambda", "0", "--out", "/tmp/x.sbm"])
        assert code == 1
        assert "fit" in capsys.readouterr().err

    def test_numeric_error_is_one(self, tmp_path, capsys):
        spectra = tmp_path / "s.csv"
        labels = tmp_path / "y.csv"
        run_cli(capsys, ["synth", "--kind", "ink-scene", "--n-per-ink", "20",
                         "--bands", "5", "--separable-band", "2",
                         "--out", str(spectra), "--labels-out", str(labels)])
        code = main(["select-bands", "--spectra", str(spectra),
                     "--labels", str(labels), "--method", "jsbs",
                     "--lambda", "1e9"])
        assert code == 1
        assert "lambda is too large" in capsys.readouterr().err


class TestDeterminismContract:
    def test_reports_identical_modulo_duration(self, tmp_path, capsys, lowrank_csv):
        argv = ["tree-search", "--data", str(lowrank_csv), "--algorithm",
                "jgspca", "--depth", "3"]
        _, out1 = run_cli(capsys, argv)
        _, out2 = run_cli(capsys, argv)
        assert strip_duration(out1) == strip_duration(out2)

    def test_threads_setting_does_not_change_report(self, capsys, ink_page):
        cube, truth = ink_page
        base = ["ink-detect", "--cube", str(cube), "--truth", str(truth),
                "--window", "17", "--seed", "3"]
        _, out1 = run_cli(capsys, base + ["--threads", "1"])
        _, out4 = run_cli(capsys, base + ["--threads", "4"])
        assert strip_duration(out1) == strip_duration(out4)

    def test_every_subcommand_validates_against_schema(self, tmp_path, capsys,
                                                       lowrank_csv, ink_page):
        jsonschema = pytest.importorskip("jsonschema")
        schema = json.loads(
            (Path(__file__).resolve().parents[1] / "src" / "sparseband"
             / "schemas" / "report.schema.json").read_text())
        cube, truth = ink_page
        spectra, labels = tmp_path / "sp.csv", tmp_path / "lb.csv"
        model = tmp_path / "m.sbm"
        reports = []

        def collect(argv):
            code, out = run_cli(capsys, argv)
            assert code == 0, argv
            reports.append(json.loads(out))

        collect(["synth", "--kind", "ink-scene", "--n-per-ink", "40",
                 "--bands", "6", "--separable-band", "2", "--seed", "1",
                 "--out", str(spectra), "--labels-out", str(labels)])
        collect(["fit", "--data", str(lowrank_csv), "--algorithm", "jgspca",
                 "--lambda", "0.5", "--out", str(model)])
        collect(["tree-search", "--data", str(lowrank_csv), "--algorithm",
                 "jgspca", "--depth", "3"])
        collect(["select-bands", "--spectra", str(spectra), "--labels",
                 str(labels), "--method", "sfbs"])
        collect(["eval-recon", "--train", str(lowrank_csv), "--model", str(model)])
        collect(["ink-detect", "--cube", str(cube), "--truth", str(truth),
                 "--window", "17"])
        collect(["segment", "--cube", str(cube), "--window", "17",
                 "--out", str(tmp_path / "m.pgm")])
        small = tmp_path / "small.hsc"
        run_cli(capsys, ["synth", "--kind", "ink-page", "--width", "30",
                         "--height", "30", "--bands", "4", "--seed", "9",
                         "--out", str(small), "--truth-out",
                         str(tmp_path / "small_truth.pgm")])
        train_csv = tmp_path / "train_page.csv"
        cube_obj = hsdata.load_cube(small)
        dm = hsdata.extract_patches(cube_obj, 3)
        hsdata.save_matrix_csv(train_csv, dm.uncentered(), dm.groups)
        page_model = tmp_path / "pm.sbm"
        collect(["fit", "--data", str(train_csv), "--algorithm", "jgspca",
                 "--lambda", "0", "--out", str(page_model)])
        collect(["reconstruct", "--cube", str(small), "--model",
                 str(page_model), "--train", str(train_csv), "--side", "3",
                 "--out", str(tmp_path / "rec.hsc")])
        seen = {r["manifest"]["subcommand"] for r in reports}
        assert seen == {"synth", "fit", "tree-search", "select-bands",
                        "eval-recon", "ink-detect", "segment", "reconstruct"}
        for report in reports:
            jsonschema.validate(report, schema)


class TestPlotRendering:
    def test_figures_written_alongside_csv(self, tmp_path, capsys, lowrank_csv):
        plot_dir = tmp_path / "figs"
        code, out = run_cli(capsys, [
            "tree-search", "--data", str(lowrank_csv), "--algorithm", "jgspca",
            "--depth", "3", "--csv", str(tmp_path / "nodes.csv"),
            "--plot-dir", str(plot_dir)])
        assert code == 0
        report = json.loads(out)["report"]
        for fig in report["figures"]:
            assert Path(fig).exists()
            assert Path(fig).stat().st_size > 0
