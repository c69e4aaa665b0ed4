"""End-to-end command-line workflows and exit codes."""

import json

import pytest
from click.testing import CliRunner

from revwer.cli import main

SMALL_CONFIG = {
    "n_talkers": 10,
    "n_airs": 20,
    "utterances_per_talker": 8,
    "seed": 7,
}


@pytest.fixture()
def runner():
    return CliRunner()


def _build(runner, tmp_path, name="corpus"):
    out = tmp_path / name
    config = tmp_path / f"{name}.json"
    config.write_text(json.dumps(SMALL_CONFIG))
    result = runner.invoke(
        main, ["--config", str(config), "--out", str(out), "build-corpus"]
    )
    assert result.exit_code == 0, result.output
    return out


class TestBuildCorpus:
    def test_writes_manifest_and_params(self, runner, tmp_path):
        out = _build(runner, tmp_path)
        assert (out / "manifest.csv").exists()
        assert (out / "params.csv").exists()

    def test_same_config_is_byte_identical(self, runner, tmp_path):
        a = _build(runner, tmp_path, "a")
        b = _build(runner, tmp_path, "b")
        assert (a / "manifest.csv").read_bytes() \
            == (b / "manifest.csv").read_bytes()
        assert (a / "params.csv").read_bytes() \
            == (b / "params.csv").read_bytes()

    def test_bad_config_exits_2(self, runner, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text('{"talkers": 5}')
        result = runner.invoke(
            main, ["--config", str(config), "--out", str(tmp_path),
                   "build-corpus"]
        )
        assert result.exit_code == 2

    def test_malformed_json_exits_2(self, runner, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text("{not json")
        result = runner.invoke(
            main, ["--config", str(config), "--out", str(tmp_path),
                   "build-corpus"]
        )
        assert result.exit_code == 2


class TestSynthAirAndAnalyze:
    def _synth(self, runner, tmp_path):
        specs = tmp_path / "specs.json"
        specs.write_text(json.dumps([
            {"t60_target": 0.3, "drr_target": 5.0, "seed": 1},
            {"t60_target": 0.6, "drr_target": 0.0, "seed": 2},
        ]))
        out = tmp_path / "airs"
        result = runner.invoke(
            main, ["--out", str(out), "synth-air", "--specs", str(specs)]
        )
        assert result.exit_code == 0, result.output
        return out

    def test_synth_then_analyze(self, runner, tmp_path):
        air_dir = self._synth(runner, tmp_path)
        assert sorted(p.name for p in air_dir.glob("*.wav")) \
            == ["air0000.wav", "air0001.wav"]
        out = tmp_path / "analysis"
        result = runner.invoke(main, ["--out", str(out), "analyze",
                                      str(air_dir)])
        assert result.exit_code == 0, result.output
        lines = (out / "params.csv").read_text().strip().splitlines()
        assert len(lines) == 3  # header + one row per AIR

    def test_corrupt_input_exits_3_but_writes_good_rows(self, runner,
                                                        tmp_path):
        air_dir = self._synth(runner, tmp_path)
        (air_dir / "air0001.wav").write_bytes(b"not a wav file")
        out = tmp_path / "analysis"
        result = runner.invoke(main, ["--out", str(out), "analyze",
                                      str(air_dir)])
        assert result.exit_code == 3
        lines = (out / "params.csv").read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("air0000")

    def test_missing_input_exits_3(self, runner, tmp_path):
        result = runner.invoke(main, ["--out", str(tmp_path), "analyze",
                                      str(tmp_path / "nowhere.wav")])
        assert result.exit_code == 3


class TestWer:
    def test_scores_pairs(self, runner, tmp_path):
        pairs = tmp_path / "pairs.csv"
        pairs.write_text("the cat sat,the cat sat\nthe cat sat,the dog sat\n")
        result = runner.invoke(main, ["--out", str(tmp_path), "wer",
                                      "--pairs", str(pairs)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "wer.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        assert lines[1].split(",")[-1] == "0.0"
        assert float(lines[2].split(",")[-1]) == pytest.approx(1.0 / 3.0)


class TestFitEvaluateReport:
    def test_full_pipeline(self, runner, tmp_path):
        out = _build(runner, tmp_path)
        manifest = str(out / "manifest.csv")
        params = str(out / "params.csv")
        for kind in ("linear", "cubic", "sigmoid"):
            result = runner.invoke(main, [
                "--out", str(out), "fit", "--manifest", manifest,
                "--params", params, "--param", "c50", "--kind", kind,
            ])
            assert result.exit_code == 0, result.output
            assert (out / f"fit_c50_{kind}.json").exists()
            svg = (out / f"fit_c50_{kind}.svg").read_text()
            assert "<svg" in svg

        result = runner.invoke(main, [
            "--out", str(out), "train-mlp", "--manifest", manifest,
            "--params", params, "--epochs", "2",
        ])
        assert result.exit_code == 0, result.output
        assert (out / "mlp_checkpoint.json").exists()

        result = runner.invoke(main, [
            "--out", str(out), "evaluate", "--manifest", manifest,
            "--params", params, "--mlp", str(out / "mlp_checkpoint.json"),
        ])
        assert result.exit_code == 0, result.output
        lines = (out / "results.csv").read_text().strip().splitlines()
        names = [line.split(",")[0] for line in lines[1:]]
        assert names == ["C50 linear", "C50 cubic", "C50 sigmoid", "MLP"]

        result = runner.invoke(main, [
            "--out", str(out), "report", "--results",
            str(out / "results.csv"),
        ])
        assert result.exit_code == 0, result.output
        report = (out / "report.md").read_text()
        assert report.splitlines()[0].startswith("| Predictor |")
        assert "C50 sigmoid" in report

    def test_evaluate_without_fits_exits_3(self, runner, tmp_path):
        out = _build(runner, tmp_path)
        result = runner.invoke(main, [
            "--out", str(out), "evaluate",
            "--manifest", str(out / "manifest.csv"),
            "--params", str(out / "params.csv"),
        ])
        assert result.exit_code == 3


class TestTrainCnn:
    def test_manifest_without_audio_exits_3(self, runner, tmp_path):
        out = _build(runner, tmp_path)
        result = runner.invoke(main, [
            "--out", str(out), "train-cnn",
            "--manifest", str(out / "manifest.csv"), "--epochs", "1",
        ])
        assert result.exit_code == 3
