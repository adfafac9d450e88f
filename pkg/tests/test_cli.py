"""End-to-end CLI runs against a synthetic corpus on disk."""

from pathlib import Path

import pytest
from click.testing import CliRunner

from groovelab.cli import main
from groovelab.encoding import quantize_notes, window_patterns
from groovelab.midi import DrumMap, extract_drum_notes, parse_smf, write_smf
from conftest import synthetic_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory) -> Path:
    directory = tmp_path_factory.mktemp("corpus")
    for i, pattern in enumerate(synthetic_corpus(8, seed=21)):
        (directory / f"beat_{i:02d}.mid").write_bytes(write_smf(pattern, ppq=480, tempo_bpm=124))
    return directory


@pytest.fixture(scope="module")
def trained_model(corpus_dir, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("model") / "model.rvae"
    result = CliRunner().invoke(
        main,
        ["train", str(corpus_dir), "--epochs", "10", "--seed", "3", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    return out


def test_train_writes_model_and_report(corpus_dir, tmp_path):
    out = tmp_path / "model.rvae"
    report_dir = tmp_path / "report"
    result = CliRunner().invoke(
        main,
        [
            "train", str(corpus_dir), "--epochs", "4", "--seed", "0",
            "--out", str(out), "--report-dir", str(report_dir),
        ],
    )
    assert result.exit_code == 0, result.output
    assert out.exists()
    csv_text = (report_dir / "loss_history.csv").read_text()
    assert csv_text.startswith("epoch,train_total,val_total")
    assert len(csv_text.strip().splitlines()) == 5
    assert (report_dir / "loss_curves.png").stat().st_size > 0


def test_train_rejects_empty_dir(tmp_path):
    result = CliRunner().invoke(main, ["train", str(tmp_path), "--epochs", "1"])
    assert result.exit_code != 0
    assert "at least 2 patterns" in result.output


def test_generate_emits_parsable_midi(trained_model, tmp_path):
    out = tmp_path / "pattern.mid"
    result = CliRunner().invoke(
        main,
        ["generate", "--model", str(trained_model), "--z", "0,0", "--out", str(out),
         "--tempo", "120"],
    )
    assert result.exit_code == 0, result.output
    midi = parse_smf(out.read_bytes())
    notes = extract_drum_notes(midi)
    for onset in quantize_notes(notes, midi.ppq, DrumMap.default()):
        assert 0.0 < onset.velocity <= 1.0
        assert -1.0 <= onset.offset < 1.0


def test_generate_rejects_malformed_z(trained_model, tmp_path):
    result = CliRunner().invoke(
        main, ["generate", "--model", str(trained_model), "--z", "1;2",
               "--out", str(tmp_path / "x.mid")],
    )
    assert result.exit_code != 0


def test_sweep_writes_grid_and_report(trained_model, tmp_path):
    out_dir = tmp_path / "sweep"
    result = CliRunner().invoke(
        main,
        ["sweep", "--model", str(trained_model), "--grid", "3x4", "--out-dir", str(out_dir)],
    )
    assert result.exit_code == 0, result.output
    midis = sorted(out_dir.glob("sweep_r*_c*.mid"))
    assert len(midis) == 12
    for path in midis:
        parse_smf(path.read_bytes())
    csv_lines = (out_dir / "sweep_summary.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "file,row,col,z1,z2,onsets"
    assert len(csv_lines) == 13
    assert (out_dir / "sweep_density.png").stat().st_size > 0


def test_inspect_reports_histogram(corpus_dir, tmp_path):
    target = sorted(corpus_dir.glob("*.mid"))[0]
    report_dir = tmp_path / "inspect"
    result = CliRunner().invoke(
        main, ["inspect", str(target), "--report-dir", str(report_dir)],
    )
    assert result.exit_code == 0, result.output
    assert "patterns: 1" in result.output
    assert "kick" in result.output
    csv_text = (report_dir / "onset_histogram.csv").read_text()
    assert csv_text.startswith("drum_class,onsets")
    assert (report_dir / "onset_histogram.png").stat().st_size > 0


def test_inspect_consistent_with_library(corpus_dir):
    target = sorted(corpus_dir.glob("*.mid"))[1]
    midi = parse_smf(target.read_bytes())
    onsets = quantize_notes(extract_drum_notes(midi), midi.ppq, DrumMap.default())
    expected_patterns = len(window_patterns(onsets))
    result = CliRunner().invoke(main, ["inspect", str(target)])
    assert f"patterns: {expected_patterns}" in result.output
