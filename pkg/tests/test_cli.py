"""Tests for the command-line entry point."""

import json
from pathlib import Path

import pytest
from factorsel.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main


def test_validate(config_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Test checking a good config."""
    assert main(["validate", str(config_file)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "OK (240 subjects, 6 features" in out
    assert "of 9 tasks runnable" in out


def test_inventory_to_stdout(config_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Test writing the inventory table to standard output."""
    assert main(["inventory", str(config_file)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("pair,stratum,")
    assert len(lines) == 10
    assert lines[1].startswith("LATE vs AD,All,")


def test_inventory_to_file(config_file: Path, tmp_path: Path) -> None:
    """Test writing the inventory table to a file."""
    target = tmp_path / "inventory.csv"
    assert main(["inventory", str(config_file), "-o", str(target)]) == EXIT_OK
    assert len(target.read_text(encoding="utf-8").splitlines()) == 10


def test_run(config_file: Path, tmp_path: Path) -> None:
    """Test a full run with an output directory override."""
    out = tmp_path / "cli-out"
    assert main(["-q", "run", str(config_file), "-o", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert "manifest.json" in manifest["artifacts"]
    # A second run needs --overwrite.
    assert main(["-q", "run", str(config_file), "-o", str(out)]) == EXIT_CONFIG
    assert main(["-q", "run", str(config_file), "-o", str(out), "--overwrite"]) == EXIT_OK


def test_partial_failure(
    config_file: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    """Test the exit status of a run with failed tasks."""

    def fail(*args: object, **kwargs: object) -> None:
        raise ValueError("boom")

    monkeypatch.setattr("factorsel.pipeline.rank_features", fail)
    assert main(["-q", "run", str(config_file), "-o", str(tmp_path / "x")]) == EXIT_PARTIAL


def test_config_errors(tmp_path: Path) -> None:
    """Test that bad input exits with the configuration status."""
    assert main(["validate", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"cohort": {"path": "c.csv"}}), encoding="utf-8")
    assert main(["validate", str(bad)]) == EXIT_CONFIG
    no_file = tmp_path / "no_file.json"
    no_file.write_text(
        json.dumps({"cohort": {"path": "c.csv"}, "label_rule": "braak-cerad-tdp"}),
        encoding="utf-8",
    )
    assert main(["validate", str(no_file)]) == EXIT_CONFIG


def test_usage_errors() -> None:
    """Test that argparse rejects a missing command."""
    with pytest.raises(SystemExit) as exc_info:
        main([])
    assert exc_info.value.code == 2


def test_inventory_help_names_config_sources(capsys: pytest.CaptureFixture[str]) -> None:
    """Test that inventory help says where pairs and strata come from."""
    with pytest.raises(SystemExit) as exc_info:
        main(["inventory", "--help"])
    assert exc_info.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    assert "class pairs and strata are read from the run config" in text
    assert "naming the cohort, pairs and strata" in text
