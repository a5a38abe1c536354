from __future__ import annotations

import json

import pytest

from dpm.cli import main


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    assert main(["gen-suite", "--seed", "20260420", "--out", str(out)]) == 0
    return out


def test_run_exp1_verify_and_stats(suite_dir, tmp_path, capsys):
    assert main(["run", "--exp", "1", "--suite", str(suite_dir), "--out", str(tmp_path), "--verify"]) == 0
    table = (tmp_path / "exp1" / "table1.csv").read_text()
    capsys.readouterr()
    assert main(["stats", "--results", str(tmp_path)]) == 0
    assert capsys.readouterr().out == table


def test_run_exp3_writes_scaling(suite_dir, tmp_path):
    assert main(["run", "--exp", "3", "--budget", "tight,loose", "--suite", str(suite_dir), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "exp3" / "scaling.csv").read_text().startswith("budget,rho,metric")


def test_run_exp2(suite_dir, tmp_path):
    assert main(["run", "--exp", "2", "--suite", str(suite_dir), "--out", str(tmp_path), "--verify"]) == 0
    assert len(json.loads((tmp_path / "exp2" / "replays.json").read_text())) == 7


def test_replay_verb(suite_dir, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["replay", "--case", "claim_001", "--condition", "summ", "--replays", "3",
                 "--suite", str(suite_dir), "--out", str(out), "--verify"]) == 0
    assert json.loads(out.read_text())["unique_hashes"] == 1
    assert main(["replay", "--case", "nope", "--condition", "dpm", "--suite", str(suite_dir)]) == 2


def test_replay_noisy_drift_is_not_a_violation(suite_dir):
    code = main(["replay", "--case", "loan_001", "--condition", "summ", "--replays", "5",
                 "--backend", "noisy:0.5", "--suite", str(suite_dir), "--verify"])
    assert code == 0  # drift is expected under a noisy backend, not a violation


def test_tams_verb(capsys):
    assert main(["tams", "--replay", "false", "--audit", "no", "--isolation", "0", "--ratio", "20"]) == 0
    assert json.loads(capsys.readouterr().out) == {"choice": "DPM", "triggered_rule": "compression_ratio"}


def test_audit_export_verb(suite_dir, tmp_path, capsys):
    main(["run", "--exp", "1", "--budget", "tight", "--condition", "dpm", "--suite", str(suite_dir),
          "--out", str(tmp_path), "--audit", "full"])
    archive = tmp_path / "a.json"
    assert main(["audit-export", "--run", "loan_L01.dpm.tight", "--ledgers", str(tmp_path / "exp1" / "ledgers"),
                 "--suite", str(suite_dir), "--include-log", "--out", str(archive)]) == 0
    assert "verified=True" in capsys.readouterr().out


def test_bad_backend_is_reported(tmp_path, capsys):
    assert main(["run", "--exp", "1", "--backend", "remote", "--out", str(tmp_path)]) == 2
    assert "DPM_REMOTE_URL" in capsys.readouterr().err
