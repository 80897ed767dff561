import json

import pytest

from reflexnav import cli
from reflexnav.core import NumericalFailure


def test_run_writes_outputs_and_replays(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--seed", "3", "--record", "--out-dir", str(out)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["seed"] == 3 and result["variant"] == "full"
    for name in ("results.jsonl", "steps.csv", "clouds.bin", "detections.csv"):
        assert (out / name).exists()
    header = (out / "steps.csv").read_text().splitlines()[0]
    assert header == "t,px,py,pz,vx,vy,yaw,beta,T_fused,target_id,d_clear"
    rep = tmp_path / "rep"
    assert cli.main(["replay", "--seed", "3", "--clouds", str(out / "clouds.bin"), "--detections",
                     str(out / "detections.csv"), "--out-dir", str(rep)]) == 0
    replayed = json.loads(capsys.readouterr().out)
    assert replayed["success"] == result["success"]


def test_batch_outputs(tmp_path, capsys):
    out = tmp_path / "b"
    assert cli.main(["batch", "--trials", "2", "--workers", "1", "--variant", "full", "--no-threat",
                     "--out-dir", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [l.split()[0] for l in lines] == ["no_threat", "full"]
    assert len((out / "results.jsonl").read_text().splitlines()) == 4
    assert len((out / "summary.csv").read_text().splitlines()) == 3
    assert set(json.loads((out / "report.json").read_text())) == {"full", "no_threat"}


def test_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["run", "--set", "threat.alpha=2", "--out-dir", str(tmp_path)]) == 3
    assert "config error" in capsys.readouterr().err


def test_unknown_override_key_is_config_error(tmp_path):
    assert cli.main(["run", "--set", "threat.nope=1", "--out-dir", str(tmp_path)]) == 3


def test_conflicting_variants_config_error(tmp_path):
    assert cli.main(["run", "--no-threat", "--variant", "full", "--out-dir", str(tmp_path)]) == 3


def test_bad_replay_file_exit_code(tmp_path):
    bad = tmp_path / "x.bin"
    bad.write_bytes(b"nonsense")
    assert cli.main(["replay", "--clouds", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert cli.main(["replay", "--clouds", str(tmp_path / "missing.bin"), "--out-dir", str(tmp_path)]) == 1


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericalFailure("frame 12: covariance lost positive semi-definiteness")

    monkeypatch.setattr(cli, "run_trial", boom)
    assert cli.main(["run", "--out-dir", str(tmp_path)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_yaml_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 9\nduration: 3.0\n")
    assert cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 9


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
