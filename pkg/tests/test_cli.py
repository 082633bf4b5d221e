import gc
import json
import subprocess
import sys

import pytest

from tracklet_fuse import cli, io, pipeline

SMALL = """\
duration: 20000
n_players: 6
jersey_numbers: [4, 9, 10, 17, 23, 88]
seed: 11
cameras:
  - camera_id: A
    region: [0, 0, 62.5, 44]
  - camera_id: B
    region: [42.5, 0, 105, 44]
  - camera_id: C
    region: [0, 24, 62.5, 68]
    drop_prob: 0.1
  - camera_id: D
    region: [42.5, 24, 105, 68]
"""

OUTPUTS = [pipeline.SCENARIO, pipeline.THUMBNAILS, pipeline.GROUND_TRUTH, pipeline.TRACKLETS,
           pipeline.TRACKS, pipeline.VERDICTS, "metrics.csv", pipeline.MANIFEST]


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "small.scenario"
    p.write_text(SMALL)
    return p


def files(d):
    return {name: (d / name).read_bytes() for name in OUTPUTS}


def test_pipeline_writes_every_stage(tmp_path, scenario, capsys):
    out = tmp_path / "run"
    assert cli.main(["pipeline", "--scenario", str(scenario), "--out", str(out)]) == 0
    for name in OUTPUTS:
        assert (out / name).exists(), name
    report = capsys.readouterr().out
    assert "track_purity" in report and "number_accuracy" in report
    manifest = json.loads((out / pipeline.MANIFEST).read_text())
    assert manifest["seed"] == 11
    assert set(manifest["outputs"]) == {"simulate", "track", "stitch", "identify", "evaluate"}
    assert manifest["scenario_digest"] == io.scenario_digest(io.load_scenario(scenario))
    assert gc.isenabled()


def test_pipeline_equals_chained_stages(tmp_path, scenario):
    a, b = tmp_path / "all", tmp_path / "steps"
    assert cli.main(["pipeline", "--scenario", str(scenario), "--out", str(a)]) == 0
    assert cli.main(["simulate", "--scenario", str(scenario), "--out", str(b)]) == 0
    for stage in ("track", "stitch", "identify", "evaluate"):
        assert cli.main([stage, "--out", str(b)]) == 0, stage
    assert files(a) == files(b)


def test_seed_override_changes_run(tmp_path, scenario):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["simulate", "--scenario", str(scenario), "--out", str(a)])
    cli.main(["simulate", "--scenario", str(scenario), "--out", str(b), "--seed", "12"])
    assert (a / pipeline.THUMBNAILS).read_bytes() != (b / pipeline.THUMBNAILS).read_bytes()
    assert io.load_scenario(b / pipeline.SCENARIO).seed == 12


def test_blind_stream_has_no_truth_but_still_scores(tmp_path, scenario):
    out = tmp_path / "blind"
    assert cli.main(["pipeline", "--scenario", str(scenario), "--out", str(out), "--strip-truth",
                     "--format", "jsonl"]) == 0
    assert "truth_player_id" not in (out / pipeline.THUMBNAILS).read_text()
    rows = [json.loads(line) for line in (out / "metrics.jsonl").read_text().splitlines()]
    assert rows[0]["metric"] == "tracklet_purity" and 0 < rows[0]["value"] <= 1


def test_evaluate_from_files_matches_pipeline(tmp_path, scenario):
    out = tmp_path / "run"
    cli.main(["pipeline", "--scenario", str(scenario), "--out", str(out), "--strip-truth"])
    first = (out / "metrics.csv").read_bytes()
    assert cli.main(["evaluate", "--out", str(out)]) == 0
    assert (out / "metrics.csv").read_bytes() == first


def test_params_file_is_used(tmp_path, scenario):
    params = tmp_path / "p.yaml"
    params.write_text("tracker:\n  max_gap: 100\n")
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["pipeline", "--scenario", str(scenario), "--out", str(a)])
    assert cli.main(["pipeline", "--scenario", str(scenario), "--out", str(b), "--params", str(params)]) == 0
    assert (a / pipeline.TRACKLETS).read_bytes() != (b / pipeline.TRACKLETS).read_bytes()


def test_missing_scenario_exits_1(tmp_path, capsys):
    assert cli.main(["pipeline", "--scenario", str(tmp_path / "none.scenario"), "--out", str(tmp_path)]) == 1
    assert "missing file" in capsys.readouterr().err


def test_stage_without_inputs_exits_1(tmp_path):
    assert cli.main(["track", "--out", str(tmp_path / "empty")]) == 1


def test_invalid_scenario_exits_1(tmp_path):
    p = tmp_path / "bad.scenario"
    p.write_text(SMALL + "frame_rate_hz: 10\n")
    assert cli.main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 1
    p.write_text(SMALL + "tick: 0\n")
    assert cli.main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 1


def test_bad_flags_exit_1(tmp_path, capsys):
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 1
    assert cli.main(["pipeline", "--scenario", "x", "--out", str(tmp_path), "--seed", "-4"]) == 1
    assert cli.main(["frobnicate"]) == 1


def test_runtime_failure_exits_2(tmp_path, scenario):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["simulate", "--scenario", str(scenario), "--out", str(blocker / "run")]) == 2


def test_thread_cap_validated(tmp_path, scenario, monkeypatch):
    monkeypatch.setenv(pipeline.THREADS_ENV, "many")
    assert cli.main(["simulate", "--scenario", str(scenario), "--out", str(tmp_path / "o")]) == 1
    monkeypatch.setenv(pipeline.THREADS_ENV, "1")
    assert pipeline.worker_count(8) == 1


def test_thread_count_does_not_change_output(tmp_path, scenario, monkeypatch):
    monkeypatch.setenv(pipeline.THREADS_ENV, "1")
    cli.main(["pipeline", "--scenario", str(scenario), "--out", str(tmp_path / "one")])
    monkeypatch.setenv(pipeline.THREADS_ENV, "4")
    monkeypatch.setattr(pipeline.os, "cpu_count", lambda: 4)
    cli.main(["pipeline", "--scenario", str(scenario), "--out", str(tmp_path / "four")])
    assert files(tmp_path / "one") == files(tmp_path / "four")


def test_module_entry_point(tmp_path, scenario):
    r = subprocess.run([sys.executable, "-m", "tracklet_fuse", "simulate", "--scenario", str(scenario),
                        "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "tracklet_fuse", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("tracklet-fuse ")
