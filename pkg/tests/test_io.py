import json
import os
import stat

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracklet_fuse import io, sim
from tracklet_fuse.fusion import FusionParams
from tracklet_fuse.model import (
    DigitDetection, ImageBox, NoiseModel, PitchPos, PlayerDetection, Thumbnail,
)
from tracklet_fuse.stitch import StitchParams, identify_tracks, stitch
from tracklet_fuse.tracking import TrackerParams, build_tracklets

from conftest import quad_cameras, small_scenario

SCENARIO = """\
duration: 20000
n_players: 2
jersey_numbers: [7, 23]
cameras:
  - camera_id: A
    region: [0, 0, 60, 68]
  - camera_id: B
    region: [45, 0, 105, 68]
    drop_prob: 0.1
noise:
  miss_prob: 0.1
"""


# -- scenarios --------------------------------------------------------------------

def test_parse_fills_defaults():
    s = io.parse_scenario(SCENARIO)
    assert s.tick == 100 and s.pitch_width == 105.0 and s.seed == 0
    assert s.cameras[1].drop_prob == 0.1 and s.cameras[0].px_per_m == 10.0
    assert s.noise.miss_prob == 0.1 and s.noise.pos_jitter_px == NoiseModel().pos_jitter_px


def test_unknown_field_names_field_and_line(tmp_path):
    p = tmp_path / "bad.scenario"
    p.write_text(SCENARIO.replace("n_players: 2\n", "n_players: 2\nframe_rate_hz: 10\n"))
    with pytest.raises(io.ParseError) as err:
        io.load_scenario(p)
    assert "frame_rate_hz" in str(err.value) and err.value.line == 3


def test_unknown_nested_field(tmp_path):
    with pytest.raises(io.ParseError) as err:
        io.parse_scenario(SCENARIO.replace("    drop_prob: 0.1\n", "    drop_prob: 0.1\n    fov_deg: 90\n"))
    assert "fov_deg" in str(err.value) and err.value.line == 10


def test_wrong_type_is_a_parse_error():
    with pytest.raises(io.ParseError):
        io.parse_scenario(SCENARIO.replace("duration: 20000", "duration: soon"))


def test_zero_tick_is_a_validation_error(tmp_path):
    p = tmp_path / "t.scenario"
    p.write_text(SCENARIO + "tick: 0\n")
    with pytest.raises(io.ValidationError) as err:
        io.load_scenario(p)
    assert any("tick > 0" in v for v in err.value.violations)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.load_scenario(tmp_path / "nope.scenario")


def test_seed_override_and_digest():
    s = io.load_scenario("demo.scenario", seed=5)
    assert s.seed == 5
    assert io.scenario_digest(s) == io.scenario_digest(io.load_scenario("demo.scenario", seed=5))
    assert io.scenario_digest(s) != io.scenario_digest(io.load_scenario("demo.scenario"))


def test_dumped_scenario_parses_back_identically():
    s = io.load_scenario("demo.scenario")
    text = io.dump_scenario(s)
    assert io.parse_scenario(text) == s
    assert io.dump_scenario(io.parse_scenario(text)) == text


def test_params_file(tmp_path):
    p = tmp_path / "params.yaml"
    p.write_text("tracker:\n  max_gap: 500\nstitcher:\n  merge_threshold: 1.5\nfusion:\n  discount: 0.8\n")
    tp, sp, fp = io.load_params(p)
    assert tp == TrackerParams(max_gap=500)
    assert sp == StitchParams(merge_threshold=1.5)
    assert fp == FusionParams(discount=0.8)
    p.write_text("tracker:\n  gate: 3\n")
    with pytest.raises(io.ParseError):
        io.load_params(p)
    p.write_text("tracker:\n  gate_speed_mps: -1\n")
    with pytest.raises(io.ValidationError):
        io.load_params(p)


# -- streams ----------------------------------------------------------------------

coord = st.floats(0, 255.999999).map(sim.quantize)
conf = st.floats(0, 1).map(sim.quantize)
thumbnails = st.builds(
    Thumbnail,
    camera_id=st.sampled_from(["A", "B", "cam7"]),
    t=st.integers(0, 10 ** 7),
    player_detections=st.lists(st.builds(PlayerDetection, st.builds(ImageBox, coord, coord), conf),
                               max_size=4).map(tuple),
    digit_detections=st.lists(st.builds(DigitDetection, st.integers(0, 9), coord, conf), max_size=4).map(tuple),
    anchor=st.builds(PitchPos, st.floats(0, 105).map(sim.quantize), st.floats(0, 68).map(sim.quantize)),
    truth_player_id=st.one_of(st.none(), st.integers(0, 30)),
)


def test_empty_stream_round_trip(tmp_path):
    p = tmp_path / "s.jsonl"
    io.write_stream(p, [])
    assert p.read_bytes() == b"" and io.read_stream(p) == []


@settings(max_examples=20, deadline=None)
@given(st.lists(thumbnails, max_size=60))
def test_stream_round_trip_is_exact_and_canonical(tmp_path_factory, ths):
    p = tmp_path_factory.mktemp("rt") / "s.jsonl"
    io.write_stream(p, ths)
    first = p.read_bytes()
    back = io.read_stream(p)
    assert back == ths
    io.write_stream(p, back)
    assert p.read_bytes() == first


def test_thousand_simulated_thumbnails_round_trip(tmp_path):
    s = small_scenario(seed=4)
    gt = sim.generate_ground_truth(s)
    ths = [th for st_ in sim.emit_thumbnails(gt, s).values() for th in st_][:1000]
    assert len(ths) == 1000
    p = tmp_path / "s.jsonl"
    io.write_stream(p, ths)
    assert io.read_stream(p) == ths


def test_record_key_order_is_fixed():
    th = Thumbnail("A", 100, (PlayerDetection(ImageBox(1.5, 2.5), 0.5),), (DigitDetection(3, 4.0, 0.25),),
                   PitchPos(1.0, 2.0), 4)
    line = json.dumps(io.thumbnail_to_record(th), separators=(",", ":"))
    assert line == ('{"camera_id":"A","t_ms":100,"anchor_x_m":1.0,"anchor_y_m":2.0,'
                    '"player_detections":[{"cx":1.5,"cy":2.5,"w":20.0,"h":50.0,"conf":0.5}],'
                    '"digit_detections":[{"digit":3,"x":4.0,"conf":0.25}],"truth_player_id":4}')


def test_emitted_floats_have_at_most_nine_significant_digits(tmp_path):
    s = small_scenario(seed=1, duration=5000)
    gt = sim.generate_ground_truth(s)
    p = tmp_path / "s.jsonl"
    io.write_stream(p, [th for st_ in sim.emit_thumbnails(gt, s).values() for th in st_])
    for rec in map(json.loads, p.read_text().splitlines()):
        vals = [rec["anchor_x_m"], rec["anchor_y_m"]]
        vals += [d[k] for d in rec["player_detections"] for k in ("cx", "cy", "conf")]
        vals += [d[k] for d in rec["digit_detections"] for k in ("x", "conf")]
        for v in vals:
            assert float(f"{v:.9g}") == v


def test_truncated_line_is_a_schema_error(tmp_path):
    p = tmp_path / "s.jsonl"
    ths = [Thumbnail("A", t, (), (), PitchPos(1.0, 1.0)) for t in (0, 100, 200)]
    io.write_stream(p, ths)
    data = p.read_bytes()
    p.write_bytes(data[:-10])
    with pytest.raises(io.SchemaError) as err:
        io.read_stream(p)
    assert err.value.line == 3


def test_malformed_record_is_a_schema_error(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text('{"camera_id":"A","t_ms":0}\n')
    with pytest.raises(io.SchemaError) as err:
        io.read_stream(p)
    assert err.value.line == 1


# -- downstream artifacts ---------------------------------------------------------

def test_pipeline_artifacts_round_trip(tmp_path):
    s = small_scenario(seed=3)
    gt = sim.generate_ground_truth(s)
    ths = [th for st_ in sim.emit_thumbnails(gt, s).values() for th in st_]
    cams = {c.camera_id: c for c in quad_cameras()}
    streams = io.split_by_camera(ths, list(cams))
    tls = [tl for c in cams.values() for tl in build_tracklets(streams[c.camera_id], c)]
    tracks = stitch(tls, cams, with_verdicts=False)
    results = identify_tracks(tracks)

    io.write_stream(tmp_path / "t.jsonl", ths)
    io.write_tracklets(tmp_path / "tl.jsonl", tls, ths)
    io.write_tracks(tmp_path / "tr.jsonl", tracks, tls)
    io.write_verdicts(tmp_path / "v.jsonl", tracks, results)
    io.write_ground_truth(tmp_path / "gt.json", gt, ths)

    ths2 = io.read_stream(tmp_path / "t.jsonl")
    tls2 = io.read_tracklets(tmp_path / "tl.jsonl", ths2)
    assert tls2 == tls
    assert io.read_tracks(tmp_path / "tr.jsonl", tls2) == tracks
    got = io.read_verdicts(tmp_path / "v.jsonl")
    assert [k for k, _ in got] == [g.track_id for g in tracks]
    assert [v.outcome for _, v in got] == [v.outcome for v, _ in results]
    gt2, truth = io.read_ground_truth(tmp_path / "gt.json")
    assert truth == [th.truth_player_id for th in ths]
    assert gt2.visibility == gt.visibility and gt2.jerseys == gt.jerseys
    assert np.allclose(gt2.positions, gt.positions, atol=1e-6)


def test_tracklet_entry_must_match_thumbnail(tmp_path):
    p = tmp_path / "tl.jsonl"
    p.write_text('{"camera_id":"A","tick":100,"entries":[[500,0,0]]}\n')
    ths = [Thumbnail("A", 0, (PlayerDetection(ImageBox(128.0, 128.0), 1.0),), (), PitchPos(1.0, 1.0))]
    with pytest.raises(io.SchemaError):
        io.read_tracklets(p, ths)


def test_metrics_formats():
    rows = [("purity", 0.5), ("id_switches", 3), ("number_accuracy", None)]
    assert io.metrics_csv(rows) == "metric,value\npurity,0.5\nid_switches,3\nnumber_accuracy,\n"
    assert io.metrics_jsonl(rows).splitlines()[2] == '{"metric":"number_accuracy","value":null}'
    assert "none" in io.metrics_report(rows)


def test_atomic_write_leaves_no_temp_and_honours_umask(tmp_path):
    p = tmp_path / "out.txt"
    io.atomic_write_text(p, "x\n")
    io.atomic_write_text(p, "y\n")
    assert p.read_text() == "y\n"
    assert os.listdir(tmp_path) == ["out.txt"]
    mask = os.umask(0)
    os.umask(mask)
    assert stat.S_IMODE(p.stat().st_mode) == 0o666 & ~mask
