"""
Scenario documents, parameter files, and canonical JSONL persistence.

Every file is written atomically (temp file then rename) with a fixed key
order, so identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import tempfile
from dataclasses import asdict, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import yaml

from .fusion import FusionParams, MassFunction
from .model import (
    CameraCalib, DigitDetection, GlobalTrack, ImageBox, Interval, MotionModel, NoiseModel,
    NumberVerdict, PitchPos, PlayerDetection, Scenario, Thumbnail, Tracklet, TrackletEntry,
    validate_scenario,
)
from .sim import GroundTruth, VisibilityLog, quantize
from .stitch import StitchParams
from .tracking import TrackerParams


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: str = ""):
        where = f"line {line}" if line is not None else ""
        if path:
            where = f"{where}, field {path}" if where else f"field {path}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class ValidationError(ValueError):
    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class SchemaError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# -- atomic writes -------------------------------------------------------------

_UMASK = os.umask(0)
os.umask(_UMASK)


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def write_jsonl(path, records: Iterable[dict]):
    atomic_write_text(path, "".join(_dumps(r) + "\n" for r in records))


def read_jsonl(path, parse=lambda r: r) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.endswith("\n"):
                raise SchemaError("truncated record (no line terminator)", lineno)
            try:
                rec = json.loads(line)
                out.append(parse(rec))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise SchemaError(f"malformed record: {exc}", lineno) from exc
    return out


# -- scenario documents --------------------------------------------------------

_SCENARIO_FIELDS = {"duration", "n_players", "jersey_numbers", "cameras", "pitch_width",
                    "pitch_height", "tick", "noise", "motion", "seed"}
_REQUIRED = {"duration", "n_players", "jersey_numbers", "cameras"}
_CAMERA_FIELDS = {f.name for f in fields(CameraCalib)}
_NOISE_FIELDS = {f.name for f in fields(NoiseModel)}
_MOTION_FIELDS = {f.name for f in fields(MotionModel)}


class _Doc:
    """YAML mapping data with the source line of every key, for error messages."""

    def __init__(self, text: str, source: str):
        try:
            self.node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ParseError(f"{source}: {getattr(exc, 'problem', exc)}",
                             mark.line + 1 if mark else None) from exc

    def line(self, path: Sequence) -> Optional[int]:
        node = self.node
        for key in path:
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == key:
                        node = v if key != path[-1] else k
                        break
                else:
                    return None
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                return None
        return node.start_mark.line + 1 if node is not None else None


def _path_str(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _check_keys(doc: _Doc, mapping, allowed, path, required=()):
    if not isinstance(mapping, dict):
        raise ParseError("expected a mapping", doc.line(path) if path else 1, _path_str(path))
    for k in mapping:
        if k not in allowed:
            raise ParseError(f"unknown field '{k}'", doc.line(list(path) + [k]), _path_str(list(path) + [k]))
    for k in sorted(required):
        if k not in mapping:
            raise ParseError(f"missing required field '{k}'", doc.line(path) if path else 1,
                             _path_str(list(path) + [k]))


def _typed(doc: _Doc, value, kind, path):
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "num": isinstance(value, (int, float)) and not isinstance(value, bool),
        "str": isinstance(value, str),
    }[kind]
    if not ok:
        raise ParseError(f"expected {kind}, got {value!r}", doc.line(path), _path_str(path))
    return float(value) if kind == "num" else value


def _num_list(doc, value, kind, path, length=None):
    if not isinstance(value, list) or (length is not None and len(value) != length):
        want = f"a list of {length}" if length is not None else "a list"
        raise ParseError(f"expected {want}", doc.line(path), _path_str(path))
    return tuple(_typed(doc, v, kind, list(path) + [i]) for i, v in enumerate(value))


def _section(doc, data, allowed, path, schema):
    _check_keys(doc, data, allowed, path)
    out = {}
    for k, v in data.items():
        kind = schema[k]
        if isinstance(kind, tuple):
            out[k] = _num_list(doc, v, kind[0], list(path) + [k], kind[1])
        else:
            out[k] = _typed(doc, v, kind, list(path) + [k])
    return out


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    doc = _Doc(text, source)
    data = doc.data
    _check_keys(doc, data, _SCENARIO_FIELDS, [], _REQUIRED)
    kw = {}
    for k in ("duration", "n_players", "tick", "seed"):
        if k in data:
            kw[k] = _typed(doc, data[k], "int", [k])
    for k in ("pitch_width", "pitch_height"):
        if k in data:
            kw[k] = _typed(doc, data[k], "num", [k])
    kw["jersey_numbers"] = _num_list(doc, data["jersey_numbers"], "int", ["jersey_numbers"])
    cams = data["cameras"]
    if not isinstance(cams, list):
        raise ParseError("expected a list of cameras", doc.line(["cameras"]), "cameras")
    cameras = []
    for i, c in enumerate(cams):
        path = ["cameras", i]
        _check_keys(doc, c, _CAMERA_FIELDS, path, {"camera_id", "region"})
        cc = _section(doc, c, _CAMERA_FIELDS, path, {
            "camera_id": "str", "region": ("num", 4), "px_per_m": "num", "drop_prob": "num"})
        cameras.append(CameraCalib(**cc))
    kw["cameras"] = tuple(cameras)
    if "noise" in data:
        nz = _section(doc, data["noise"], _NOISE_FIELDS, ["noise"], {
            "pos_jitter_px": "num", "miss_prob": "num", "fp_rate": "num",
            "digit_detect_prob": ("num", 10), "digit_swap_prob": "num",
            "conf_low": "num", "conf_high": "num"})
        if "digit_detect_prob" in nz:
            nz["digit_detect_prob"] = dict(enumerate(nz["digit_detect_prob"]))
        kw["noise"] = NoiseModel(**nz)
    if "motion" in data:
        mm = _section(doc, data["motion"], _MOTION_FIELDS, ["motion"], {
            "speed_min_mps": "num", "speed_max_mps": "num", "dwell_min_ms": "int", "dwell_max_ms": "int"})
        kw["motion"] = MotionModel(**mm)
    return Scenario(**kw)


BUNDLED_SCENARIOS = ("demo.scenario",)


def resolve_scenario_path(path) -> Path:
    """``path`` itself, or the bundled scenario of that name when no such file exists."""
    path = Path(path)
    if not path.exists() and path.name in BUNDLED_SCENARIOS and path.parent == Path("."):
        from importlib.resources import files
        return Path(str(files("tracklet_fuse") / "data" / path.name))
    return path


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    """Parse and validate a scenario document; ``seed`` overrides the file's.

    A bare ``demo.scenario`` that does not exist in the working directory
    names the bundled demo.
    """
    path = resolve_scenario_path(path)
    text = path.read_text(encoding="utf-8")
    s = parse_scenario(text, str(path))
    if seed is not None:
        from dataclasses import replace
        s = replace(s, seed=seed)
    problems = validate_scenario(s)
    if problems:
        raise ValidationError(problems)
    return s


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "duration": s.duration,
        "n_players": s.n_players,
        "jersey_numbers": list(s.jersey_numbers),
        "pitch_width": s.pitch_width,
        "pitch_height": s.pitch_height,
        "tick": s.tick,
        "seed": s.seed,
        "noise": {
            "pos_jitter_px": s.noise.pos_jitter_px,
            "miss_prob": s.noise.miss_prob,
            "fp_rate": s.noise.fp_rate,
            "digit_detect_prob": [s.noise.digit_detect_prob[d] for d in range(10)],
            "digit_swap_prob": s.noise.digit_swap_prob,
            "conf_low": s.noise.conf_low,
            "conf_high": s.noise.conf_high,
        },
        "motion": asdict(s.motion),
        "cameras": [{"camera_id": c.camera_id, "region": list(c.region),
                     "px_per_m": c.px_per_m, "drop_prob": c.drop_prob} for c in s.cameras],
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None)


def scenario_digest(s: Scenario) -> str:
    canon = json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# -- pipeline parameters -------------------------------------------------------

def load_params(path) -> tuple[TrackerParams, StitchParams, FusionParams]:
    doc = _Doc(Path(path).read_text(encoding="utf-8"), str(path))
    data = doc.data or {}
    _check_keys(doc, data, {"tracker", "stitcher", "fusion"}, [])
    out = []
    for section, cls in (("tracker", TrackerParams), ("stitcher", StitchParams), ("fusion", FusionParams)):
        sec = data.get(section) or {}
        names = {f.name for f in fields(cls)}
        _check_keys(doc, sec, names, [section])
        kw = {}
        for k, v in sec.items():
            if k == "new_track_cost" and v is None:
                kw[k] = None
            elif k == "max_gap":
                kw[k] = _typed(doc, v, "int", [section, k])
            else:
                kw[k] = _typed(doc, v, "num", [section, k])
        try:
            out.append(cls(**kw))
        except ValueError as exc:
            raise ValidationError([f"{section}: {exc}"]) from exc
    return tuple(out)


# -- thumbnails ----------------------------------------------------------------

def thumbnail_to_record(th: Thumbnail) -> dict:
    rec = {
        "camera_id": th.camera_id,
        "t_ms": th.t,
        "anchor_x_m": th.anchor[0],
        "anchor_y_m": th.anchor[1],
        "player_detections": [
            {"cx": d.box.cx, "cy": d.box.cy, "w": d.box.w, "h": d.box.h, "conf": d.confidence}
            for d in th.player_detections],
        "digit_detections": [{"digit": d.digit, "x": d.x, "conf": d.confidence}
                             for d in th.digit_detections],
    }
    if th.truth_player_id is not None:
        rec["truth_player_id"] = th.truth_player_id
    return rec


def record_to_thumbnail(rec: dict) -> Thumbnail:
    expected = ["camera_id", "t_ms", "anchor_x_m", "anchor_y_m", "player_detections", "digit_detections"]
    keys = list(rec)
    if keys[:6] != expected or keys[6:] not in ([], ["truth_player_id"]):
        raise ValueError(f"unexpected keys {keys}")
    return Thumbnail(
        camera_id=rec["camera_id"],
        t=int(rec["t_ms"]),
        player_detections=tuple(
            PlayerDetection(ImageBox(float(d["cx"]), float(d["cy"]), float(d["w"]), float(d["h"])),
                            float(d["conf"]))
            for d in rec["player_detections"]),
        digit_detections=tuple(DigitDetection(int(d["digit"]), float(d["x"]), float(d["conf"]))
                               for d in rec["digit_detections"]),
        anchor=PitchPos(float(rec["anchor_x_m"]), float(rec["anchor_y_m"])),
        truth_player_id=rec.get("truth_player_id"),
    )


def write_stream(path, thumbnails: Iterable[Thumbnail]):
    write_jsonl(path, (thumbnail_to_record(th) for th in thumbnails))


def read_stream(path) -> list[Thumbnail]:
    return read_jsonl(path, record_to_thumbnail)


def split_by_camera(thumbnails: Sequence[Thumbnail], camera_order: Sequence[str]) -> dict:
    out = {c: [] for c in camera_order}
    for th in thumbnails:
        out[th.camera_id].append(th)
    return out


# -- tracklets, tracks, verdicts -----------------------------------------------

def write_tracklets(path, tracklets: Sequence[Tracklet], thumbnails: Sequence[Thumbnail]):
    index = {id(th): i for i, th in enumerate(thumbnails)}
    write_jsonl(path, ({"camera_id": tl.camera_id, "tick": tl.tick,
                        "entries": [[e.t, index[id(e.thumbnail)], e.det_index] for e in tl.entries]}
                       for tl in tracklets))


def read_tracklets(path, thumbnails: Sequence[Thumbnail]) -> list[Tracklet]:
    def parse(rec):
        entries = []
        for t, i, d in rec["entries"]:
            th = thumbnails[i]
            if th.t != t or not 0 <= d < len(th.player_detections):
                raise ValueError(f"entry ({t}, {i}, {d}) does not match thumbnail {i}")
            entries.append(TrackletEntry(int(t), th, int(d)))
        return Tracklet(rec["camera_id"], tuple(entries), int(rec["tick"]))
    return read_jsonl(path, parse)


def write_tracks(path, tracks: Sequence[GlobalTrack], tracklets: Sequence[Tracklet]):
    index = {id(tl): i for i, tl in enumerate(tracklets)}
    write_jsonl(path, ({"track_id": g.track_id, "tracklets": [index[id(tl)] for tl in g.tracklets]}
                       for g in tracks))


def read_tracks(path, tracklets: Sequence[Tracklet]) -> list[GlobalTrack]:
    return read_jsonl(path, lambda r: GlobalTrack(int(r["track_id"]),
                                                  tuple(tracklets[i] for i in r["tracklets"])))


def verdict_to_record(track_id: int, v: NumberVerdict, mass: MassFunction) -> dict:
    return {"track_id": track_id, "outcome": v.outcome, "confidence": quantize(v.confidence),
            "total_conflict": quantize(v.total_conflict),
            "mass": [[ms, quantize(float(w))] for ms, w in mass.to_pairs()]}


def write_verdicts(path, tracks: Sequence[GlobalTrack], results):
    write_jsonl(path, (verdict_to_record(g.track_id, v, m) for g, (v, m) in zip(tracks, results)))


def read_verdicts(path) -> list[tuple[int, NumberVerdict]]:
    return read_jsonl(path, lambda r: (int(r["track_id"]), NumberVerdict(
        r["outcome"], float(r["confidence"]), float(r["total_conflict"]))))


# -- ground truth ---------------------------------------------------------------

def write_ground_truth(path, gt: GroundTruth, thumbnails: Sequence[Thumbnail],
                       truth_ids: Optional[Sequence[int]] = None):
    """Ground truth plus the truth id of every thumbnail line, so blind
    streams can still be scored."""
    if truth_ids is None:
        truth_ids = [th.truth_player_id for th in thumbnails]
    doc = {
        "tick": gt.tick,
        "n_ticks": len(gt.times),
        "players": [{"player_id": p, "jersey": j} for p, j in zip(gt.player_ids, gt.jerseys)],
        "visibility": [{"player_id": p, "camera_id": c, "intervals": [[iv.start, iv.end] for iv in ivs]}
                       for (p, c), ivs in gt.visibility.items()],
        "thumbnail_truth": list(truth_ids),
        "positions": [[[quantize(x), quantize(y)] for x, y in gt.positions[i].tolist()]
                      for i in range(len(gt.player_ids))],
    }
    atomic_write_text(path, _dumps(doc) + "\n")


def read_ground_truth(path) -> tuple[GroundTruth, list[int]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    tick = int(doc["tick"])
    vis = {(v["player_id"], v["camera_id"]): tuple(Interval(a, b) for a, b in v["intervals"])
           for v in doc["visibility"]}
    gt = GroundTruth(
        player_ids=tuple(p["player_id"] for p in doc["players"]),
        jerseys=tuple(p["jersey"] for p in doc["players"]),
        times=np.arange(int(doc["n_ticks"]), dtype=np.int64) * tick,
        positions=np.array(doc["positions"], dtype=float).reshape(len(doc["players"]), -1, 2),
        visibility=VisibilityLog(vis),
        tick=tick,
    )
    return gt, list(doc["thumbnail_truth"])


# -- metrics ---------------------------------------------------------------------

def _fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(quantize(v))
    return str(v)


def metrics_csv(rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for k, v in rows:
        w.writerow([k, _fmt_value(v)])
    return buf.getvalue()


def metrics_jsonl(rows) -> str:
    return "".join(_dumps({"metric": k, "value": quantize(v) if isinstance(v, float) else v}) + "\n"
                   for k, v in rows)


def metrics_report(rows) -> str:
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {_fmt_value(v) or 'none'}\n" for k, v in rows)
