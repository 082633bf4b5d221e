"""
The pipeline stages over a run directory.

Each stage reads the files written by the previous one, so running the
stages one by one produces exactly the files ``run_all`` writes.

    scenario.yaml        resolved scenario (seed applied)
    thumbnails.jsonl     every camera's stream, camera by camera in scenario order
    ground_truth.json    trajectories, visibility, and the truth id of each thumbnail line
    tracklets.jsonl      per-camera tracklets, ordered by start time
    tracks.jsonl         global tracks
    verdicts.jsonl       shirt-number verdict and fused mass per track
    metrics.csv|jsonl    evaluation against ground truth
    manifest.json        scenario digest, seed, outputs, version
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__, io, sim
from .evaluate import compute_tracking_metrics, metric_rows, number_id_accuracy
from .fusion import FusionParams
from .model import GlobalTrack, Scenario, Thumbnail, Tracklet, TrackletEntry
from .stitch import StitchParams, identify_tracks, stitch
from .tracking import TrackerParams, TrackStats, build_tracklets

SCENARIO = "scenario.yaml"
THUMBNAILS = "thumbnails.jsonl"
GROUND_TRUTH = "ground_truth.json"
TRACKLETS = "tracklets.jsonl"
TRACKS = "tracks.jsonl"
VERDICTS = "verdicts.jsonl"
MANIFEST = "manifest.json"
THREADS_ENV = "TRACKLET_FUSE_THREADS"


def worker_count(tasks: int) -> int:
    """Workers for ``tasks`` independent jobs, capped by ``TRACKLET_FUSE_THREADS``."""
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise io.ValidationError([f"{THREADS_ENV}: expected a positive integer, got {cap!r}"]) from None
    return max(1, min(n, tasks))


def _map(fn, items):
    items = list(items)
    workers = worker_count(len(items))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


Params = tuple[TrackerParams, StitchParams, FusionParams]
DEFAULT_PARAMS: Params = (TrackerParams(), StitchParams(), FusionParams())


# -- manifest ---------------------------------------------------------------------

def update_manifest(out: Path, s: Scenario, stage: str, files: list[str]):
    path = out / MANIFEST
    doc = {}
    if path.exists():
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("scenario_digest") != io.scenario_digest(s):
            doc = {}
    outputs = dict(doc.get("outputs", {}))
    outputs[stage] = sorted(files)
    manifest = {
        "tool": "tracklet-fuse",
        "version": __version__,
        "scenario_digest": io.scenario_digest(s),
        "seed": s.seed,
        "outputs": {k: outputs[k] for k in sorted(outputs)},
    }
    io.atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=False) + "\n")


# -- stages -----------------------------------------------------------------------

def simulate(s: Scenario, out: Path, strip_truth: bool = False):
    out.mkdir(parents=True, exist_ok=True)
    gt = sim.generate_ground_truth(s)
    streams = _map(lambda c: sim.emit_camera(gt, s, c, False), s.cameras)
    thumbnails = [th for st in streams for th in st]
    truth = [th.truth_player_id for th in thumbnails]
    if strip_truth:
        thumbnails = sim.strip_truth(thumbnails)
    io.atomic_write_text(out / SCENARIO, io.dump_scenario(s))
    io.write_stream(out / THUMBNAILS, thumbnails)
    io.write_ground_truth(out / GROUND_TRUTH, gt, thumbnails, truth)
    update_manifest(out, s, "simulate", [SCENARIO, THUMBNAILS, GROUND_TRUTH])
    return gt, thumbnails, truth


def order_tracklets(per_camera: list[list], camera_order: list[str]):
    """All cameras' tracklets in one list, by start time, then camera order,
    then each camera's own order."""
    rank = {c: i for i, c in enumerate(camera_order)}
    flat = [(tl.entries[0].t, rank[tl.camera_id], k, tl)
            for tls in per_camera for k, tl in enumerate(tls)]
    flat.sort(key=lambda x: x[:3])
    return [x[3] for x in flat]


def track(s: Scenario, out: Path, thumbnails: list[Thumbnail], p: TrackerParams = TrackerParams()):
    streams = io.split_by_camera(thumbnails, [c.camera_id for c in s.cameras])
    stats = {c.camera_id: TrackStats() for c in s.cameras}
    per_camera = _map(lambda c: build_tracklets(streams[c.camera_id], c, p, s.tick, stats[c.camera_id]),
                      s.cameras)
    tracklets = order_tracklets(per_camera, [c.camera_id for c in s.cameras])
    io.write_tracklets(out / TRACKLETS, tracklets, thumbnails)
    update_manifest(out, s, "track", [TRACKLETS])
    return tracklets, stats


def stitch_stage(s: Scenario, out: Path, tracklets, p: StitchParams = StitchParams(),
                 fp: FusionParams = FusionParams(), masses: Optional[dict] = None):
    tracks = stitch(tracklets, {c.camera_id: c for c in s.cameras}, p, fp, with_verdicts=False, masses=masses)
    io.write_tracks(out / TRACKS, tracks, tracklets)
    update_manifest(out, s, "stitch", [TRACKS])
    return tracks


def identify(s: Scenario, out: Path, tracks: list[GlobalTrack], fp: FusionParams = FusionParams(),
             fused: Optional[dict] = None):
    results = identify_tracks(tracks, fp, fused)
    io.write_verdicts(out / VERDICTS, tracks, results)
    update_manifest(out, s, "identify", [VERDICTS])
    return [GlobalTrack(g.track_id, g.tracklets, v) for g, (v, _) in zip(tracks, results)]


def _label(thumbnails, truth, tracklets, tracks):
    """Attach truth ids to thumbnails that lack them and rebuild the
    tracklets and tracks over the labeled copies."""
    if all(th.truth_player_id == pid for th, pid in zip(thumbnails, truth)):
        return tracklets, tracks
    fresh = {id(th): replace(th, truth_player_id=pid) for th, pid in zip(thumbnails, truth)}
    new_tl = {id(tl): Tracklet(tl.camera_id, tuple(TrackletEntry(e.t, fresh[id(e.thumbnail)], e.det_index)
                                                   for e in tl.entries), tl.tick)
              for tl in tracklets}
    return ([new_tl[id(tl)] for tl in tracklets],
            [GlobalTrack(g.track_id, tuple(new_tl[id(tl)] for tl in g.tracklets), g.number_verdict)
             for g in tracks])


def evaluate(s: Scenario, out: Path, fmt: str = "csv", state: Optional[dict] = None):
    """Metrics of the tracklet and track stages against ground truth.

    Inputs come from the run directory, or from ``state`` when the caller
    still holds the objects it just wrote there.
    """
    if state is None:
        gt, truth = io.read_ground_truth(out / GROUND_TRUTH)
        thumbnails = io.read_stream(out / THUMBNAILS)
        tracklets = io.read_tracklets(out / TRACKLETS, thumbnails)
        tracks = io.read_tracks(out / TRACKS, tracklets)
        verdicts = [v for _, v in io.read_verdicts(out / VERDICTS)]
    else:
        gt, truth, thumbnails = state["gt"], state["truth"], state["thumbnails"]
        tracklets, tracks, verdicts = state["tracklets"], state["tracks"], state["verdicts"]
    if len(truth) != len(thumbnails):
        raise io.ValidationError([f"{GROUND_TRUTH}: {len(truth)} truth labels for {len(thumbnails)} thumbnails"])
    if len(verdicts) != len(tracks):
        raise io.ValidationError([f"{VERDICTS}: {len(verdicts)} verdicts for {len(tracks)} tracks"])
    tracklets, tracks = _label(thumbnails, truth, tracklets, tracks)
    acc, abstain = number_id_accuracy(tracks, gt, verdicts)
    rows = ([(f"tracklet_{k}", v) for k, v in metric_rows(compute_tracking_metrics(tracklets, gt))]
            + [(f"track_{k}", v) for k, v in metric_rows(compute_tracking_metrics(tracks, gt))]
            + [("number_accuracy", acc), ("abstain_rate", abstain)])
    name = "metrics.csv" if fmt == "csv" else "metrics.jsonl"
    io.atomic_write_text(out / name, io.metrics_csv(rows) if fmt == "csv" else io.metrics_jsonl(rows))
    update_manifest(out, s, "evaluate", [name])
    return rows


def run_all(s: Scenario, out: Path, params: Params = DEFAULT_PARAMS, strip_truth: bool = False,
            fmt: str = "csv"):
    tp, sp, fp = params
    gt, thumbnails, truth = simulate(s, out, strip_truth)
    tracklets, _ = track(s, out, thumbnails, tp)
    masses: dict = {}
    tracks = stitch_stage(s, out, tracklets, sp, fp, masses)
    identified = identify(s, out, tracks, fp, masses)
    state = {"gt": gt, "truth": truth, "thumbnails": thumbnails, "tracklets": tracklets,
             "tracks": tracks, "verdicts": [g.number_verdict for g in identified]}
    return evaluate(s, out, fmt, state)


# -- reading stage inputs ---------------------------------------------------------

def load_run_scenario(out: Path, scenario: Optional[Path], seed: Optional[int]) -> Scenario:
    return io.load_scenario(scenario if scenario is not None else out / SCENARIO, seed)


def read_thumbnails(out: Path) -> list[Thumbnail]:
    return io.read_stream(out / THUMBNAILS)


def read_tracklets(out: Path, thumbnails):
    return io.read_tracklets(out / TRACKLETS, thumbnails)


def read_tracks(out: Path, tracklets):
    return io.read_tracks(out / TRACKS, tracklets)
