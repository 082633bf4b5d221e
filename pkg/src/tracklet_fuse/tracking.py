"""
Per-camera tracklet building.

Each thumbnail is reduced to its central player's position in camera-plane
meters (crop anchor plus the pixel offset of the central detection divided
by the camera scale).  Observations sharing a timestamp form one frame; each
frame is associated to the active tracklets by optimal assignment over a
speed-gated distance matrix, with constant-velocity prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import groupby
from typing import Optional, Sequence

import numpy as np

from .assignment import INFEASIBLE, solve_assignment
from .model import THUMB_CENTER, CameraCalib, PitchPos, Thumbnail, Tracklet, TrackletEntry


class NoDetections(LookupError):
    """The thumbnail has no player detection to call central."""


class UnsortedStream(ValueError):
    pass


@dataclass(frozen=True)
class TrackerParams:
    gate_speed_mps: float = 9.0
    max_gap: int = 1000
    new_track_cost: Optional[float] = None   # None: the largest gate radius in the frame

    def __post_init__(self):
        if self.gate_speed_mps <= 0:
            raise ValueError("gate_speed_mps must be positive")
        if self.max_gap < 1:
            raise ValueError("max_gap must be at least one tick")


def central_player(th: Thumbnail) -> int:
    """Index of the detection closest to the thumbnail center (lowest index on ties)."""
    if not th.player_detections:
        raise NoDetections(f"no player detections at t={th.t} on {th.camera_id}")
    best, best_d = 0, math.inf
    for i, det in enumerate(th.player_detections):
        d = math.hypot(det.box.cx - THUMB_CENTER, det.box.cy - THUMB_CENTER)
        if d < best_d:
            best, best_d = i, d
    return best


def resolvable_central(th: Thumbnail) -> Optional[int]:
    """The central player's index, or None when it cannot be resolved.

    A crop is centered on its player, so the central detection's box must
    cover the thumbnail center.  When the detector missed that player the
    nearest remaining box belongs to someone (or something) else and the
    thumbnail is unusable for association.
    """
    if not th.player_detections:
        return None
    idx = central_player(th)
    box = th.player_detections[idx].box
    if abs(box.cx - THUMB_CENTER) <= box.w / 2 and abs(box.cy - THUMB_CENTER) <= box.h / 2:
        return idx
    return None


def detection_position(th: Thumbnail, det_index: int, px_per_m: float) -> PitchPos:
    box = th.player_detections[det_index].box
    return PitchPos(th.anchor[0] + (box.cx - THUMB_CENTER) / px_per_m,
                    th.anchor[1] + (box.cy - THUMB_CENTER) / px_per_m)


def predict_position(points: Sequence[tuple[int, Sequence[float]]], t: int) -> PitchPos:
    """Constant-velocity extrapolation from the last two ``(t_ms, (x, y))``
    points; a single point is held."""
    if not points:
        raise ValueError("need at least one point")
    t1, p1 = points[-1]
    if t < t1:
        raise ValueError("cannot predict backwards in time")
    if len(points) == 1:
        return PitchPos(float(p1[0]), float(p1[1]))
    t0, p0 = points[-2]
    f = (t - t1) / (t1 - t0)
    return PitchPos(p1[0] + (p1[0] - p0[0]) * f, p1[1] + (p1[1] - p0[1]) * f)


def gated_cost_matrix(histories, observations, now: int, p: TrackerParams) -> np.ndarray:
    """Distance from each tracklet's predicted position to each observation.

    ``histories`` holds, per active tracklet, its last (up to two)
    ``(t_ms, (x, y))`` points; ``observations`` are positions in meters.
    Cells beyond ``gate_speed_mps * dt`` are ``INFEASIBLE``.
    """
    n, m = len(histories), len(observations)
    cost = np.full((n, m), INFEASIBLE)
    if n == 0 or m == 0:
        return cost
    obs = np.asarray(observations, dtype=float).reshape(m, 2)
    t1 = np.array([h[-1][0] for h in histories], dtype=float)
    p1 = np.array([h[-1][1] for h in histories], dtype=float).reshape(n, 2)
    t0 = np.array([h[-2][0] if len(h) > 1 else h[-1][0] - 1 for h in histories], dtype=float)
    p0 = np.array([h[-2][1] if len(h) > 1 else h[-1][1] for h in histories], dtype=float).reshape(n, 2)
    if np.any(now < t1):
        raise ValueError("cannot predict backwards in time")
    pred = p1 + (p1 - p0) * ((now - t1) / (t1 - t0))[:, None]
    radius = p.gate_speed_mps * (now - t1) / 1000.0
    d = np.hypot(obs[None, :, 0] - pred[:, None, 0], obs[None, :, 1] - pred[:, None, 1])
    return np.where(d <= radius[:, None], d, INFEASIBLE)


@dataclass
class _Active:
    seq: int
    entries: list = field(default_factory=list)
    points: list = field(default_factory=list)

    @property
    def last_t(self) -> int:
        return self.entries[-1].t

    def add(self, entry: TrackletEntry, pos: PitchPos):
        self.entries.append(entry)
        self.points = (self.points + [(entry.t, pos)])[-2:]


@dataclass
class TrackStats:
    thumbnails: int = 0
    unresolved: int = 0     # thumbnails whose central player could not be resolved


def build_tracklets(stream: Sequence[Thumbnail], camera: CameraCalib,
                    p: TrackerParams = TrackerParams(), tick: int = 100,
                    stats: Optional[TrackStats] = None) -> list[Tracklet]:
    """Associate one camera's time-ordered thumbnails into tracklets.

    Thumbnails without a resolvable central player (see
    ``resolvable_central``) cannot be placed and are skipped, counted in
    ``stats.unresolved``.  The output is ordered by
    tracklet start time, then by order of creation.
    """
    stats = stats if stats is not None else TrackStats()
    active: list[_Active] = []
    done: list[_Active] = []
    last_t = -1
    created = 0
    for t, group in groupby(stream, key=lambda th: th.t):
        if t < last_t:
            raise UnsortedStream(f"timestamp {t} after {last_t} on camera {camera.camera_id}")
        last_t = t
        obs = []
        for th in group:
            if th.camera_id != camera.camera_id:
                raise ValueError(f"thumbnail from {th.camera_id} in stream of {camera.camera_id}")
            stats.thumbnails += 1
            idx = resolvable_central(th)
            if idx is None:
                stats.unresolved += 1
                continue
            obs.append((TrackletEntry(t, th, idx), detection_position(th, idx, camera.px_per_m)))
        still = []
        for a in active:
            (done if t - a.last_t > p.max_gap else still).append(a)
        active = still
        if not obs:
            continue
        if active:
            cost = gated_cost_matrix([a.points for a in active], [o[1] for o in obs], t, p)
            ntc = p.new_track_cost
            if ntc is None:
                ntc = p.gate_speed_mps * max(t - a.last_t for a in active) / 1000.0
            pairs = solve_assignment(cost, ntc).pairs
        else:
            pairs = {}
        matched = set()
        for r, k in pairs.items():
            active[r].add(*obs[k])
            matched.add(k)
        for k, o in enumerate(obs):
            if k not in matched:
                a = _Active(created)
                created += 1
                a.add(*o)
                active.append(a)
    done.extend(active)
    done.sort(key=lambda a: (a.entries[0].t, a.seq))
    return [Tracklet(camera.camera_id, tuple(a.entries), tick) for a in done]
