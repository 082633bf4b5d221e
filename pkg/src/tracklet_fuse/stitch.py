"""
Cross-camera stitching of tracklets into global tracks.

Tracklets are lifted to pitch coordinates and merged by greedy
complete-linkage agglomeration: the cheapest pair of clusters is merged
while its cost stays below ``merge_threshold``, where a cluster pair costs
the worst (largest) pair cost between their members.  A pair of tracklets
from the same camera with overlapping spans costs ``inf``, so no global
track ever holds two simultaneous tracklets from one camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import fusion
from .fusion import FusionParams, MassFunction
from .model import (
    CameraCalib, GlobalTrack, Interval, Tracklet, interval_overlap,
)
from .tracking import detection_position


class CalibMismatch(ValueError):
    pass


@dataclass(frozen=True)
class StitchParams:
    overlap_dist_max: float = 1.0
    gap_speed_mps: float = 9.0
    conflict_penalty_weight: float = 5.0
    merge_threshold: float = 2.0

    def __post_init__(self):
        for name in ("overlap_dist_max", "gap_speed_mps", "conflict_penalty_weight", "merge_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PitchTracklet:
    tracklet: Tracklet
    times: np.ndarray      # (n,) int64 ms
    xy: np.ndarray         # (n, 2) meters
    mass: MassFunction
    conflict: float = 0.0  # total conflict accumulated while fusing the tracklet

    @property
    def camera_id(self) -> str:
        return self.tracklet.camera_id

    @property
    def span(self) -> Interval:
        return self.tracklet.span


def tracklet_to_pitch(t: Tracklet, c: CameraCalib) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps and pitch positions of a tracklet's central detections,
    clamped into the camera's region."""
    if t.camera_id != c.camera_id:
        raise CalibMismatch(f"tracklet from {t.camera_id} with calibration of {c.camera_id}")
    times = np.fromiter((e.t for e in t.entries), dtype=np.int64, count=len(t.entries))
    xy = np.array([detection_position(e.thumbnail, e.det_index, c.px_per_m) for e in t.entries],
                  dtype=float).reshape(-1, 2)
    x0, y0, x1, y1 = c.region
    np.clip(xy[:, 0], x0, np.nextafter(x1, x0), out=xy[:, 0])
    np.clip(xy[:, 1], y0, np.nextafter(y1, y0), out=xy[:, 1])
    return times, xy


def to_pitch(tracklets: Sequence[Tracklet], cameras: Mapping[str, CameraCalib],
             fp: FusionParams = FusionParams()) -> list[PitchTracklet]:
    out = []
    for t in tracklets:
        times, xy = tracklet_to_pitch(t, cameras[t.camera_id])
        mass, k = fusion.fuse_entries(t.entries, fp.discount)
        out.append(PitchTracklet(t, times, xy, mass, k))
    return out


def _nearest(times: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Index of the nearest entry in sorted ``times`` for each of ``ts`` (earlier wins ties)."""
    hi = np.clip(np.searchsorted(times, ts), 1, len(times) - 1) if len(times) > 1 else np.zeros(len(ts), int)
    if len(times) == 1:
        return hi
    lo = hi - 1
    return np.where(ts - times[lo] <= times[hi] - ts, lo, hi)


def overlap_distance(a: PitchTracklet, b: PitchTracklet, ov: Interval) -> float:
    """Mean pitch distance over the shared window, each timestamp of either
    tracklet paired with the other's nearest entry."""
    ts = np.union1d(a.times[(a.times >= ov.start) & (a.times < ov.end)],
                    b.times[(b.times >= ov.start) & (b.times < ov.end)])
    pa = a.xy[_nearest(a.times, ts)]
    pb = b.xy[_nearest(b.times, ts)]
    return float(np.mean(np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1])))


def _geometry_cost(a: PitchTracklet, b: PitchTracklet, p: StitchParams) -> float:
    ov = interval_overlap(a.span, b.span)
    if ov is not None:
        if a.camera_id == b.camera_id:
            return math.inf
        d = overlap_distance(a, b, ov)
        return d / p.overlap_dist_max if d <= p.overlap_dist_max else math.inf
    early, late = (a, b) if a.times[0] < b.times[0] else (b, a)
    gap_s = (late.times[0] - early.times[-1]) / 1000.0
    dist = float(np.hypot(late.xy[0, 0] - early.xy[-1, 0], late.xy[0, 1] - early.xy[-1, 1]))
    ratio = dist / gap_s / p.gap_speed_mps
    return ratio if ratio <= 1.0 else math.inf


def pair_cost(a: PitchTracklet, b: PitchTracklet, p: StitchParams = StitchParams()) -> float:
    """Cost of attributing two tracklets to the same player.

    Geometry term: over a temporal overlap, mean distance relative to
    ``overlap_dist_max``; across a gap, implied speed relative to
    ``gap_speed_mps``; either is ``inf`` past its bound.  Number term:
    ``conflict_penalty_weight`` times the Dempster conflict of the two
    tracklets' number evidence.
    """
    if a is b:
        raise ValueError("pair_cost needs two distinct tracklets")
    g = _geometry_cost(a, b, p)
    if math.isinf(g):
        return math.inf
    return g + p.conflict_penalty_weight * fusion.conflict(a.mass, b.mass)


class _ConflictTable:
    """Pairwise Dempster conflict through the distinct focal sets of all masses.

    With ``W[i, f]`` the mass tracklet ``i`` puts on focal set ``f`` and
    ``C[f, g] = 1`` when the sets intersect, the agreeing mass of a pair is
    ``W[i] @ C @ W[j]`` and the conflict is one minus that.
    """

    def __init__(self, masses: Sequence[MassFunction]):
        index: dict[int, int] = {}
        rows, cols, vals = [], [], []
        for i, m in enumerate(masses):
            for bits, v in m.items():
                rows.append(i)
                cols.append(index.setdefault(bits, len(index)))
                vals.append(float(v))
        self.w = np.zeros((len(masses), len(index)))
        np.add.at(self.w, (rows, cols), vals)
        focal = list(index)
        compat = np.array([[1.0 if a & b else 0.0 for b in focal] for a in focal]).reshape(len(focal), len(focal))
        self.cw = compat @ self.w.T

    def rows(self, r: slice) -> np.ndarray:
        return np.clip(1.0 - self.w[r] @ self.cw, 0.0, 1.0)


def conflict_matrix(masses: Sequence[MassFunction]) -> np.ndarray:
    """Pairwise Dempster conflict ``K`` of a list of masses."""
    return _ConflictTable(masses).rows(slice(None))


_CHUNK = 1024


def _bbox_gap(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    """Smallest distance between axis-aligned boxes (broadcasting)."""
    gx = np.maximum(0.0, np.maximum(lo_a[..., 0] - hi_b[..., 0], lo_b[..., 0] - hi_a[..., 0]))
    gy = np.maximum(0.0, np.maximum(lo_a[..., 1] - hi_b[..., 1], lo_b[..., 1] - hi_a[..., 1]))
    return np.hypot(gx, gy)


def cost_matrix(pts: Sequence[PitchTracklet], p: StitchParams = StitchParams()) -> np.ndarray:
    """All pair costs at once; the diagonal is ``inf``.

    Work happens in start-time order, where the earlier tracklet of a pair is
    always the row.  Overlapping pairs whose position bounding boxes are
    already farther apart than ``overlap_dist_max`` are ``inf`` without
    evaluating the mean distance, which can only be larger.
    """
    n = len(pts)
    if n == 0:
        return np.zeros((0, 0))
    order = np.argsort([pt.times[0] for pt in pts], kind="stable")
    pts = [pts[i] for i in order]
    first = np.array([pt.times[0] for pt in pts])
    last = np.array([pt.times[-1] for pt in pts])
    end = last + np.array([pt.tracklet.tick for pt in pts])
    cam_ids = sorted({pt.camera_id for pt in pts})
    cam = np.array([cam_ids.index(pt.camera_id) for pt in pts])
    sx, sy = np.array([pt.xy[0] for pt in pts]).T
    ex, ey = np.array([pt.xy[-1] for pt in pts]).T
    lo = np.array([pt.xy.min(axis=0) for pt in pts])
    hi = np.array([pt.xy.max(axis=0) for pt in pts])
    table = _ConflictTable([pt.mass for pt in pts])

    geo = np.full((n, n), np.inf)
    for r0 in range(0, n, _CHUNK):
        r = slice(r0, min(n, r0 + _CHUNK))
        c = slice(r0, n)     # upper triangle; the row starts no later than the column
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.hypot(sx[None, c] - ex[r, None], sy[None, c] - ey[r, None])
            ratio /= (first[None, c] - last[r, None]) / 1000.0
            ratio /= p.gap_speed_mps
        ratio[~((first[None, c] >= end[r, None]) & (ratio <= 1.0))] = np.inf
        # inside the diagonal block only the upper half is in row-first order
        k = r.stop - r0
        below = np.tril_indices(k, -1)
        ratio[:, :k][below] = ratio[:, :k].T[below]
        geo[r, c] = ratio
        geo[c, r] = ratio.T
    for i in range(n):
        # overlapping partners of i that start after it form a contiguous run
        j = np.arange(i + 1, int(np.searchsorted(first, end[i], side="left")))
        j = j[cam[j] != cam[i]]
        j = j[_bbox_gap(lo[i], hi[i], lo[j], hi[j]) <= p.overlap_dist_max]
        for jj in j.tolist():
            d = overlap_distance(pts[i], pts[jj], Interval(int(first[jj]), int(min(end[i], end[jj]))))
            if d <= p.overlap_dist_max:
                geo[i, jj] = geo[jj, i] = d / p.overlap_dist_max
    # the conflict term comes from a matrix product whose rounding depends on
    # operand order, so it is added over the upper triangle and mirrored
    for r0 in range(0, n, _CHUNK):
        r = slice(r0, min(n, r0 + _CHUNK))
        c = slice(r0, n)
        upper = geo[r, c] + p.conflict_penalty_weight * table.rows(r)[:, c]
        k = r.stop - r0
        below = np.tril_indices(k, -1)
        upper[:, :k][below] = upper[:, :k].T[below]
        geo[r, c] = upper
        geo[c, r] = upper.T
    np.fill_diagonal(geo, np.inf)
    if np.any(order != np.arange(n)):
        inv = np.empty(n, dtype=int)
        inv[order] = np.arange(n)
        geo = geo[np.ix_(inv, inv)]
    return geo


def agglomerate(cost: np.ndarray, threshold: float, overwrite: bool = False) -> list[list[int]]:
    """Greedy complete-linkage merging while the cheapest cluster pair costs
    less than ``threshold``.  Ties go to the pair with the lowest indices.

    Complete-linkage costs only grow under merging, so an entry at or above
    the threshold can never take part in a merge; such entries are set to
    ``inf`` up front, which keeps the per-merge updates sparse.  With
    ``overwrite`` a float64 ``cost`` is used as scratch space.
    """
    d = np.array(cost, dtype=float, copy=not overwrite)
    n = d.shape[0]
    if n == 0:
        return []
    for r0 in range(0, n, 1024):
        block = d[r0:r0 + 1024]
        block[~(block < threshold)] = np.inf
    np.fill_diagonal(d, np.inf)
    members = {i: [i] for i in range(n)}
    rowarg = np.argmin(d, axis=1)
    rowmin = d[np.arange(n), rowarg]
    while True:
        i = int(np.argmin(rowmin))
        if not rowmin[i] < threshold:
            break
        j = int(rowarg[i])
        members[i].extend(members.pop(j))
        touched = np.flatnonzero(np.isfinite(d[i]) | np.isfinite(d[j]))
        merged = np.maximum(d[i, touched], d[j, touched])
        d[i, touched] = merged
        d[touched, i] = merged
        d[j, touched] = np.inf
        d[touched, j] = np.inf
        d[i, i] = np.inf
        rowmin[j] = np.inf
        # rows whose best partner was i or j and whose minimum may have moved
        stale = touched[(rowarg[touched] == i) | (rowarg[touched] == j)]
        stale = np.union1d(stale, [i])
        stale = stale[stale != j]
        if len(stale):
            rowarg[stale] = np.argmin(d[stale], axis=1)
            rowmin[stale] = d[stale, rowarg[stale]]
    return [sorted(members[k]) for k in sorted(members)]


def identify_track(g: GlobalTrack, fp: FusionParams = FusionParams(), fused=None):
    """Number verdict and fused mass of one global track.

    Each member tracklet's thumbnails are folded in time order, then the
    tracklet masses are combined in member order.  Dempster's rule is
    associative, so this equals folding every thumbnail at once; the fixed
    two-level order keeps the floating-point result reproducible.
    ``fused`` optionally maps ``id(tracklet)`` to an already computed
    ``(mass, total_conflict)``.
    """
    parts = []
    for tl in g.tracklets:
        got = fused.get(id(tl)) if fused is not None else None
        parts.append(got if got is not None else fusion.fuse_entries(tl.entries, fp.discount))
    if any(k >= 1.0 for _, k in parts):
        return fusion.identify(g.entries(), fp.discount, fp.threshold)
    survive = 1.0
    for _, k in parts:
        survive *= 1.0 - k
    masses = [m for m, _ in parts if not m.is_vacuous]
    if not masses:
        return fusion.decide_number(MassFunction.vacuous(), fp.threshold, 1.0 - survive), MassFunction.vacuous()
    try:
        mass, k = fusion.combine_all(masses)
    except fusion.TotalConflict:
        return fusion.NumberVerdict(None, 0.0, 1.0), MassFunction.vacuous()
    total = 1.0 - survive * (1.0 - k)
    return fusion.decide_number(mass, fp.threshold, total), mass


def identify_tracks(tracks: Sequence[GlobalTrack], fp: FusionParams = FusionParams(), fused=None):
    """``(verdict, mass)`` for each global track; see ``identify_track``."""
    return [identify_track(g, fp, fused) for g in tracks]


def stitch(tracklets: Sequence[Tracklet], cameras: Mapping[str, CameraCalib],
           p: StitchParams = StitchParams(), fp: FusionParams = FusionParams(),
           with_verdicts: bool = True, masses: Optional[dict] = None) -> list[GlobalTrack]:
    """Merge tracklets from all cameras into global tracks.

    Tracklet ids are their positions in ``tracklets``; output tracks are
    ordered by their lowest member id and list members in id order.  A dict
    passed as ``masses`` receives each tracklet's fused number evidence in
    the form ``identify_tracks`` accepts as ``fused``.
    """
    pts = to_pitch(tracklets, cameras, fp)
    clusters = agglomerate(cost_matrix(pts, p), p.merge_threshold, overwrite=True)
    tracks = [GlobalTrack(k, tuple(tracklets[i] for i in c)) for k, c in enumerate(clusters)]
    fused = {id(pt.tracklet): (pt.mass, pt.conflict) for pt in pts}
    if masses is not None:
        masses.update(fused)
    if with_verdicts:
        verdicts = identify_tracks(tracks, fp, fused)
        tracks = [GlobalTrack(g.track_id, g.tracklets, v) for g, (v, _) in zip(tracks, verdicts)]
    return tracks


def stitch_indices(tracklets: Sequence[Tracklet], cameras: Mapping[str, CameraCalib],
                   p: StitchParams = StitchParams(), fp: FusionParams = FusionParams()) -> list[list[int]]:
    """Cluster membership as lists of tracklet ids."""
    return agglomerate(cost_matrix(to_pitch(tracklets, cameras, fp), p), p.merge_threshold, overwrite=True)

