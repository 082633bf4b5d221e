"""
Seeded match simulator: waypoint player motion, camera visibility, and the
per-camera thumbnail/detection streams with frame drops and detector noise.

Every random draw comes from an explicit ``numpy.random.Generator``.  Ground
truth uses the substream ``(seed, 0)``; camera ``c`` uses ``(seed, 1,
crc32(camera_id))`` so cameras can be generated in any order, or
concurrently, without changing output.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    BODY_BOX_H, BODY_BOX_W, THUMB_CENTER, THUMB_SIZE,
    CameraCalib, ContractError, DigitDetection, ImageBox, Interval, NoiseModel,
    PitchPos, PlayerDetection, Scenario, Thumbnail, runs_to_intervals,
    validate_scenario,
)

DIGIT_OFFSET_PX = 8.0


def quantize(v: float) -> float:
    """Round to 9 significant digits, the precision streams are stored at."""
    return float(f"{v:.9g}")


class VisibilityLog:
    """Visibility intervals per ``(player_id, camera_id)``; ``K`` is their count."""

    def __init__(self, intervals: Optional[dict] = None):
        self._iv: dict[tuple[int, str], tuple[Interval, ...]] = dict(intervals or {})

    def intervals(self, player_id: int, camera_id: str) -> tuple[Interval, ...]:
        return self._iv.get((player_id, camera_id), ())

    def count(self, player_id: int, camera_id: str) -> int:
        return len(self.intervals(player_id, camera_id))

    def camera_count(self, camera_id: str) -> int:
        return sum(len(v) for (p, c), v in self._iv.items() if c == camera_id)

    def items(self):
        return sorted(self._iv.items())

    def covers(self, player_id: int, camera_id: str, t: int) -> bool:
        return any(iv.contains(t) for iv in self.intervals(player_id, camera_id))

    def __eq__(self, other):
        return isinstance(other, VisibilityLog) and self._iv == other._iv


@dataclass
class GroundTruth:
    player_ids: tuple[int, ...]
    jerseys: tuple[int, ...]
    times: np.ndarray          # (n_ticks,) int64 ms
    positions: np.ndarray      # (n_players, n_ticks, 2) meters
    visibility: VisibilityLog
    tick: int

    def jersey_of(self, player_id: int) -> int:
        return self.jerseys[self.player_ids.index(player_id)]

    def position(self, player_id: int, t: int) -> PitchPos:
        k = int(np.searchsorted(self.times, t))
        x, y = self.positions[self.player_ids.index(player_id), k]
        return PitchPos(float(x), float(y))


def camera_rng(seed: int, camera_id: str) -> np.random.Generator:
    key = zlib.crc32(camera_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, key)))


def camera_sees(c: CameraCalib, p: PitchPos) -> bool:
    x0, y0, x1, y1 = c.region
    return x0 <= p[0] < x1 and y0 <= p[1] < y1


def _visible_mask(c: CameraCalib, positions: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = c.region
    x, y = positions[..., 0], positions[..., 1]
    return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)


# -- ground truth -------------------------------------------------------------

def _walk(rng, n_ticks, tick, width, height, motion) -> np.ndarray:
    out = np.empty((n_ticks, 2))
    pos = rng.uniform((0, 0), (width, height))
    target = rng.uniform((0, 0), (width, height))
    speed = rng.uniform(motion.speed_min_mps, motion.speed_max_mps)
    dwell = 0
    dt = tick / 1000.0
    lo = -(-motion.dwell_min_ms // tick)
    dwell_ticks = (lo, max(lo, motion.dwell_max_ms // tick))
    for k in range(n_ticks):
        if k > 0:
            if dwell > 0:
                dwell -= 1
            elif speed > 0:
                step = speed * dt
                delta = target - pos
                dist = float(np.hypot(*delta))
                if dist <= step:
                    pos = target
                    dwell = int(rng.integers(dwell_ticks[0], dwell_ticks[1] + 1))
                    target = rng.uniform((0, 0), (width, height))
                    speed = rng.uniform(motion.speed_min_mps, motion.speed_max_mps)
                else:
                    pos = pos + delta * (step / dist)
        out[k] = pos
    return out


def generate_ground_truth(s: Scenario) -> GroundTruth:
    """Waypoint trajectories for every player plus the visibility log.

    Each player walks straight to a uniform random waypoint at a uniform
    random speed, dwells there for a few ticks, and repeats.  The dwell keeps
    every tick-to-tick change of velocity bounded by one leg's speed.
    """
    problems = validate_scenario(s)
    if problems:
        raise ContractError("invalid scenario: " + "; ".join(problems))
    n_ticks = s.n_ticks
    times = np.arange(n_ticks, dtype=np.int64) * s.tick
    ss = np.random.SeedSequence(s.seed, spawn_key=(0,))
    player_seeds = ss.spawn(s.n_players)
    positions = np.stack([
        _walk(np.random.default_rng(ps), n_ticks, s.tick, s.pitch_width, s.pitch_height, s.motion)
        for ps in player_seeds
    ])
    # guard against round-off nudging a waypoint leg past the far touchline
    np.clip(positions[..., 0], 0.0, s.pitch_width, out=positions[..., 0])
    np.clip(positions[..., 1], 0.0, s.pitch_height, out=positions[..., 1])
    vis = {}
    tlist = times.tolist()
    for c in s.cameras:
        mask = _visible_mask(c, positions)
        for i in range(s.n_players):
            if mask[i].any():
                vis[(i, c.camera_id)] = tuple(runs_to_intervals(tlist, mask[i].tolist(), s.tick))
    return GroundTruth(
        player_ids=tuple(range(s.n_players)),
        jerseys=tuple(s.jersey_numbers),
        times=times,
        positions=positions,
        visibility=VisibilityLog(vis),
        tick=s.tick,
    )


# -- detections -----------------------------------------------------------------

def pitch_to_image(c: CameraCalib, center: PitchPos, other: PitchPos) -> Optional[ImageBox]:
    """Body box of ``other`` inside the thumbnail cropped around ``center``."""
    if not camera_sees(c, center):
        raise ContractError(f"camera {c.camera_id} does not see crop center {tuple(center)}")
    cx = THUMB_CENTER + (other[0] - center[0]) * c.px_per_m
    cy = THUMB_CENTER + (other[1] - center[1]) * c.px_per_m
    if 0 <= cx < THUMB_SIZE and 0 <= cy < THUMB_SIZE:
        return ImageBox(cx, cy, BODY_BOX_W, BODY_BOX_H)
    return None


# largest value below THUMB_SIZE that survives quantize() unchanged
_PX_MAX = 255.999999


def _clip_px(v: float) -> float:
    return min(max(v, 0.0), _PX_MAX)


def _conf(n: NoiseModel, rng) -> float:
    if n.conf_low == n.conf_high:
        return quantize(n.conf_low)
    return quantize(rng.uniform(n.conf_low, n.conf_high))


def _detect_box(box: ImageBox, n: NoiseModel, rng) -> Optional[PlayerDetection]:
    if n.miss_prob > 0 and rng.random() < n.miss_prob:
        return None
    cx, cy = box.cx, box.cy
    if n.pos_jitter_px > 0:
        jx, jy = rng.normal(0.0, n.pos_jitter_px, 2)
        cx, cy = _clip_px(cx + jx), _clip_px(cy + jy)
    return PlayerDetection(ImageBox(quantize(cx), quantize(cy), box.w, box.h), _conf(n, rng))


def _neighbor_boxes(central: PitchPos, neighbors, c: CameraCalib) -> list[ImageBox]:
    out = []
    for p in neighbors:
        b = pitch_to_image(c, central, p)
        if b is not None:
            out.append(b)
    return out


def simulate_player_detections(central: PitchPos, neighbors: Sequence[PitchPos],
                               c: CameraCalib, n: NoiseModel, rng) -> list[PlayerDetection]:
    """Detector output for one thumbnail, in a random order.

    The order is shuffled so a consumer cannot find the central player by
    position in the list.
    """
    boxes = [pitch_to_image(c, central, central)] + _neighbor_boxes(central, neighbors, c)
    dets = [d for d in (_detect_box(b, n, rng) for b in boxes) if d is not None]
    if n.fp_rate > 0:
        for _ in range(int(rng.poisson(n.fp_rate))):
            cx, cy = rng.uniform(0, THUMB_SIZE, 2)
            dets.append(PlayerDetection(
                ImageBox(quantize(_clip_px(cx)), quantize(_clip_px(cy))), _conf(n, rng)))
    if len(dets) > 1:
        dets = [dets[i] for i in rng.permutation(len(dets))]
    return dets


def jersey_digits(jersey: int) -> list[int]:
    return [int(ch) for ch in str(jersey)]


def simulate_digit_detections(jersey: int, central_box: ImageBox, n: NoiseModel,
                              rng) -> list[DigitDetection]:
    """Digits printed on one player's shirt, as seen by the digit detector.

    Two-digit numbers sit at -8/+8 px from the box center, one-digit numbers
    at the center.  Each digit is found with its class probability and, once
    found, misread as another digit with ``digit_swap_prob``.
    """
    if not 1 <= jersey <= 99:
        raise ContractError(f"jersey {jersey} outside [1, 99]")
    digits = jersey_digits(jersey)
    offsets = [-DIGIT_OFFSET_PX, DIGIT_OFFSET_PX] if len(digits) == 2 else [0.0]
    out = []
    for d, off in zip(digits, offsets):
        p = n.digit_detect_prob[d]
        if p < 1.0 and rng.random() >= p:
            continue
        if n.digit_swap_prob > 0 and rng.random() < n.digit_swap_prob:
            d = int((d + rng.integers(1, 10)) % 10)
        x = central_box.cx + off
        if n.pos_jitter_px > 0:
            x += rng.normal(0.0, n.pos_jitter_px)
        if not 0 <= x < THUMB_SIZE:
            continue
        out.append(DigitDetection(d, min(quantize(x), _PX_MAX), _conf(n, rng)))
    return out


def _round6(a: np.ndarray) -> np.ndarray:
    # np.round divides an exact integer by 1e6, so every value reprs in <= 6 decimals
    return np.round(a, 6)


def _px(a: np.ndarray) -> np.ndarray:
    return np.minimum(_round6(np.clip(a, 0.0, _PX_MAX)), _PX_MAX)


def _confidences(n: NoiseModel, rng, size: int) -> np.ndarray:
    if n.conf_low == n.conf_high:
        return np.full(size, float(n.conf_low))
    return _round6(rng.uniform(n.conf_low, n.conf_high, size))


def _segments(owner: np.ndarray, count: int) -> np.ndarray:
    """Start offsets of each owner's run in an owner-sorted array (length count + 1)."""
    return np.searchsorted(owner, np.arange(count + 1))


def emit_camera(gt: GroundTruth, s: Scenario, c: CameraCalib,
                strip_truth: bool = False) -> list[Thumbnail]:
    """Time-ordered thumbnail stream of one camera.

    All random variates for the camera are drawn in bulk; the per-box and
    per-digit noise follows ``simulate_player_detections`` and
    ``simulate_digit_detections`` exactly.  Within a frame thumbnails come in
    a random order, and so do the detections inside each thumbnail.
    """
    rng = camera_rng(s.seed, c.camera_id)
    n = s.noise
    pos = gt.positions                                     # (M, T, 2)
    mask = _visible_mask(c, pos)                           # (M, T)
    dropped = rng.random(len(gt.times)) < c.drop_prob      # whole frames
    frames = np.flatnonzero(mask.any(axis=0) & ~dropped)

    # one thumbnail per visible player per kept frame, shuffled within the frame
    f_idx, pid = np.nonzero(mask[:, frames].T)
    order = np.lexsort((rng.random(len(pid)), f_idx))
    tick_of = frames[f_idx[order]]
    pid = pid[order]
    n_th = len(pid)
    if n_th == 0:
        return []

    # every visible player whose box center lands inside each crop; the crop's own player first
    at = pos[:, tick_of].transpose(1, 0, 2)                # (n_th, M, 2)
    center = at[np.arange(n_th), pid]                      # (n_th, 2)
    px = THUMB_CENTER + (at - center[:, None, :]) * c.px_per_m
    inside = (mask[:, tick_of].T & (px[..., 0] >= 0) & (px[..., 0] < THUMB_SIZE)
              & (px[..., 1] >= 0) & (px[..., 1] < THUMB_SIZE))
    inside[np.arange(n_th), pid] = False
    th_i, nb = np.nonzero(inside)
    box_th = np.concatenate([np.arange(n_th), th_i])
    box_pid = np.concatenate([pid, nb])
    box_xy = np.concatenate([np.full((n_th, 2), THUMB_CENTER), px[th_i, nb]])
    first = np.argsort(box_th, kind="stable")
    box_th, box_pid, box_xy = box_th[first], box_pid[first], box_xy[first]
    n_box = len(box_th)

    # player detector: misses, center jitter, confidences, spurious boxes
    hit = rng.random(n_box) >= n.miss_prob
    det_xy = box_xy + (rng.normal(0.0, n.pos_jitter_px, (n_box, 2)) if n.pos_jitter_px > 0 else 0.0)
    det_conf = _confidences(n, rng, n_box)
    n_fp = rng.poisson(n.fp_rate, n_th) if n.fp_rate > 0 else np.zeros(n_th, dtype=int)
    fp_th = np.repeat(np.arange(n_th), n_fp)
    fp_xy = rng.uniform(0, THUMB_SIZE, (len(fp_th), 2))
    fp_conf = _confidences(n, rng, len(fp_th))
    d_th = np.concatenate([box_th[hit], fp_th])
    d_xy = _px(np.concatenate([det_xy[hit], fp_xy]))
    d_conf = np.concatenate([det_conf[hit], fp_conf])
    d_order = np.lexsort((rng.random(len(d_th)), d_th))
    d_th, d_xy, d_conf = d_th[d_order], d_xy[d_order], d_conf[d_order]

    # digit detector: each printed digit of every in-crop shirt
    jerseys = np.asarray(gt.jerseys)[box_pid]
    two = jerseys >= 10
    g_box = np.concatenate([np.flatnonzero(two), np.flatnonzero(two), np.flatnonzero(~two)])
    g_digit = np.concatenate([jerseys[two] // 10, jerseys[two] % 10, jerseys[~two]])
    g_off = np.concatenate([np.full(two.sum(), -DIGIT_OFFSET_PX), np.full(two.sum(), DIGIT_OFFSET_PX),
                            np.zeros((~two).sum())])
    n_dig = len(g_box)
    p_detect = np.array([n.digit_detect_prob[d] for d in range(10)])[g_digit]
    found = rng.random(n_dig) < p_detect
    swap = rng.random(n_dig) < n.digit_swap_prob
    g_digit = np.where(swap, (g_digit + rng.integers(1, 10, n_dig)) % 10, g_digit)
    g_x = box_xy[g_box, 0] + g_off
    if n.pos_jitter_px > 0:
        g_x = g_x + rng.normal(0.0, n.pos_jitter_px, n_dig)
    g_conf = _confidences(n, rng, n_dig)
    keep = found & (g_x >= 0) & (g_x < THUMB_SIZE)
    g_th = box_th[g_box][keep]
    g_digit, g_x, g_conf = g_digit[keep], np.minimum(_round6(g_x[keep]), _PX_MAX), g_conf[keep]
    g_order = np.lexsort((rng.random(len(g_th)), g_th))
    g_th, g_digit, g_x, g_conf = g_th[g_order], g_digit[g_order], g_x[g_order], g_conf[g_order]

    # assemble immutable records
    d_seg = _segments(d_th, n_th).tolist()
    g_seg = _segments(g_th, n_th).tolist()
    dets = [PlayerDetection(ImageBox(x, y, BODY_BOX_W, BODY_BOX_H), cf)
            for (x, y), cf in zip(d_xy.tolist(), d_conf.tolist())]
    digits = [DigitDetection(d, x, cf) for d, x, cf in zip(g_digit.tolist(), g_x.tolist(), g_conf.tolist())]
    anchors = _round6(center).tolist()
    times = gt.times[tick_of].tolist()
    pids = pid.tolist()
    cam = c.camera_id
    return [
        Thumbnail(cam, times[i], tuple(dets[d_seg[i]:d_seg[i + 1]]), tuple(digits[g_seg[i]:g_seg[i + 1]]),
                  PitchPos(*anchors[i]), None if strip_truth else pids[i])
        for i in range(n_th)
    ]


def emit_thumbnails(gt: GroundTruth, s: Scenario, strip_truth: bool = False,
                    workers: int = 1) -> dict[str, list[Thumbnail]]:
    """Per-camera thumbnail streams, keyed by camera id in scenario order."""
    if workers > 1 and len(s.cameras) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            streams = list(ex.map(lambda c: emit_camera(gt, s, c, strip_truth), s.cameras))
    else:
        streams = [emit_camera(gt, s, c, strip_truth) for c in s.cameras]
    return {c.camera_id: st for c, st in zip(s.cameras, streams)}


def strip_truth(stream: Sequence[Thumbnail]) -> list[Thumbnail]:
    from dataclasses import replace
    return [replace(th, truth_player_id=None) for th in stream]
