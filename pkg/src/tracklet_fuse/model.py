"""
Shared domain types for the thumbnail pipeline.

Time is integer milliseconds since kick-off. Intervals are half-open
``[start, end)`` so consecutive camera appearances never touch-overlap.
Pixel coordinates refer to the fixed 256x256 thumbnail frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

THUMB_SIZE = 256
THUMB_CENTER = THUMB_SIZE / 2
BODY_BOX_W = 20.0
BODY_BOX_H = 50.0

# Class-wise digit detector mAP, reused as per-digit detection probability.
TABLE1_DIGIT_MAP = {
    0: 0.57, 1: 0.57, 2: 0.68, 3: 0.61, 4: 0.30,
    5: 0.58, 6: 0.47, 7: 0.31, 8: 0.29, 9: 0.51,
}


class ContractError(ValueError):
    """Raised when an operation is called with its precondition violated."""


@dataclass(frozen=True)
class Interval:
    """Half-open time interval ``[start, end)`` in milliseconds."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0:
            raise ContractError(f"interval start {self.start} < 0")
        if not self.start < self.end:
            raise ContractError(f"empty interval [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start

    def contains(self, t: int) -> bool:
        return self.start <= t < self.end


class PitchPos(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class ImageBox:
    cx: float
    cy: float
    w: float = BODY_BOX_W
    h: float = BODY_BOX_H

    def __post_init__(self):
        if not (0 <= self.cx < THUMB_SIZE and 0 <= self.cy < THUMB_SIZE):
            raise ContractError(f"box center ({self.cx}, {self.cy}) outside thumbnail")
        if self.w <= 0 or self.h <= 0:
            raise ContractError("box width and height must be positive")

    def contains_x(self, x: float) -> bool:
        return abs(x - self.cx) <= self.w / 2


@dataclass(frozen=True)
class PlayerDetection:
    box: ImageBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class DigitDetection:
    digit: int
    x: float
    confidence: float

    def __post_init__(self):
        if self.digit not in range(10):
            raise ContractError(f"digit {self.digit} outside 0-9")
        if not 0 <= self.x < THUMB_SIZE:
            raise ContractError(f"digit x {self.x} outside thumbnail")
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Thumbnail:
    """One 256x256 crop from one camera, centered on one (unknown) player.

    ``anchor`` is the pitch position the crop was centered on; calibrated
    consumers use it to lift pixel detections back to pitch meters.
    """

    camera_id: str
    t: int
    player_detections: tuple[PlayerDetection, ...]
    digit_detections: tuple[DigitDetection, ...]
    anchor: PitchPos
    truth_player_id: Optional[int] = None


class TrackletEntry(NamedTuple):
    t: int
    thumbnail: Thumbnail
    det_index: int


@dataclass(frozen=True)
class Tracklet:
    """Time-ordered chain of thumbnails from one camera attributed to one player."""

    camera_id: str
    entries: tuple[TrackletEntry, ...]
    tick: int = 100

    def __post_init__(self):
        if not self.entries:
            raise ContractError("tracklet needs at least one entry")
        for a, b in zip(self.entries, self.entries[1:]):
            if not a.t < b.t:
                raise ContractError("tracklet entries must be strictly increasing in time")
        for e in self.entries:
            if e.thumbnail.camera_id != self.camera_id:
                raise ContractError("tracklet mixes cameras")

    @property
    def span(self) -> Interval:
        return Interval(self.entries[0].t, self.entries[-1].t + self.tick)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class NumberVerdict:
    outcome: Optional[int]
    confidence: float
    total_conflict: float

    @property
    def abstained(self) -> bool:
        return self.outcome is None


@dataclass(frozen=True)
class GlobalTrack:
    track_id: int
    tracklets: tuple[Tracklet, ...]
    number_verdict: Optional[NumberVerdict] = None

    def __post_init__(self):
        by_cam: dict[str, list[Interval]] = {}
        for tl in self.tracklets:
            for other in by_cam.get(tl.camera_id, []):
                if interval_overlap(other, tl.span) is not None:
                    raise ContractError(
                        f"track {self.track_id}: overlapping tracklets on camera {tl.camera_id}")
            by_cam.setdefault(tl.camera_id, []).append(tl.span)

    def entries(self) -> list[TrackletEntry]:
        """All member entries ordered by time, then camera id."""
        out = [e for tl in self.tracklets for e in tl.entries]
        out.sort(key=lambda e: (e.t, e.thumbnail.camera_id))
        return out


@dataclass(frozen=True)
class CameraCalib:
    """Flat camera: an axis-aligned pitch rectangle seen at a fixed px/m scale.

    ``region`` is ``(x0, y0, x1, y1)`` in meters, min edges inclusive.
    """

    camera_id: str
    region: tuple[float, float, float, float]
    px_per_m: float = 10.0
    drop_prob: float = 0.0


@dataclass(frozen=True)
class NoiseModel:
    pos_jitter_px: float = 2.0
    miss_prob: float = 0.05
    fp_rate: float = 0.05
    digit_detect_prob: dict = field(default_factory=lambda: dict(TABLE1_DIGIT_MAP))
    digit_swap_prob: float = 0.05
    conf_low: float = 0.5
    conf_high: float = 1.0

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        """Every visible player and digit detected exactly, at confidence 1."""
        return cls(pos_jitter_px=0.0, miss_prob=0.0, fp_rate=0.0,
                   digit_detect_prob={d: 1.0 for d in range(10)},
                   digit_swap_prob=0.0, conf_low=1.0, conf_high=1.0)

    def __hash__(self):
        return hash((self.pos_jitter_px, self.miss_prob, self.fp_rate,
                     tuple(sorted(self.digit_detect_prob.items())),
                     self.digit_swap_prob, self.conf_low, self.conf_high))


@dataclass(frozen=True)
class MotionModel:
    """Waypoint motion: straight legs at a uniform random speed, with a
    short dwell at each waypoint before the next leg starts."""

    speed_min_mps: float = 1.0
    speed_max_mps: float = 8.0
    dwell_min_ms: int = 100
    dwell_max_ms: int = 1000


@dataclass(frozen=True)
class Scenario:
    duration: int
    n_players: int
    jersey_numbers: tuple[int, ...]
    cameras: tuple[CameraCalib, ...]
    pitch_width: float = 105.0
    pitch_height: float = 68.0
    tick: int = 100
    noise: NoiseModel = field(default_factory=NoiseModel)
    motion: MotionModel = field(default_factory=MotionModel)
    seed: int = 0

    @property
    def n_ticks(self) -> int:
        return self.duration // self.tick if self.tick > 0 else 0

    def camera(self, camera_id: str) -> CameraCalib:
        for c in self.cameras:
            if c.camera_id == camera_id:
                return c
        raise KeyError(camera_id)


# -- interval algebra ---------------------------------------------------------

def interval_overlap(a: Interval, b: Interval) -> Optional[Interval]:
    start, end = max(a.start, b.start), min(a.end, b.end)
    if start < end:
        return Interval(start, end)
    return None


def covered_duration(intervals: Iterable[Interval]) -> int:
    """Length of the union of ``intervals``; overlaps count once."""
    total = 0
    cur_start = cur_end = None
    for iv in sorted(intervals, key=lambda i: (i.start, i.end)):
        if cur_end is None or iv.start > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = iv.start, iv.end
        else:
            cur_end = max(cur_end, iv.end)
    if cur_end is not None:
        total += cur_end - cur_start
    return total


def runs_to_intervals(times: Sequence[int], mask: Sequence[bool], tick: int) -> list[Interval]:
    """Maximal runs of True in ``mask`` as half-open intervals over ``times``."""
    out = []
    start = None
    for t, m in zip(times, mask):
        if m and start is None:
            start = t
        elif not m and start is not None:
            out.append(Interval(start, t))
            start = None
    if start is not None:
        out.append(Interval(start, times[-1] + tick))
    return out


# -- scenario validation ------------------------------------------------------

def _prob(v, closed_top=True) -> bool:
    return 0.0 <= v <= 1.0 if closed_top else 0.0 <= v < 1.0


def validate_scenario(s: Scenario) -> list[str]:
    """Every violated scenario invariant as ``"path: message"``; empty means ok."""
    v = []
    if s.tick <= 0:
        v.append("tick: tick > 0")
    if s.duration <= 0:
        v.append("duration: duration > 0")
    elif s.tick > 0 and s.duration < s.tick:
        v.append("duration: duration >= tick")
    if not 0 <= s.seed < 2 ** 64:
        v.append("seed: seed is a 64-bit unsigned integer")
    if s.n_players < 1:
        v.append("n_players: n_players >= 1")
    if s.n_players != len(s.jersey_numbers):
        v.append("n_players: n_players = |jersey_numbers|")
    if len(set(s.jersey_numbers)) != len(s.jersey_numbers):
        v.append("jersey_numbers: jersey_numbers distinct")
    for i, n in enumerate(s.jersey_numbers):
        if not 1 <= n <= 99:
            v.append(f"jersey_numbers[{i}]: jersey number in [1, 99]")
    if not (s.pitch_width > 0 and s.pitch_height > 0):
        v.append("pitch: pitch dimensions > 0")
    if len(s.cameras) < 1:
        v.append("cameras: cameras >= 1")
    ids = [c.camera_id for c in s.cameras]
    if len(set(ids)) != len(ids):
        v.append("cameras: camera_id distinct")
    for i, c in enumerate(s.cameras):
        path = f"cameras[{i}]"
        x0, y0, x1, y1 = c.region
        if not (x1 > x0 and y1 > y0):
            v.append(f"{path}.region: region area > 0")
        if x0 < 0 or y0 < 0 or x1 > s.pitch_width or y1 > s.pitch_height:
            v.append(f"{path}.region: region within pitch")
        if c.px_per_m <= 0:
            v.append(f"{path}.px_per_m: px_per_m > 0")
        if not _prob(c.drop_prob, closed_top=False):
            v.append(f"{path}.drop_prob: drop_prob in [0, 1)")
    n = s.noise
    for name in ("miss_prob", "digit_swap_prob"):
        if not _prob(getattr(n, name)):
            v.append(f"noise.{name}: probability in [0, 1]")
    if n.pos_jitter_px < 0:
        v.append("noise.pos_jitter_px: pos_jitter_px >= 0")
    if n.fp_rate < 0:
        v.append("noise.fp_rate: fp_rate >= 0")
    if sorted(n.digit_detect_prob) != list(range(10)):
        v.append("noise.digit_detect_prob: one probability per digit 0-9")
    for d, p in sorted(n.digit_detect_prob.items()):
        if not _prob(p):
            v.append(f"noise.digit_detect_prob[{d}]: probability in [0, 1]")
    if not (0.0 <= n.conf_low <= n.conf_high <= 1.0):
        v.append("noise.conf_low: 0 <= conf_low <= conf_high <= 1")
    m = s.motion
    if not 0 <= m.speed_min_mps <= m.speed_max_mps:
        v.append("motion.speed_min_mps: 0 <= speed_min_mps <= speed_max_mps")
    if not 0 <= m.dwell_min_ms <= m.dwell_max_ms:
        v.append("motion.dwell_min_ms: 0 <= dwell_min_ms <= dwell_max_ms")
    return v
