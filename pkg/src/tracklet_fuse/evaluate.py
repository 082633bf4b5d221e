"""
Ground-truth metrics for every stage, and independent oracles.

Simulated thumbnails carry the id of the player they were cropped around,
so every metric here is an exact lookup; no spatial matching is involved.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from . import fusion
from .assignment import Assignment
from .model import GlobalTrack, ImageBox, NoiseModel, NumberVerdict, Tracklet
from .sim import GroundTruth, simulate_digit_detections


class MissingTruth(LookupError):
    pass


class DimensionTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class TrackingMetrics:
    purity: float
    id_switches: int
    fragmentation: float
    coverage: float
    n_tracks: int


Track = Union[GlobalTrack, Tracklet]


def _entries(track: Track):
    return track.entries() if isinstance(track, GlobalTrack) else track.entries


def _truth(e) -> int:
    pid = e.thumbnail.truth_player_id
    if pid is None:
        raise MissingTruth(f"thumbnail at t={e.t} on {e.thumbnail.camera_id} has no truth id")
    return pid


def track_truth(track: Track) -> int:
    """Majority truth id of a track (lowest id on ties)."""
    counts = Counter(_truth(e) for e in _entries(track))
    top = max(counts.values())
    return min(pid for pid, c in counts.items() if c == top)


def compute_tracking_metrics(tracks: Sequence[Track], gt: GroundTruth) -> TrackingMetrics:
    purities = []
    switches = 0
    tracks_per_player: Counter = Counter()
    captured = set()
    for tr in tracks:
        ids = [_truth(e) for e in _entries(tr)]
        counts = Counter(ids)
        purities.append(max(counts.values()) / len(ids))
        switches += sum(1 for a, b in zip(ids, ids[1:]) if a != b)
        tracks_per_player.update(counts.keys())
        for e, pid in zip(_entries(tr), ids):
            captured.add((pid, e.thumbnail.camera_id, e.t))
    visible = 0
    hit = 0
    for (pid, cam), ivs in gt.visibility.items():
        for iv in ivs:
            visible += iv.length // gt.tick
    for pid, cam, t in captured:
        if gt.visibility.covers(pid, cam, t):
            hit += 1
    return TrackingMetrics(
        purity=math.fsum(purities) / len(purities) if purities else 0.0,
        id_switches=switches,
        fragmentation=float(np.mean(list(tracks_per_player.values()))) if tracks_per_player else 0.0,
        coverage=hit / visible if visible else 0.0,
        n_tracks=len(tracks),
    )


def number_id_accuracy(tracks: Sequence[GlobalTrack], gt: GroundTruth,
                       verdicts: Optional[Sequence[NumberVerdict]] = None):
    """``(accuracy over decided tracks or None, abstain rate)``."""
    if verdicts is None:
        verdicts = [g.number_verdict for g in tracks]
    decided = correct = abstained = 0
    for tr, v in zip(tracks, verdicts):
        if v is None or v.outcome is None:
            abstained += 1
            continue
        decided += 1
        correct += v.outcome == gt.jersey_of(track_truth(tr))
    accuracy = correct / decided if decided else None
    return accuracy, (abstained / len(tracks) if len(tracks) else 0.0)


# -- assignment oracle ----------------------------------------------------------

MAX_ORACLE_DIM = 8


def brute_force_assignment(cost, new_track_cost: Optional[float] = None) -> Assignment:
    """Exhaustive optimum over every partial matching that avoids infeasible cells.

    Enumeration runs row by row over the set of columns already used, so each
    (row, used-columns) subproblem is solved once.  Objective and tie-break
    rules are those of ``solve_assignment``.
    """
    c = np.asarray(cost, dtype=float)
    n, m = c.shape
    if n > MAX_ORACLE_DIM or m > MAX_ORACLE_DIM:
        raise DimensionTooLarge(f"{n}x{m} exceeds {MAX_ORACLE_DIM}x{MAX_ORACLE_DIM}")
    cells = c.tolist()

    def terminal(mask):
        unmatched = m - bin(mask).count("1")
        if new_track_cost is None:
            return (unmatched, 0.0)
        return (0, new_track_cost * unmatched)

    def options(i, mask):
        for k in range(m):
            if not mask >> k & 1 and math.isfinite(cells[i][k]):
                yield k
        yield None

    @lru_cache(maxsize=None)
    def best(i, mask):
        if i == n:
            return terminal(mask)
        out = None
        for k in options(i, mask):
            if k is None:
                v = best(i + 1, mask)
            else:
                u, s = best(i + 1, mask | 1 << k)
                v = (u, cells[i][k] + s)
            if out is None or v < out:
                out = v
        return out

    pairs = {}
    mask = 0
    for i in range(n):
        target = best(i, mask)
        for k in options(i, mask):
            if k is None:
                if best(i + 1, mask) == target:
                    break
            else:
                u, s = best(i + 1, mask | 1 << k)
                if (u, cells[i][k] + s) == target:
                    pairs[i] = k
                    mask |= 1 << k
                    break
    matched = math.fsum(cells[r][k] for r, k in pairs.items())
    return Assignment(pairs, matched, m - len(pairs))


def enumerate_matchings(n: int, m: int):
    """Every partial injective row->column mapping, as dicts (small n, m only)."""
    def rec(i, used):
        if i == n:
            yield {}
            return
        yield from rec(i + 1, used)
        for k in range(m):
            if k not in used:
                for rest in rec(i + 1, used | {k}):
                    yield {i: k, **rest}
    yield from rec(0, frozenset())


# -- aggregation benefit ----------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloResult:
    accuracy: Optional[float]
    stderr: Optional[float]
    decided: int
    trials: int


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, trial)))


def monte_carlo_number_accuracy(noise: NoiseModel, n_thumbnails: int, trials: int, seed: int,
                                discount: float = fusion.DEFAULT_DISCOUNT,
                                threshold: float = fusion.DEFAULT_THRESHOLD) -> MonteCarloResult:
    """Accuracy of the fused verdict over tracks of ``n_thumbnails`` crops.

    Each trial draws a shirt number uniformly from 1..99, simulates the digit
    detector on ``n_thumbnails`` crops of that player, fuses the evidence and
    scores the verdict.  Accuracy is over decided trials; the standard error
    is the binomial one.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    box = ImageBox(128.0, 128.0)
    decided = correct = 0
    for k in range(trials):
        rng = trial_rng(seed, k)
        jersey = int(rng.integers(1, 100))
        ev = [fusion.evidence_from_thumbnail(simulate_digit_detections(jersey, box, noise, rng), box, discount)
              for _ in range(n_thumbnails)]
        ev = [m for m in ev if not m.is_vacuous]
        if not ev:
            continue
        try:
            mass, kk = fusion.combine_all(ev)
        except fusion.TotalConflict:
            continue
        v = fusion.decide_number(mass, threshold, kk)
        if v.outcome is None:
            continue
        decided += 1
        correct += v.outcome == jersey
    if not decided:
        return MonteCarloResult(None, None, 0, trials)
    acc = correct / decided
    return MonteCarloResult(acc, math.sqrt(acc * (1 - acc) / decided), decided, trials)


def metric_rows(m: TrackingMetrics) -> list[tuple[str, object]]:
    return [("purity", m.purity), ("id_switches", m.id_switches),
            ("fragmentation", m.fragmentation), ("coverage", m.coverage), ("n_tracks", m.n_tracks)]
