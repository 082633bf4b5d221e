from __future__ import annotations

from dataclasses import replace

import pytest

from tracklet_fuse.model import (
    CameraCalib, DigitDetection, ImageBox, NoiseModel, PitchPos, PlayerDetection, Scenario, Thumbnail,
)


def quad_cameras(width=105.0, height=68.0, overlap=10.0, drop_prob=0.0):
    """Four cameras, one per pitch quadrant, overlapping by ``overlap`` meters."""
    mx, my = width / 2, height / 2
    regions = {
        "A": (0.0, 0.0, mx + overlap, my + overlap),
        "B": (mx - overlap, 0.0, width, my + overlap),
        "C": (0.0, my - overlap, mx + overlap, height),
        "D": (mx - overlap, my - overlap, width, height),
    }
    return tuple(CameraCalib(k, r, drop_prob=drop_prob) for k, r in regions.items())


def small_scenario(seed=0, n_players=6, duration=20000, noise=None, drop_prob=0.0):
    jerseys = tuple(range(10, 10 + n_players))
    return Scenario(duration=duration, n_players=n_players, jersey_numbers=jerseys,
                    cameras=quad_cameras(drop_prob=drop_prob),
                    noise=noise if noise is not None else NoiseModel(), seed=seed)


def thumb(t=0, centers=((128.0, 128.0),), digits=(), camera="A", anchor=(50.0, 30.0), truth=None):
    dets = tuple(PlayerDetection(ImageBox(cx, cy), 0.9) for cx, cy in centers)
    digs = tuple(DigitDetection(d, x, c) for d, x, c in digits)
    return Thumbnail(camera, t, dets, digs, PitchPos(*anchor), truth)


@pytest.fixture
def noiseless():
    return NoiseModel.noiseless()


@pytest.fixture
def tiny_scenario():
    return small_scenario()


def with_drop(s: Scenario, p: float) -> Scenario:
    return replace(s, cameras=tuple(replace(c, drop_prob=p) for c in s.cameras))
