"""
Multi-camera player tracking from thumbnail streams, with shirt-number
identification by Dempster-Shafer evidence fusion.

Stages: ``sim`` (seeded match and detector simulation), ``tracking``
(per-camera tracklets), ``stitch`` (cross-camera global tracks), ``fusion``
(shirt numbers), ``evaluate`` (ground-truth metrics and oracles), and
``pipeline``/``cli`` tying them to files.
"""

__version__ = "0.1.0"
