"""
A two-minute match, end to end
==============================

Simulate 22 players under four overlapping cameras, build per-camera
tracklets, stitch them across cameras and name each global track.
"""

from collections import Counter

from tracklet_fuse import sim
from tracklet_fuse.evaluate import compute_tracking_metrics, number_id_accuracy, track_truth
from tracklet_fuse.model import CameraCalib, Scenario
from tracklet_fuse.stitch import stitch
from tracklet_fuse.tracking import TrackerParams, TrackStats, build_tracklets

cameras = (
    CameraCalib("A", (0.0, 0.0, 62.5, 44.0), drop_prob=0.05),
    CameraCalib("B", (42.5, 0.0, 105.0, 44.0), drop_prob=0.05),
    CameraCalib("C", (0.0, 24.0, 62.5, 68.0), drop_prob=0.05),
    CameraCalib("D", (42.5, 24.0, 105.0, 68.0), drop_prob=0.05),
)
jerseys = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 14, 17, 20, 23, 27, 33, 44, 55, 66, 77, 99)
s = Scenario(duration=120_000, n_players=22, jersey_numbers=jerseys, cameras=cameras, seed=7)

gt = sim.generate_ground_truth(s)
streams = sim.emit_thumbnails(gt, s)
for c in cameras:
    print(f"camera {c.camera_id}: {len(streams[c.camera_id]):6d} thumbnails, "
          f"{gt.visibility.camera_count(c.camera_id)} visibility intervals")

tracklets = []
for c in cameras:
    stats = TrackStats()
    tracklets += build_tracklets(streams[c.camera_id], c, TrackerParams(), s.tick, stats)
    print(f"camera {c.camera_id}: {stats}")

tracks = stitch(tracklets, {c.camera_id: c for c in cameras})
m = compute_tracking_metrics(tracks, gt)
print(f"\n{len(tracklets)} tracklets -> {len(tracks)} global tracks")
print(f"purity {m.purity:.3f}  id switches {m.id_switches}  "
      f"fragmentation {m.fragmentation:.2f}  coverage {m.coverage:.3f}")

accuracy, abstain = number_id_accuracy(tracks, gt)
print(f"number accuracy {accuracy:.3f} on decided tracks, abstention {abstain:.3f}")

# Split the verdicts by the majority player's shirt.  A lone digit only says
# "the number contains d", so one-digit shirts are hard to name on their own.
tally = {"one digit": Counter(), "two digits": Counter()}
for g in tracks:
    jersey = gt.jersey_of(track_truth(g))
    said = g.number_verdict.outcome
    kind = "one digit" if jersey < 10 else "two digits"
    tally[kind]["abstained" if said is None else "right" if said == jersey else "wrong"] += 1
for kind, c in tally.items():
    print(f"{kind:10s} shirts: {c['right']:4d} right  {c['wrong']:4d} wrong  {c['abstained']:4d} abstained")
