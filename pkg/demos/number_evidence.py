"""
Reading a shirt number from many noisy crops
============================================

One crop rarely settles a player's number: a digit may be missed, misread,
or belong to a bystander.  Each crop is turned into a small mass function
and the crops of one track are combined with Dempster's rule.
"""

import numpy as np

from tracklet_fuse import fusion, sim
from tracklet_fuse.evaluate import monte_carlo_number_accuracy
from tracklet_fuse.model import ImageBox, NoiseModel

# A single clean crop of number 23: both digits seen, so the evidence points
# straight at {23}, discounted by detector confidence and the 0.9 reliability.
box = ImageBox(128.0, 128.0)
rng = np.random.default_rng(3)
digits = sim.simulate_digit_detections(23, box, NoiseModel(), rng)
print("digits in crop:", [(d.digit, round(d.x, 1), round(d.confidence, 2)) for d in digits])
m = fusion.evidence_from_thumbnail(digits, box)
print("mass function:", m)

# Twenty crops of the same player, fused one after the other.
crops = [fusion.evidence_from_thumbnail(sim.simulate_digit_detections(23, box, NoiseModel(), rng), box)
         for _ in range(20)]
crops = [c for c in crops if not c.is_vacuous]
fused, conflict = fusion.combine_all(crops)
verdict = fusion.decide_number(fused, total_conflict=conflict)
print(f"\n{len(crops)} informative crops -> number {verdict.outcome}, "
      f"BetP {verdict.confidence:.3f}, conflict {verdict.total_conflict:.3f}")

# Accuracy and decision rate as the track grows.
print("\ncrops  decided  accuracy")
for n in (1, 2, 5, 10, 20):
    r = monte_carlo_number_accuracy(NoiseModel(), n, 1000, seed=n)
    acc = "  n/a " if r.accuracy is None else f"{r.accuracy:.3f}"
    print(f"{n:5d}  {r.decided / r.trials:7.3f}  {acc}")
