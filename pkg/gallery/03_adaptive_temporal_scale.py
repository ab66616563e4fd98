"""Adaptive temporal scale follows the speed of the motion.

A slender capsule swings sideways. Played at double speed, each frame
covers twice the motion, so the selected half-window should halve. The
profile A(tau) for one point is printed at both speeds.

Run: python3 gallery/03_adaptive_temporal_scale.py
"""

import numpy as np

from hopc import SynthScenario, adaptive_temporal_scale, synth_generate
from hopc import _engine

P = 96
slow = synth_generate(SynthScenario("oscillating-blob", duration=2 * P, period=P))
fast = synth_generate(SynthScenario("oscillating-blob", duration=P, period=P, speed=2.0))

i = 20                          # frame of the fast sequence
p = fast.frames[i - 1].points[0]  # same point sits in slow frame 2i-1
for name, seq, t, dmax in (("1x", slow, 2 * i - 1, 12), ("2x", fast, i, 6)):
    prof = _engine.temporal_profile(_engine.SequenceIndex(seq, 1.0), p[None], t, 1.0, dmax)[0]
    tau = adaptive_temporal_scale(seq, p, t, 1.0, dmax)
    print(f"{name}: A(tau) = {np.round(prof, 3).tolist()}")
    print(f"    selected tau = {tau}\n")
