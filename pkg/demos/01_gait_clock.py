"""The periodic gait clock: segments, clock signal, stance indicators.

Walks through one stepping cycle of the default schedule (0.35 s double
support, 0.75 s single support, 2.2 s period) and plots the pieces the
policy and rewards consume. Writes gait_clock.png next to this script.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from striderl.gait import GaitSchedule, Segment, clock_signal, phase_at, stance_coefficients

schedule = GaitSchedule()
print(f"cycle period: {schedule.cycle_period():.2f} s")
print(f"segment boundaries (cycle fraction): {[round(b, 4) for b in schedule.boundaries()]}")

for t in (0.0, 0.2, 0.725, 1.1, 1.5, 2.0, 2.2):
    seg, phi = phase_at(schedule, t)
    left, right = stance_coefficients(schedule, t)
    print(f"t={t:4.2f}s  {Segment(seg).name:<16} phi={phi:.3f}  left={left:+d} right={right:+d}")

t = np.linspace(0.0, 2 * schedule.cycle_period(), 2000)
clock = clock_signal(schedule, t)
coeffs = stance_coefficients(schedule, t)

fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
axes[0].plot(t, clock[:, 0], label="sin")
axes[0].plot(t, clock[:, 1], label="cos")
axes[0].set_ylabel("clock signal")
axes[0].legend()
axes[1].step(t, coeffs[:, 0], where="post")
axes[1].set_ylabel("left stance indicator")
axes[1].set_ylim(-1.3, 1.3)
axes[2].step(t, coeffs[:, 1], where="post", color="tab:orange")
axes[2].set_ylabel("right stance indicator")
axes[2].set_xlabel("time [s]")
out = os.path.join(os.path.dirname(__file__), "gait_clock.png")
fig.savefig(out, dpi=110, bbox_inches="tight")
print(f"wrote {out}")
