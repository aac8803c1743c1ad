"""Standing on two feet: the simulator holding the default pose.

Runs the PD-controlled biped for five seconds, gives it a sideways shove
halfway through, and plots base height, tilt, and total vertical contact
force against the robot's weight. Writes standing.png.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from striderl.dynamics import default_state, step_dynamics
from striderl.model import default_biped
from striderl.spatial import euler_zyx_from_quat

model = default_biped()
print(f"total mass: {model.total_mass:.1f} kg, standing height: {model.standing_base_height():.3f} m")
print(f"derived kp per joint: {model.gains.kp[:6].round(0)}")

state = default_state(model, 1)
weight = model.total_mass * model.gravity
history = []
for step in range(250):  # 5 s at 50 Hz control, 20 substeps of 1 ms
    if step == 125:
        state.base_linvel[0, 1] = 0.3
        print("shove: 0.3 m/s sideways at t=2.5s")
    state, report, tau = step_dynamics(model, state, model.q_default, 1e-3, n_substeps=20)
    roll, pitch, _ = euler_zyx_from_quat(state.base_quat)
    history.append([state.time[0], state.base_pos[0, 2], max(abs(roll[0]), abs(pitch[0])),
                    report.fz.sum()])
history = np.array(history)

print(f"final base height: {history[-1, 1]:.4f} m; tilt: {history[-1, 2]:.4f} rad")
print(f"contact force / weight: {history[-1, 3] / weight:.4f}")

fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
axes[0].plot(history[:, 0], history[:, 1])
axes[0].set_ylabel("base height [m]")
axes[1].plot(history[:, 0], history[:, 2])
axes[1].set_ylabel("tilt [rad]")
axes[2].plot(history[:, 0], history[:, 3])
axes[2].axhline(weight, ls="--", c="k", label="weight")
axes[2].set_ylabel("sum Fz [N]")
axes[2].set_xlabel("time [s]")
axes[2].legend()
out = os.path.join(os.path.dirname(__file__), "standing.png")
fig.savefig(out, dpi=110, bbox_inches="tight")
print(f"wrote {out}")
