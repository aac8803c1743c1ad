"""Deterministic evaluation of a checkpoint over a command grid, plus the
trajectory-log replay check.

Pass a checkpoint path as the first argument; otherwise this trains a
quick throwaway policy first. The replay step re-computes the 17 reward
terms from the logged states and verifies they match what was logged.
"""

import os
import sys
import tempfile

from striderl.configs import merge_section
from striderl.ppo import train
from striderl.runtime import evaluate, replay

if len(sys.argv) > 1:
    checkpoint = sys.argv[1]
else:
    print("no checkpoint given; training a 30-second throwaway policy")
    sections = {k: merge_section(k, None) for k in ("model", "env", "rewards", "train")}
    sections["train"].update(num_envs=16, rollout_steps=32, minibatches=8,
                             total_steps=10_240, seed=1)
    out = tempfile.mkdtemp(prefix="striderl_eval_demo_")
    checkpoint = train(sections, out_dir=out)["checkpoints"][-1]

work = tempfile.mkdtemp(prefix="striderl_eval_")
grid = [(0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 0.5)]
report = evaluate(checkpoint, grid, episodes_per_cell=2, seed=0, traj_dir=work)
report.write_csv(os.path.join(work, "eval_report.csv"))

print(f"\n{'command':<22} {'ep len':>7} {'fall':>5} {'lin err':>8} {'adherence':>9}")
for row in report.rows:
    cmd = f"({row['cmd_vx']:.1f},{row['cmd_vy']:.1f},{row['cmd_wz']:.1f})"
    print(f"{cmd:<22} {row['mean_ep_len']:>7.0f} {row['fall_rate']:>5.2f} "
          f"{row['lin_vel_err']:>8.3f} {row['gait_adherence']:>9.3f}")

log = os.path.join(work, "cell_00.traj")
deviations = replay(log)
print(f"\nreplay of {log}")
print(f"worst per-term deviation from the logged breakdown: {max(deviations.values()):.2e}")
print(f"report and logs in {work}")
