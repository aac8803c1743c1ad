"""A one-minute PPO smoke run on the biped.

Trains a deliberately tiny configuration (8 envs, ~100k steps would be a
real run; this does 40k) just to show the training loop end to end:
metrics CSV, checkpoints, and resuming. For the real desk-scale run use

    striderl train --out runs/desk --set train.total_steps=5000000 \
        --set train.num_envs=256 --progress
"""

import os
import tempfile

import numpy as np

from striderl.configs import merge_section
from striderl.ppo import load_checkpoint, train

sections = {k: merge_section(k, None) for k in ("model", "env", "rewards", "train")}
sections["train"].update(num_envs=16, rollout_steps=64, minibatches=8,
                         total_steps=40_960, seed=7)

out_dir = tempfile.mkdtemp(prefix="striderl_smoke_")
summary = train(sections, out_dir=out_dir, progress=True)
print(f"\ntrained {summary['env_steps']} steps in {summary['updates']} updates")
print(f"mean return {summary['mean_return']:.1f}, mean episode length {summary['mean_ep_len']:.0f}")
print(f"metrics: {summary['metrics_csv']}")

ts = load_checkpoint(summary["checkpoints"][-1])
print(f"\nreloaded checkpoint: update {ts.updates}, env steps {ts.env_steps}")
print(f"policy log-std: {np.round(ts.clamped_log_std(), 3)}")
print(f"artifacts kept in {out_dir}")
