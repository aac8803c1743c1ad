"""Environment stepping throughput measurement.

Steps a batch of environments under small random actions and reports
aggregate env-steps per second. Optional process fan-out splits the batch
across workers, each stepping its share independently (no lockstep needed
for a throughput number); the aggregate rate uses the slowest worker's
wall time so it never overstates.
"""

from __future__ import annotations

import multiprocessing as mp
import time

import numpy as np

__all__ = ["run_bench"]


def _worker(num_envs: int, steps: int, seed: int, queue) -> None:
    from .env import LocomotionEnv

    env = LocomotionEnv(num_envs=num_envs, seed=seed)
    env.reset()
    rng = np.random.default_rng(seed)
    actions = rng.uniform(-0.5, 0.5, (steps, num_envs, env.action_dim))
    env.step(actions[0])  # warm the compiled kernel before timing
    t0 = time.perf_counter()
    for t in range(steps):
        env.step(actions[t])
    elapsed = time.perf_counter() - t0
    queue.put((num_envs * steps, elapsed))


def run_bench(num_envs: int = 1024, steps: int = 200, workers: int = 1, seed: int = 0) -> dict:
    """Measure stepping throughput; returns the numbers it printed."""
    if workers <= 1:
        queue_cls = type("Q", (), {"put": lambda self, v: setattr(self, "v", v)})
        q = queue_cls()
        _worker(num_envs, steps, seed, q)
        total_steps, elapsed = q.v
        per_worker = [elapsed]
    else:
        ctx = mp.get_context("spawn")
        q = ctx.Queue()
        share = num_envs // workers
        counts = [share] * workers
        counts[-1] += num_envs - share * workers
        procs = [
            ctx.Process(target=_worker, args=(counts[w], steps, seed + w, q))
            for w in range(workers)
        ]
        for p in procs:
            p.start()
        results = [q.get() for _ in procs]
        for p in procs:
            p.join()
        total_steps = sum(r[0] for r in results)
        per_worker = [r[1] for r in results]
        elapsed = max(per_worker)
    rate = total_steps / elapsed
    return {
        "num_envs": num_envs,
        "steps": steps,
        "workers": workers,
        "env_steps": total_steps,
        "elapsed_s": elapsed,
        "env_steps_per_s": rate,
        "ms_per_control_step": 1000.0 * elapsed / steps,
    }
