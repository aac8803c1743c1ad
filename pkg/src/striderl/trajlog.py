"""Trajectory logs: one CSV row per control step with the full state,
action, command, contact quantities, and the logged reward breakdown.

The first line is a versioned magic header; readers refuse logs from other
format versions. Replays recompute the reward breakdown from the logged
state columns and must reproduce the logged r-terms, which catches any
drift between the simulator, the reward engine, and the logger.
"""

from __future__ import annotations

import csv

import numpy as np

from .rewards import REWARD_NAMES

__all__ = ["TRAJ_MAGIC", "TRAJ_VERSION", "TrajectoryWriter", "read_trajectory", "TrajError"]

TRAJ_MAGIC = "striderl-traj"
TRAJ_VERSION = 1


class TrajError(RuntimeError):
    pass


def _columns() -> list[str]:
    cols = ["t"]
    cols += ["px", "py", "pz"]
    cols += ["qw", "qx", "qy", "qz"]
    cols += ["vx", "vy", "vz"]
    cols += ["wx", "wy", "wz"]
    cols += [f"q{i}" for i in range(12)]
    cols += [f"qd{i}" for i in range(12)]
    cols += [f"tau{i}" for i in range(12)]
    cols += [f"act{i}" for i in range(12)]
    cols += ["cmd_vx", "cmd_vy", "cmd_wz"]
    cols += ["fz_left", "fz_right", "fss_left", "fss_right"]
    cols += list(REWARD_NAMES) + ["total"]
    return cols


COLUMNS = _columns()


class TrajectoryWriter:
    """Streams control steps of one environment to a .traj CSV file."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._fh.write(f"# {TRAJ_MAGIC} v{TRAJ_VERSION}\n")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(COLUMNS)

    def append(self, state, action, command, tau, report, breakdown, env: int = 0) -> None:
        e = env
        row = [state.time[e]]
        row += list(state.base_pos[e])
        row += list(state.base_quat[e])
        row += list(state.base_linvel[e])
        row += list(state.base_angvel[e])
        row += list(state.q[e])
        row += list(state.qd[e])
        row += list(tau[e])
        row += list(action[e])
        row += list(command[e])
        row += [report.fz[e, 0], report.fz[e, 1],
                report.foot_speed_sq[e, 0], report.foot_speed_sq[e, 1]]
        row += [breakdown.terms[k][e] for k in REWARD_NAMES]
        row += [breakdown.total[e]]
        self._writer.writerow([repr(float(x)) for x in row])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trajectory(path: str) -> dict:
    """Load a .traj file into named column arrays; refuses other versions."""
    with open(path) as fh:
        magic = fh.readline().strip()
        expected = f"# {TRAJ_MAGIC} v{TRAJ_VERSION}"
        if magic != expected:
            raise TrajError(
                f"{path}: bad header {magic!r}; this reader handles {expected!r}"
            )
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != COLUMNS:
            raise TrajError(f"{path}: unexpected column set")
        rows = []
        for lineno, row in enumerate(reader, start=3):
            if len(row) != len(COLUMNS):
                raise TrajError(
                    f"{path}: line {lineno}: {len(row)} fields, expected {len(COLUMNS)}"
                )
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise TrajError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise TrajError(f"{path}: no data rows")
    data = np.asarray(rows)
    return {name: data[:, i] for i, name in enumerate(COLUMNS)}
