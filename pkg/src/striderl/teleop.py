"""Real-time teleoperation service: live policy, streamed state, human commands.

One asyncio loop owns everything. The simulation task steps the env at the
control rate synced to the wall clock and broadcasts a StateFrame per step
(decimation configurable); websocket handlers only write to a latest-wins
command mailbox and read from per-subscriber frame queues. The health
endpoint answers plain HTTP on the same port the websocket upgrades on.

Command arbitration: the first client to send a command holds the driver
role; it lapses after 2 s without commands, after which anyone may take
over. Non-driver commands are rejected with an error frame.
"""

from __future__ import annotations

import asyncio
import http
import json
import time
from importlib import metadata

import numpy as np
from websockets.asyncio.server import serve

from .env import LocomotionEnv
from .gait import Segment, phase_at
from .runtime import PolicyHandle, act_deterministic, load_policy

__all__ = ["TeleopServer", "run_server", "DRIVER_TIMEOUT"]

DRIVER_TIMEOUT = 2.0
FRAME_VERSION = 1


def _package_version() -> str:
    try:
        return metadata.version("striderl")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


class TeleopServer:
    """Session state plus the network surface; one env per server."""

    def __init__(
        self,
        checkpoint: str | None = None,
        host: str = "127.0.0.1",
        port: int = 8765,
        rate_hz: float = 50.0,
        decimation: int = 1,
        seed: int = 0,
        num_subscriber_frames: int = 8,
    ):
        self.handle: PolicyHandle | None = None
        if checkpoint is not None:
            self.handle = load_policy(checkpoint)
        self.env = LocomotionEnv(num_envs=1, seed=seed)
        self.env.auto_resample = False
        self.env.reset()
        self.env.set_command(np.zeros(3))
        self.host = host
        self.port = port
        self.rate_hz = rate_hz
        self.decimation = max(1, int(decimation))
        self._queue_size = num_subscriber_frames
        self._subscribers: set[asyncio.Queue] = set()
        self._mailbox: tuple[np.ndarray, int, float] | None = None
        self._newest_ts = -np.inf
        self._reset_requested = False
        self._driver_id: int | None = None
        self._driver_last = -np.inf
        self._episode = 0
        self._frames_sent = 0
        self._last_fz = np.zeros(2)
        self._window: list[tuple[float, float]] = []
        self._stop = asyncio.Event()
        self._server = None

    # ------------------------------------------------------------- session

    def apply_command(self, cmd: np.ndarray, client_id: int, ts: float) -> np.ndarray | None:
        """Latest-wins mailbox write under the driver contract.

        Returns the clamped command that will be applied, or None if the
        message was stale or the sender is not the driver.
        """
        now = time.monotonic()
        if self._driver_id is not None and now - self._driver_last > DRIVER_TIMEOUT:
            self._driver_id = None
        if self._driver_id is None:
            self._driver_id = client_id
        if client_id != self._driver_id:
            return None
        self._driver_last = now
        if ts <= self._newest_ts:
            return None  # stale
        self._newest_ts = ts
        clamped = self.env.config.commands.clamp(np.asarray(cmd, dtype=np.float64))
        self._mailbox = (clamped, client_id, ts)
        return clamped

    def request_reset(self) -> None:
        self._reset_requested = True

    # ------------------------------------------------------------ sim loop

    async def _sim_loop(self) -> None:
        control_dt = self.env.config.control_dt
        # wall budget per broadcast frame; rate_hz = 1/control_dt is real time
        wall_dt = self.decimation / self.rate_hz
        start = time.monotonic()
        next_tick = start
        sim_time = 0.0
        obs = self.env._observe()
        self._last_fz = np.zeros(2)
        while not self._stop.is_set():
            if self._reset_requested:
                self._reset_requested = False
                obs = self.env.reset()
                self.env.set_command(np.zeros(3))
                self._episode += 1
            if self._mailbox is not None:
                cmd, _, _ = self._mailbox
                self._mailbox = None
                self.env.set_command(cmd)

            status = "running"
            breakdown = None
            for _ in range(self.decimation):
                action = self._act(obs)
                tr = self.env.step(action)
                obs = tr.observation
                breakdown = tr.breakdown
                self._last_fz = tr.info["fz"][0]
                sim_time += control_dt
                if tr.terminated[0]:
                    status = "terminated"
                    self._episode += 1
                elif tr.truncated[0]:
                    status = "truncated"
                    self._episode += 1

            now = time.monotonic()
            wall = now - start
            self._window.append((wall, sim_time))
            cutoff = wall - 10.0
            while len(self._window) > 2 and self._window[0][0] < cutoff:
                self._window.pop(0)
            frame = self._build_frame(breakdown, status, sim_time - wall)
            data = json.dumps(frame)
            for q in list(self._subscribers):
                if q.full():
                    try:
                        q.get_nowait()
                    except asyncio.QueueEmpty:
                        pass
                q.put_nowait(data)
            self._frames_sent += 1

            next_tick += wall_dt
            delay = next_tick - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                # fell behind; don't try to catch up in a burst
                next_tick = time.monotonic()
                await asyncio.sleep(0)

    def _act(self, obs: np.ndarray) -> np.ndarray:
        if self.handle is None:
            return np.zeros((1, self.env.action_dim))
        return act_deterministic(self.handle, obs)

    def realtime_ratio(self) -> float:
        if len(self._window) < 2:
            return 1.0
        (w0, s0), (w1, s1) = self._window[0], self._window[-1]
        if w1 - w0 <= 0:
            return 1.0
        return (s1 - s0) / (w1 - w0)

    def _build_frame(self, breakdown, status: str, drift: float) -> dict:
        st = self.env.state
        seg, phi = phase_at(self.env.schedule, float(st.time[0]))
        rewards = {k: float(v[0]) for k, v in breakdown.terms.items()}
        rewards["total"] = float(breakdown.total[0])
        return {
            "type": "frame",
            "v": FRAME_VERSION,
            "t": float(st.time[0]),
            "base_pos": [float(x) for x in st.base_pos[0]],
            "base_quat": [float(x) for x in st.base_quat[0]],
            "q": [float(x) for x in st.q[0]],
            "fz": [float(x) for x in self._last_fz],
            "segment": Segment(seg).name,
            "phi": float(phi),
            "command": [float(x) for x in self.env.command[0]],
            "rewards": rewards,
            "episode": self._episode,
            "status": status,
            "drift": float(drift),
            "realtime_ratio": float(self.realtime_ratio()),
        }

    # ------------------------------------------------------------- network

    def _health_body(self) -> bytes:
        payload = {
            "service": "striderl-teleop",
            "version": _package_version(),
            "checkpoint": self.handle.checkpoint_id if self.handle else None,
            "rate_hz": self.rate_hz,
            "frames_sent": self._frames_sent,
            "realtime_ratio": self.realtime_ratio(),
        }
        return json.dumps(payload).encode()

    def _process_request(self, connection, request):
        if request.path == "/health":
            return connection.respond(http.HTTPStatus.OK, self._health_body().decode() + "\n")
        if request.path != "/session":
            return connection.respond(http.HTTPStatus.NOT_FOUND, "use /health or /session\n")
        return None  # continue with the websocket handshake

    async def _handler(self, websocket) -> None:
        queue: asyncio.Queue = asyncio.Queue(maxsize=self._queue_size)
        self._subscribers.add(queue)
        client_id = id(websocket)
        sender = asyncio.create_task(self._send_frames(websocket, queue))
        try:
            async for raw in websocket:
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("message must be an object")
                except (json.JSONDecodeError, ValueError) as exc:
                    await websocket.send(json.dumps({"type": "error", "message": str(exc)}))
                    continue
                kind = msg.get("type")
                if kind == "command":
                    try:
                        cmd = np.array([float(msg["vx"]), float(msg["vy"]), float(msg["wz"])])
                        if not np.all(np.isfinite(cmd)):
                            raise ValueError("command must be finite")
                    except (KeyError, TypeError, ValueError) as exc:
                        await websocket.send(json.dumps({"type": "error", "message": f"bad command: {exc}"}))
                        continue
                    ts = float(msg.get("ts", time.monotonic()))
                    applied = self.apply_command(cmd, client_id, ts)
                    if applied is None:
                        await websocket.send(json.dumps(
                            {"type": "error", "message": "not the driver or stale timestamp"}))
                    else:
                        await websocket.send(json.dumps(
                            {"type": "ack", "command": [float(x) for x in applied]}))
                elif kind == "reset":
                    self.request_reset()
                    await websocket.send(json.dumps({"type": "ack", "reset": True}))
                else:
                    await websocket.send(json.dumps(
                        {"type": "error", "message": f"unknown message type {kind!r}"}))
        finally:
            sender.cancel()
            self._subscribers.discard(queue)

    async def _send_frames(self, websocket, queue: asyncio.Queue) -> None:
        hello = {
            "type": "hello",
            "v": FRAME_VERSION,
            "version": _package_version(),
            "checkpoint": self.handle.checkpoint_id if self.handle else None,
            "rate_hz": self.rate_hz,
        }
        await websocket.send(json.dumps(hello))
        while True:
            data = await queue.get()
            await websocket.send(data)

    async def run(self) -> None:
        """Serve until .stop(); sets .port when bound to an ephemeral port."""
        sim_task = asyncio.create_task(self._sim_loop())
        async with serve(self._handler, self.host, self.port,
                         process_request=self._process_request) as server:
            self._server = server
            self.port = server.sockets[0].getsockname()[1]
            await self._stop.wait()
        sim_task.cancel()

    def stop(self) -> None:
        self._stop.set()


def run_server(checkpoint: str | None, host: str, port: int, rate_hz: float,
               decimation: int = 1, seed: int = 0) -> None:
    server = TeleopServer(checkpoint=checkpoint, host=host, port=port,
                          rate_hz=rate_hz, decimation=decimation, seed=seed)
    try:
        asyncio.run(server.run())
    except KeyboardInterrupt:  # pragma: no cover
        pass
