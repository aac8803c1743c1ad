"""Driving the teleop server from a script instead of the browser UI.

Starts the service in-process with the zero-action smoke policy, connects
a websocket client, pushes a forward command, and prints the streamed
frames. The browser client in frontend/ speaks exactly this protocol.
"""

import asyncio
import json

from websockets.asyncio.client import connect

from striderl.teleop import TeleopServer


async def main():
    server = TeleopServer(checkpoint=None, port=0)
    task = asyncio.create_task(server.run())
    while server.port == 0:
        await asyncio.sleep(0.01)
    print(f"server on port {server.port}; health at http://127.0.0.1:{server.port}/health")

    async with connect(f"ws://127.0.0.1:{server.port}/session") as ws:
        hello = json.loads(await ws.recv())
        print(f"hello: version={hello['version']} checkpoint={hello['checkpoint']}")

        await ws.send(json.dumps({"type": "command", "vx": 2.0, "vy": 0.0, "wz": 0.0, "ts": 1.0}))
        ack = json.loads(await ws.recv())
        print(f"sent vx=2.0 (out of range) -> applied {ack['command']}")

        for i in range(12):
            msg = json.loads(await ws.recv())
            if msg["type"] != "frame":
                continue
            print(f"t={msg['t']:.2f}s z={msg['base_pos'][2]:.3f} seg={msg['segment']:<16} "
                  f"fz=({msg['fz'][0]:5.0f},{msg['fz'][1]:5.0f}) "
                  f"r1={msg['rewards']['r1']:.2f} total={msg['rewards']['total']:+.2f} "
                  f"realtime={msg['realtime_ratio']:.2f}x")

    server.stop()
    await task
    print("done; for the human loop run `striderl serve` and open frontend/index.html")


asyncio.run(main())
