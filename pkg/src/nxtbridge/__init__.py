"""Teleoperation and linear-logic programming stack for NXT-style bricks.

Layers, bottom up:

- :mod:`nxtbridge.telegram` -- bit-exact direct-command codec and framing
- :mod:`nxtbridge.link` -- connection lifecycle and serialized command stream
- :mod:`nxtbridge.drive` -- arrow-key / tilt / speech inputs to motor powers
- :mod:`nxtbridge.logic` -- linear-program document model and executor
- :mod:`nxtbridge.simbrick` -- protocol-faithful simulated brick
- :mod:`nxtbridge.service` -- WebSocket bridge for the browser console
- :mod:`nxtbridge.cli` -- sim / serve / run / teleop / decode / plot commands
"""

__version__ = "0.1.0"
