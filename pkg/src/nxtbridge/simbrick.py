"""A virtual brick: framed telegrams in, differential-drive kinematics out.

The model is kinematic on purpose -- no mass, slip, or motor lag -- so
every trajectory has a closed-form oracle.  Per wheel, power maps linearly
to angular speed (omega = power/100 * omega_max); the body then moves with

    v     = r * (omega_l + omega_r) / 2
    omega = r * (omega_r - omega_l) / axle

integrated by explicit Euler at a fixed internal timestep (default 1 ms),
with one shorter final step so :meth:`SimBrick.advance_to` lands exactly on
the requested time.  Braked or idle motors stop dead: there is no coasting.

:class:`SimBrick` is the deterministic core driven by explicit timestamps;
:class:`SimServer` wraps it for tcp/inproc clients, stamping each arriving
telegram with wall-clock time and answering with-reply commands.  The
complete command log doubles as the wire-capture oracle for executor
tests.

Trace export is newline-delimited ``t_s,x,y,theta,power_l,power_r`` rows
for plots and golden traces.
"""

from __future__ import annotations

import math
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .link import Endpoint, Scheme, register_inproc, unregister_inproc
from .telegram import (
    CodecError,
    GetBatteryLevel,
    KeepAlive,
    MotorPort,
    MotorRunState,
    Opcode,
    OutputMode,
    PlayTone,
    SetOutputState,
    Telegram,
    decode,
    encode,
    frame,
    reply_to,
    unframe,
)

SLEEP_LIMIT_MS = 600_000  # reported in KeepAlive replies

TRACE_HEADER = "t_s,x,y,theta,power_l,power_r"


class SimError(RuntimeError):
    pass


class BindError(SimError):
    """The listen endpoint could not be bound or registered."""


@dataclass(frozen=True)
class SimConfig:
    wheel_radius_m: float = 0.028
    axle_length_m: float = 0.112
    omega_max_rad_s: float = 10.0  # wheel speed at power 100
    battery_mv: int = 8000
    timestep_s: float = 0.001
    left_port: MotorPort = MotorPort.B
    right_port: MotorPort = MotorPort.C
    trace_sample_s: float = 0.01

    def __post_init__(self):
        for name in ("wheel_radius_m", "axle_length_m", "omega_max_rad_s",
                     "battery_mv", "timestep_s", "trace_sample_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.timestep_s > 0.01:
            raise ValueError(f"timestep_s must be <= 0.01, got {self.timestep_s}")


@dataclass(frozen=True)
class SimPose:
    x_m: float
    y_m: float
    theta_rad: float
    tacho_left_deg: float
    tacho_right_deg: float
    t_s: float


@dataclass(frozen=True)
class LogEntry:
    """One received telegram, or a malformed payload kept for inspection."""

    t_s: float
    telegram: Optional[Telegram] = None
    error: Optional[str] = None
    raw: bytes = b""


@dataclass(frozen=True)
class TraceRow:
    t_s: float
    x_m: float
    y_m: float
    theta_rad: float
    power_l: int
    power_r: int


def _normalize_angle(theta: float) -> float:
    """Wrap into (-pi, pi]."""
    wrapped = math.remainder(theta, math.tau)
    if wrapped <= -math.pi:
        wrapped += math.tau
    return wrapped


@dataclass
class _Motor:
    power: int = 0
    running: bool = False

    @property
    def effective_power(self) -> int:
        return self.power if self.running else 0


class SimBrick:
    """Deterministic simulator core; the caller owns the clock.

    Same telegram timeline plus same config gives a bit-identical pose
    trajectory and log.  Not thread-safe on its own; :class:`SimServer`
    serializes access for networked use.
    """

    def __init__(self, cfg: SimConfig = SimConfig()):
        self._cfg = cfg
        self._t = 0.0
        self._x = 0.0
        self._y = 0.0
        self._theta = 0.0
        self._tacho = {port: 0.0 for port in (MotorPort.A, MotorPort.B, MotorPort.C)}
        self._motors = {port: _Motor() for port in (MotorPort.A, MotorPort.B, MotorPort.C)}
        self._log: list[LogEntry] = []
        self._trace: list[TraceRow] = [self._trace_row()]
        self._since_trace = 0.0

    @property
    def config(self) -> SimConfig:
        return self._cfg

    @property
    def pose(self) -> SimPose:
        return SimPose(
            x_m=self._x,
            y_m=self._y,
            theta_rad=self._theta,
            tacho_left_deg=self._tacho[self._cfg.left_port],
            tacho_right_deg=self._tacho[self._cfg.right_port],
            t_s=self._t,
        )

    def snapshot(self) -> tuple[SimPose, tuple[LogEntry, ...]]:
        """Consistent point-in-time copy of pose and command log."""
        return self.pose, tuple(self._log)

    # -- time ---------------------------------------------------------------

    def step(self, dt: float) -> SimPose:
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return self.advance_to(self._t + dt)

    def advance_to(self, t_s: float) -> SimPose:
        """Integrate up to ``t_s`` in fixed steps plus one exact remainder step."""
        while t_s - self._t > 1e-12:
            self._euler_step(min(self._cfg.timestep_s, t_s - self._t))
        return self.pose

    def _wheel_omega(self, port: MotorPort) -> float:
        return self._motors[port].effective_power / 100.0 * self._cfg.omega_max_rad_s

    def _euler_step(self, h: float) -> None:
        cfg = self._cfg
        omega = {port: self._wheel_omega(port) for port in self._motors}
        omega_l = omega[cfg.left_port]
        omega_r = omega[cfg.right_port]
        v = cfg.wheel_radius_m * (omega_l + omega_r) / 2.0
        w = cfg.wheel_radius_m * (omega_r - omega_l) / cfg.axle_length_m
        self._x += v * math.cos(self._theta) * h
        self._y += v * math.sin(self._theta) * h
        self._theta = _normalize_angle(self._theta + w * h)
        for port, om in omega.items():
            self._tacho[port] += math.degrees(om) * h
        self._t += h
        self._since_trace += h
        if self._since_trace >= cfg.trace_sample_s - 1e-12:
            self._since_trace = 0.0
            self._trace.append(self._trace_row())

    # -- telegrams ----------------------------------------------------------

    def apply(self, telegram: Telegram, at_s: Optional[float] = None) -> Optional[Telegram]:
        """Log and act on one telegram; returns the reply telegram if one is due.

        ``at_s`` advances the clock to the arrival time first.
        """
        if at_s is not None:
            self.advance_to(at_s)
        self._log.append(LogEntry(self._t, telegram=telegram))
        body = telegram.body

        if isinstance(body, SetOutputState):
            self._apply_motor(body)
            self._trace.append(self._trace_row())
            return self._ack(telegram, body.opcode)
        if isinstance(body, PlayTone):
            return self._ack(telegram, body.opcode)
        if isinstance(body, GetBatteryLevel):
            if telegram.wants_reply:
                return reply_to(Opcode.GET_BATTERY_LEVEL, 0, self._cfg.battery_mv)
            return None
        if isinstance(body, KeepAlive):
            if telegram.wants_reply:
                return reply_to(Opcode.KEEP_ALIVE, 0, SLEEP_LIMIT_MS)
            return None
        # Unknown opcodes and stray replies are logged verbatim, never answered:
        # a reply would need an opcode echo outside the known set.
        return None

    def log_malformed(self, raw: bytes, reason: str, at_s: Optional[float] = None) -> None:
        if at_s is not None:
            self.advance_to(at_s)
        self._log.append(LogEntry(self._t, error=reason, raw=bytes(raw)))

    def _ack(self, telegram: Telegram, opcode: Opcode) -> Optional[Telegram]:
        return reply_to(opcode, 0) if telegram.wants_reply else None

    def _apply_motor(self, body: SetOutputState) -> None:
        ports = (
            (MotorPort.A, MotorPort.B, MotorPort.C)
            if body.port is MotorPort.ALL
            else (body.port,)
        )
        running = (
            body.run_state is MotorRunState.RUNNING
            and OutputMode.MOTOR_ON in body.mode
            and body.power != 0
        )
        for port in ports:
            motor = self._motors[port]
            motor.power = body.power
            motor.running = running

    # -- trace --------------------------------------------------------------

    def _trace_row(self) -> TraceRow:
        return TraceRow(
            t_s=self._t,
            x_m=self._x,
            y_m=self._y,
            theta_rad=self._theta,
            power_l=self._motors[self._cfg.left_port].effective_power,
            power_r=self._motors[self._cfg.right_port].effective_power,
        )

    def trace_rows(self) -> tuple[TraceRow, ...]:
        return tuple(self._trace)

    def write_trace(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        lines = [TRACE_HEADER]
        lines += [
            f"{row.t_s!r},{row.x_m!r},{row.y_m!r},{row.theta_rad!r},{row.power_l},{row.power_r}"
            for row in self._trace
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


# Running servers by canonical endpoint text, for telemetry pose lookups by
# services living in the same process.
_servers_lock = threading.Lock()
_servers: dict[str, "SimServer"] = {}


def find_server(endpoint: Union[Endpoint, str]) -> Optional["SimServer"]:
    """The running SimServer behind ``endpoint``, if it lives in this process."""
    key = str(Endpoint.parse(endpoint) if isinstance(endpoint, str) else endpoint)
    with _servers_lock:
        return _servers.get(key)


class SimServer:
    """Serves one SimBrick on a tcp or inproc endpoint, one client at a time.

    Arriving telegrams are stamped with wall-clock time relative to
    :meth:`start`, so log timestamps and pose time share one clock.
    Malformed frames are logged and skipped without dropping the
    connection; an extra concurrent connection is refused while the first
    is active.
    """

    def __init__(self, endpoint: Union[Endpoint, str], cfg: SimConfig = SimConfig()):
        self.endpoint = Endpoint.parse(endpoint) if isinstance(endpoint, str) else endpoint
        if self.endpoint.scheme is Scheme.SERIAL:
            raise ValueError("SimServer listens on tcp or inproc endpoints only")
        self._brick = SimBrick(cfg)
        self._lock = threading.Lock()
        self._epoch: Optional[float] = None
        self._listener: Optional[socket.socket] = None
        self._accept_thread: Optional[threading.Thread] = None
        self._handler: Optional[threading.Thread] = None
        self._stopping = threading.Event()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "SimServer":
        self._epoch = time.monotonic()
        if self.endpoint.scheme is Scheme.INPROC:
            try:
                register_inproc(self.endpoint.address, self._accept_inproc)
            except ValueError as e:
                raise BindError(str(e)) from e
            self._register()
            return self

        host, sep, port_text = self.endpoint.address.rpartition(":")
        if not sep or not port_text.isdigit():
            raise BindError(f"tcp endpoint needs host:port, got {self.endpoint.address!r}")
        try:
            listener = socket.create_server((host, int(port_text)))
        except OSError as e:
            raise BindError(f"cannot bind {self.endpoint}: {e.strerror or e}") from e
        self._listener = listener
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        self._register()
        return self

    def _register(self) -> None:
        with _servers_lock:
            _servers[str(self.endpoint)] = self

    def stop(self) -> None:
        self._stopping.set()
        with _servers_lock:
            if _servers.get(str(self.endpoint)) is self:
                del _servers[str(self.endpoint)]
        if self.endpoint.scheme is Scheme.INPROC:
            unregister_inproc(self.endpoint.address)
        if self._listener is not None:
            self._listener.close()
            self._listener = None
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=1.0)
            self._accept_thread = None
        if self._handler is not None:
            self._handler.join(timeout=1.0)
            self._handler = None

    def now(self) -> float:
        """Seconds of simulator time since start()."""
        if self._epoch is None:
            raise SimError("server not started")
        return time.monotonic() - self._epoch

    # -- oracle surface -----------------------------------------------------

    @property
    def brick(self) -> SimBrick:
        return self._brick

    def snapshot(self) -> tuple[SimPose, tuple[LogEntry, ...]]:
        """Advance to the current wall instant, then snapshot pose and log."""
        with self._lock:
            if self._epoch is not None:
                self._brick.advance_to(self.now())
            return self._brick.snapshot()

    def write_trace(self, path: Union[str, Path]) -> Path:
        with self._lock:
            if self._epoch is not None:
                self._brick.advance_to(self.now())
            return self._brick.write_trace(path)

    # -- connections --------------------------------------------------------

    def _client_active(self) -> bool:
        return self._handler is not None and self._handler.is_alive()

    def _accept_inproc(self) -> socket.socket:
        with self._lock:
            if self._client_active():
                raise ConnectionRefusedError("simulator already has a client")
            ours, theirs = socket.socketpair()
            self._handler = threading.Thread(target=self._serve_client, args=(ours,), daemon=True)
            self._handler.start()
        return theirs

    def _accept_loop(self) -> None:
        listener = self._listener
        while not self._stopping.is_set():
            try:
                conn, _addr = listener.accept()
            except OSError:
                return
            with self._lock:
                if self._client_active():
                    conn.close()
                    continue
                self._handler = threading.Thread(
                    target=self._serve_client, args=(conn,), daemon=True
                )
                self._handler.start()

    def _serve_client(self, conn: socket.socket) -> None:
        conn.settimeout(0.05)
        buf = b""
        try:
            while not self._stopping.is_set():
                try:
                    chunk = conn.recv(4096)
                except socket.timeout:
                    continue
                except OSError:
                    return
                if chunk == b"":
                    return
                buf += chunk
                while True:
                    result = unframe(buf)
                    if result is None:
                        break
                    payload, buf = result
                    arrived = self.now()
                    with self._lock:
                        try:
                            telegram = decode(payload)
                        except CodecError as e:
                            self._brick.log_malformed(payload, str(e), at_s=arrived)
                            continue
                        reply = self._brick.apply(telegram, at_s=arrived)
                    if reply is not None:
                        try:
                            conn.sendall(frame(encode(reply)))
                        except OSError:
                            return
        finally:
            conn.close()


def serve(endpoint: Union[Endpoint, str], cfg: SimConfig = SimConfig()) -> SimServer:
    """Start a simulator listening on ``endpoint`` and return its handle."""
    return SimServer(endpoint, cfg).start()
