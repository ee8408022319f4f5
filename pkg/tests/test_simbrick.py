"""Simulator tests against closed-form kinematics oracles and server rules."""

import math
import socket
import time

import pytest

from nxtbridge.link import Endpoint
from nxtbridge.simbrick import (
    SLEEP_LIMIT_MS,
    TRACE_HEADER,
    BindError,
    SimBrick,
    SimConfig,
    SimServer,
    serve,
)
from nxtbridge.telegram import (
    GetBatteryLevel,
    KeepAlive,
    MotorPort,
    MotorRunState,
    Opcode,
    OutputMode,
    PlayTone,
    Regulation,
    Reply,
    SetOutputState,
    command,
    decode,
    encode,
    frame,
    unframe,
)


def motor_telegram(port, power, running=True):
    return command(
        SetOutputState(
            port=port,
            power=power,
            mode=OutputMode.MOTOR_ON | OutputMode.BRAKE | OutputMode.REGULATED,
            regulation=Regulation.SPEED,
            turn_ratio=0,
            run_state=MotorRunState.RUNNING if running else MotorRunState.IDLE,
            tacho_limit=0,
        )
    )


def set_wheel_powers(brick, left, right):
    brick.apply(motor_telegram(brick.config.left_port, left, running=left != 0))
    brick.apply(motor_telegram(brick.config.right_port, right, running=right != 0))


def arc_oracle(power_l, power_r, t, cfg=SimConfig()):
    """Closed-form pose for constant wheel powers from the origin, heading 0.

    Independent of the integrator: uses the exact circular-arc solution
    x = R sin(wt), y = R (1 - cos(wt)) with R = v / w, or a straight line
    when both wheels match.
    """
    omega_l = power_l / 100.0 * cfg.omega_max_rad_s
    omega_r = power_r / 100.0 * cfg.omega_max_rad_s
    v = cfg.wheel_radius_m * (omega_l + omega_r) / 2.0
    w = cfg.wheel_radius_m * (omega_r - omega_l) / cfg.axle_length_m
    if w == 0.0:
        return v * t, 0.0, 0.0
    radius = v / w
    return radius * math.sin(w * t), radius * (1.0 - math.cos(w * t)), w * t


class TestKinematics:
    def test_straight_line_exact(self):
        brick = SimBrick()
        set_wheel_powers(brick, 50, 50)
        pose = brick.advance_to(2.0)
        # v = r * omega = 0.028 * (0.5 * 10.0) = 0.14 m/s; exact on straight lines
        assert pose.x_m == pytest.approx(0.28, abs=1e-9)
        assert pose.y_m == pytest.approx(0.0, abs=1e-12)
        assert pose.theta_rad == 0.0

    def test_spin_in_place(self):
        brick = SimBrick()
        set_wheel_powers(brick, -60, 60)
        pose = brick.advance_to(1.0)
        # w = r (w_r - w_l) / axle = 0.028 * 12 / 0.112 = 3.0 rad/s
        assert abs(pose.x_m) < 1e-9 and abs(pose.y_m) < 1e-9
        assert pose.theta_rad == pytest.approx(3.0, abs=1e-9)

    def test_rest_is_identity(self):
        brick = SimBrick()
        before = brick.pose
        after = brick.advance_to(5.0)
        assert (after.x_m, after.y_m, after.theta_rad) == (
            before.x_m, before.y_m, before.theta_rad,
        )

    def test_arc_matches_closed_form(self):
        brick = SimBrick()
        set_wheel_powers(brick, 30, 60)
        pose = brick.advance_to(1.0)
        x, y, theta = arc_oracle(30, 60, 1.0)
        scale = math.hypot(x, y)
        assert math.hypot(pose.x_m - x, pose.y_m - y) / scale < 1e-3
        assert abs(pose.theta_rad - theta) / abs(theta) < 1e-3

    def test_determinism(self):
        def trajectory():
            brick = SimBrick()
            set_wheel_powers(brick, 40, 70)
            brick.advance_to(0.5)
            set_wheel_powers(brick, -20, 20)
            brick.advance_to(1.25)
            return brick.pose

        assert trajectory() == trajectory()

    def test_brake_stops_dead(self):
        brick = SimBrick()
        set_wheel_powers(brick, 80, 80)
        brick.advance_to(1.0)
        x_before = brick.pose.x_m
        set_wheel_powers(brick, 0, 0)
        brick.advance_to(2.0)
        assert brick.pose.x_m == x_before

    def test_power_zero_with_running_state_is_stopped(self):
        brick = SimBrick()
        brick.apply(motor_telegram(MotorPort.B, 0, running=True))
        brick.apply(motor_telegram(MotorPort.C, 0, running=True))
        assert brick.advance_to(1.0).x_m == 0.0

    def test_tacho_accumulates_degrees(self):
        brick = SimBrick()
        set_wheel_powers(brick, 100, -100)
        pose = brick.advance_to(1.0)
        # omega = 10 rad/s for 1 s = 572.957... degrees
        assert pose.tacho_left_deg == pytest.approx(math.degrees(10.0), rel=1e-9)
        assert pose.tacho_right_deg == pytest.approx(-math.degrees(10.0), rel=1e-9)

    def test_theta_normalized(self):
        brick = SimBrick()
        set_wheel_powers(brick, -100, 100)
        pose = brick.advance_to(10.0)  # 50 rad of spin
        assert -math.pi < pose.theta_rad <= math.pi

    def test_all_port_telegram_drives_both_wheels(self):
        brick = SimBrick()
        brick.apply(motor_telegram(MotorPort.ALL, 50))
        pose = brick.advance_to(2.0)
        assert pose.x_m == pytest.approx(0.28, abs=1e-9)

    def test_step_requires_positive_dt(self):
        with pytest.raises(ValueError):
            SimBrick().step(0)


class TestSnapshotAndLog:
    def test_empty(self):
        pose, log = SimBrick().snapshot()
        assert log == ()
        assert (pose.x_m, pose.y_m, pose.theta_rad) == (0.0, 0.0, 0.0)

    def test_one_tone_logged(self):
        brick = SimBrick()
        brick.apply(command(PlayTone(440, 500)))
        _, log = brick.snapshot()
        assert len(log) == 1
        assert log[0].telegram.body == PlayTone(440, 500)

    def test_snapshots_stable_without_traffic(self):
        brick = SimBrick()
        brick.apply(command(PlayTone(440, 500)))
        assert brick.snapshot() == brick.snapshot()

    def test_timestamps_non_decreasing(self):
        brick = SimBrick()
        brick.apply(command(PlayTone(440, 500)), at_s=0.5)
        brick.apply(command(KeepAlive()), at_s=1.5)
        _, log = brick.snapshot()
        times = [entry.t_s for entry in log]
        assert times == sorted(times)

    def test_battery_reply_echoes_config(self):
        brick = SimBrick(SimConfig(battery_mv=7123))
        reply = brick.apply(command(GetBatteryLevel(), reply=True))
        assert reply.body == Reply(Opcode.GET_BATTERY_LEVEL, 0, 7123)

    def test_keepalive_reply(self):
        reply = SimBrick().apply(command(KeepAlive(), reply=True))
        assert reply.body == Reply(Opcode.KEEP_ALIVE, 0, SLEEP_LIMIT_MS)

    def test_no_reply_for_no_reply_commands(self):
        assert SimBrick().apply(command(GetBatteryLevel())) is None


class TestTrace:
    def test_header_and_rows(self, tmp_path):
        brick = SimBrick()
        set_wheel_powers(brick, 50, 50)
        brick.advance_to(0.1)
        path = brick.write_trace(tmp_path / "trace.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == TRACE_HEADER
        assert len(lines) > 2
        last = lines[-1].split(",")
        assert len(last) == 6
        assert float(last[1]) == pytest.approx(0.014, abs=1e-9)
        assert last[4] == "50" and last[5] == "50"


class TestConfigValidation:
    def test_rejects_big_timestep(self):
        with pytest.raises(ValueError, match="timestep"):
            SimConfig(timestep_s=0.02)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            SimConfig(wheel_radius_m=0.0)


def free_tcp_endpoint():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    return f"tcp:127.0.0.1:{port}"


class _RawClient:
    """Minimal framed client speaking straight to a server socket."""

    def __init__(self, endpoint: str):
        ep = Endpoint.parse(endpoint)
        host, _, port = ep.address.rpartition(":")
        self.sock = socket.create_connection((host, int(port)), timeout=2.0)
        self.buf = b""

    def send_telegram(self, t):
        self.sock.sendall(frame(encode(t)))

    def send_raw(self, data: bytes):
        self.sock.sendall(data)

    def recv_telegram(self, timeout=2.0):
        self.sock.settimeout(timeout)
        while True:
            result = unframe(self.buf)
            if result is not None:
                payload, self.buf = result
                return decode(payload)
            try:
                chunk = self.sock.recv(4096)
            except ConnectionResetError:
                # closing with unread inbound data surfaces as RST, not EOF
                raise ConnectionError("server closed the connection") from None
            if not chunk:
                raise ConnectionError("server closed the connection")
            self.buf += chunk

    def close(self):
        self.sock.close()


class TestServer:
    def test_battery_over_tcp(self):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint, SimConfig(battery_mv=8000))
        try:
            client = _RawClient(endpoint)
            client.send_telegram(command(GetBatteryLevel(), reply=True))
            reply = client.recv_telegram()
            assert reply.body == Reply(Opcode.GET_BATTERY_LEVEL, 0, 8000)
            client.close()
        finally:
            server.stop()

    def test_malformed_frame_keeps_connection(self):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            client = _RawClient(endpoint)
            client.send_raw(frame(b"\x80\x03\xb8"))  # truncated PlayTone
            client.send_telegram(command(GetBatteryLevel(), reply=True))
            reply = client.recv_telegram()
            assert reply.body.value == 8000
            _, log = server.snapshot()
            errors = [e for e in log if e.error is not None]
            assert len(errors) == 1
            assert errors[0].raw == b"\x80\x03\xb8"
            client.close()
        finally:
            server.stop()

    def test_second_connection_refused_while_first_active(self):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            first = _RawClient(endpoint)
            first.send_telegram(command(GetBatteryLevel(), reply=True))
            first.recv_telegram()
            second = _RawClient(endpoint)
            second.send_telegram(command(GetBatteryLevel(), reply=True))
            with pytest.raises(ConnectionError, match="closed"):
                second.recv_telegram()
            # the first client is unaffected
            first.send_telegram(command(GetBatteryLevel(), reply=True))
            assert first.recv_telegram().body.value == 8000
            first.close()
            second.close()
        finally:
            server.stop()

    def test_client_can_reconnect_after_disconnect(self):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            first = _RawClient(endpoint)
            first.send_telegram(command(GetBatteryLevel(), reply=True))
            first.recv_telegram()
            first.close()
            deadline = time.monotonic() + 2.0
            while time.monotonic() < deadline:
                second = _RawClient(endpoint)
                try:
                    second.send_telegram(command(GetBatteryLevel(), reply=True))
                    second.recv_telegram(timeout=0.5)
                    break
                except Exception:
                    second.close()
                    time.sleep(0.05)
            else:
                pytest.fail("could not reconnect after first client left")
            second.close()
        finally:
            server.stop()

    def test_bind_conflict_raises(self):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            with pytest.raises(BindError):
                serve(endpoint)
        finally:
            server.stop()

    def test_inproc_name_conflict_raises(self):
        server = serve("inproc:dup-test")
        try:
            with pytest.raises(BindError):
                serve("inproc:dup-test")
        finally:
            server.stop()

    def test_serial_endpoint_rejected(self):
        with pytest.raises(ValueError):
            SimServer("serial:/dev/rfcomm0")

    def test_pose_timestamps_track_wall_clock(self):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            time.sleep(0.05)
            pose, _ = server.snapshot()
            assert pose.t_s >= 0.05
        finally:
            server.stop()
