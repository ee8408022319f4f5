"""CLI tests: exit codes, output streams, and end-to-end subprocess runs."""

import json
import signal
import socket
import subprocess
import sys
import time

import pytest
from click.testing import CliRunner
from helpers import free_tcp_endpoint, wait_until

from nxtbridge.cli import TeleopSession, main
from nxtbridge.drive import DriveCommand
from nxtbridge.link import Link, LinkConfig
from nxtbridge.simbrick import TRACE_HEADER, serve
from nxtbridge.telegram import MotorPort, SetOutputState


@pytest.fixture
def runner():
    return CliRunner()


PROGRAM_TEXT = (
    '{"version":1,"name":"demo","steps":['
    '{"op":"forward","ms":30,"power":50},'
    '{"op":"pause","ms":20},'
    '{"op":"tone","ms":20,"hz":440}]}'
)


class TestHelp:
    @pytest.mark.parametrize(
        "args",
        [[], ["sim"], ["serve"], ["run"], ["teleop"], ["decode"], ["plot"]],
    )
    def test_help_exits_zero(self, runner, args):
        result = runner.invoke(main, args + ["--help"])
        assert result.exit_code == 0
        assert "Usage" in result.output

    def test_unknown_flag_exits_two(self, runner):
        result = runner.invoke(main, ["decode", "--frobnicate", "00"])
        assert result.exit_code == 2

    def test_unknown_subcommand_exits_two(self, runner):
        result = runner.invoke(main, ["dance"])
        assert result.exit_code == 2


class TestDecode:
    def test_play_tone_rendering(self, runner):
        result = runner.invoke(main, ["decode", "80 03 B8 01 F4 01"])
        assert result.exit_code == 0
        assert result.output.strip() == "PlayTone 440 Hz 500 ms (no reply)"

    def test_battery_request(self, runner):
        result = runner.invoke(main, ["decode", "00 0B"])
        assert result.exit_code == 0
        assert result.output.strip() == "GetBatteryLevel (reply requested)"

    def test_battery_reply(self, runner):
        result = runner.invoke(main, ["decode", "02 0B 00 40 1F"])
        assert result.output.strip() == "Reply to GetBatteryLevel status=0 battery 8000 mV"

    def test_set_output_state(self, runner):
        result = runner.invoke(main, ["decode", "80 04 01 64 07 01 00 20 00 00 00 00"])
        assert "SetOutputState port=B power=100" in result.output
        assert "mode=MOTOR_ON|BRAKE|REGULATED" in result.output

    def test_unknown_opcode(self, runner):
        result = runner.invoke(main, ["decode", "80 2A 01 02"])
        assert result.exit_code == 0
        assert result.output.strip() == "Unknown opcode 0x2A (3 bytes) (no reply)"

    def test_bad_hex_exits_two(self, runner):
        result = runner.invoke(main, ["decode", "ZZ"])
        assert result.exit_code == 2
        assert "error" in result.output

    def test_truncated_telegram_exits_two(self, runner):
        result = runner.invoke(main, ["decode", "80 03 B8"])
        assert result.exit_code == 2


class TestRun:
    def test_happy_path_against_sim(self, runner, tmp_path):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            path = tmp_path / "demo.mynxt.json"
            path.write_text(PROGRAM_TEXT)
            result = runner.invoke(main, ["run", str(path), "--target", endpoint])
            assert result.exit_code == 0, result.output
            lines = result.output.splitlines()
            assert lines[0] == "step 1/3: forward 30 ms power 50"
            assert lines[1] == "step 2/3: pause 20 ms"
            assert lines[2] == "step 3/3: tone 20 ms 440 Hz"
            assert lines[3] == "finished"
        finally:
            server.stop()

    def test_malformed_file_exits_two(self, runner, tmp_path):
        path = tmp_path / "bad.mynxt.json"
        path.write_text('{"version":1,"name":"x","steps":[{"op":"forward","ms":0}]}')
        result = runner.invoke(main, ["run", str(path), "--target", "inproc:none"])
        assert result.exit_code == 2
        assert "duration_ms" in result.output

    def test_missing_file_exits_two(self, runner):
        result = runner.invoke(main, ["run", "/nonexistent.mynxt.json", "--target", "inproc:x"])
        assert result.exit_code == 2

    def test_dead_endpoint_exits_three_with_warning(self, runner, tmp_path):
        path = tmp_path / "demo.mynxt.json"
        path.write_text(PROGRAM_TEXT)
        result = runner.invoke(main, ["run", str(path), "--target", free_tcp_endpoint()])
        assert result.exit_code == 3
        assert "Turn it on and press CONNECT again" in result.output

    def test_env_var_target(self, runner, tmp_path, monkeypatch):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            path = tmp_path / "demo.mynxt.json"
            path.write_text('{"version":1,"name":"","steps":[]}')
            monkeypatch.setenv("NXTBRIDGE_TARGET", endpoint)
            result = runner.invoke(main, ["run", str(path)])
            assert result.exit_code == 0, result.output
            assert "finished" in result.output
        finally:
            server.stop()


class TestTeleopSession:
    def test_press_release_stop_telegrams(self):
        endpoint = "inproc:teleop-session-test"
        server = serve(endpoint)
        try:
            link = Link(endpoint, LinkConfig(keepalive_period_s=1000.0))
            link.connect()
            session = TeleopSession(link)
            session.press(DriveCommand.FORWARD)
            assert session.active is DriveCommand.FORWARD
            start = time.monotonic()
            session.release()
            release_latency = time.monotonic() - start
            assert release_latency < 0.1
            assert session.active is None
            link.disconnect()

            def motor_bodies():
                _, log = server.snapshot()
                bodies = [
                    e.telegram.body
                    for e in log
                    if e.telegram is not None and isinstance(e.telegram.body, SetOutputState)
                ]
                return bodies if len(bodies) >= 5 else None

            bodies = wait_until(motor_bodies)
            assert [b.power for b in bodies[:4]] == [75, 75, 0, 0]

        finally:
            server.stop()

    def test_release_without_press_is_silent(self):
        endpoint = "inproc:teleop-noop-test"
        server = serve(endpoint)
        try:
            link = Link(endpoint, LinkConfig(keepalive_period_s=1000.0))
            link.connect()
            TeleopSession(link).release()
            _, log = server.snapshot()
            motor = [e for e in log if e.telegram and isinstance(e.telegram.body, SetOutputState)]
            assert motor == []
            link.disconnect()
        finally:
            server.stop()


class TestPlot:
    def test_plot_from_trace(self, runner, tmp_path):
        trace = tmp_path / "run.csv"
        trace.write_text(
            TRACE_HEADER
            + "\n0.0,0.0,0.0,0.0,0,0\n0.5,0.07,0.0,0.0,50,50\n1.0,0.14,0.0,0.0,50,50\n"
        )
        out = tmp_path / "run.png"
        result = runner.invoke(main, ["plot", str(trace), "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert out.stat().st_size > 1000

    def test_plot_rejects_garbage(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("this,is,not,a,trace\n")
        result = runner.invoke(main, ["plot", str(bad)])
        assert result.exit_code == 2


@pytest.mark.slow
class TestSubprocess:
    """End-to-end child-process checks for the long-running subcommands."""

    def test_sim_banner_trace_and_plot(self, tmp_path):
        endpoint = free_tcp_endpoint()
        trace = tmp_path / "out.csv"
        figure = tmp_path / "out.png"
        proc = subprocess.Popen(
            [sys.executable, "-m", "nxtbridge.cli", "sim", "--listen", endpoint,
             "--trace", str(trace), "--plot", str(figure)],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            assert wait_until(lambda: _port_open(endpoint), timeout=10.0)
            time.sleep(0.3)
        finally:
            proc.send_signal(signal.SIGINT)
            stdout, stderr = proc.communicate(timeout=10.0)
        assert proc.returncode == 0, stderr
        assert f"listening on {endpoint}" in stdout
        lines = trace.read_text().splitlines()
        assert lines[0] == TRACE_HEADER
        assert figure.stat().st_size > 1000

    def test_sim_bind_conflict_exits_three(self):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            proc = subprocess.run(
                [sys.executable, "-m", "nxtbridge.cli", "sim", "--listen", endpoint],
                capture_output=True,
                text=True,
                timeout=10.0,
            )
            assert proc.returncode == 3
            assert "error" in proc.stderr
        finally:
            server.stop()

    def test_teleop_scripted_stdin(self, tmp_path):
        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            proc = subprocess.run(
                [sys.executable, "-m", "nxtbridge.cli", "teleop", "--target", endpoint],
                input="forward\nstop\nquit\n",
                capture_output=True,
                text=True,
                timeout=10.0,
            )
            assert proc.returncode == 0, proc.stderr

            def motor_bodies():
                _, log = server.snapshot()
                bodies = [
                    e.telegram.body
                    for e in log
                    if e.telegram is not None and isinstance(e.telegram.body, SetOutputState)
                ]
                return bodies if len(bodies) >= 5 else None

            bodies = wait_until(motor_bodies)
            assert bodies is not None
            assert [b.power for b in bodies[:4]] == [75, 75, 0, 0]
            # the final telegram is the disconnect stop-all
            assert bodies[-1].port is MotorPort.ALL
        finally:
            server.stop()

    def test_sim_config_overrides_battery(self, tmp_path):
        config = tmp_path / "sim.json"
        config.write_text(json.dumps({"battery_mv": 7123, "left_port": "B", "right_port": "C"}))
        endpoint = free_tcp_endpoint()
        proc = subprocess.Popen(
            [sys.executable, "-m", "nxtbridge.cli", "sim", "--listen", endpoint,
             "--config", str(config)],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            assert wait_until(lambda: _port_open(endpoint), timeout=10.0)
            from nxtbridge.link import LinkError
            from nxtbridge.telegram import GetBatteryLevel, command

            def try_connect():
                candidate = Link(endpoint, LinkConfig(keepalive_period_s=1000.0))
                try:
                    candidate.connect()
                    return candidate
                except LinkError:
                    # the port probe above may still count as the sim's
                    # single client for a moment; retry
                    return None

            link = wait_until(try_connect, timeout=10.0)
            assert link, "could not connect to the configured sim"
            reply = link.send(command(GetBatteryLevel(), reply=True))
            assert reply.value == 7123
            link.disconnect()
        finally:
            proc.send_signal(signal.SIGINT)
            proc.communicate(timeout=10.0)

    def test_sim_bad_config_exits_two(self, runner, tmp_path):
        config = tmp_path / "sim.json"
        config.write_text('{"battery_mv": -5}')
        result = runner.invoke(
            main, ["sim", "--listen", "tcp:127.0.0.1:1", "--config", str(config)]
        )
        assert result.exit_code == 2

    def test_error_text_on_stderr_progress_on_stdout(self, tmp_path):
        bad = tmp_path / "bad.mynxt.json"
        bad.write_text("{nope")
        proc = subprocess.run(
            [sys.executable, "-m", "nxtbridge.cli", "run", str(bad), "--target", "inproc:x"],
            capture_output=True,
            text=True,
            timeout=10.0,
        )
        assert proc.returncode == 2
        assert proc.stdout == ""
        assert "error" in proc.stderr

        endpoint = free_tcp_endpoint()
        server = serve(endpoint)
        try:
            good = tmp_path / "good.mynxt.json"
            good.write_text(PROGRAM_TEXT)
            proc = subprocess.run(
                [sys.executable, "-m", "nxtbridge.cli", "run", str(good), "--target", endpoint],
                capture_output=True,
                text=True,
                timeout=30.0,
            )
            assert proc.returncode == 0
            assert proc.stderr == ""
            assert proc.stdout.splitlines()[-1] == "finished"
        finally:
            server.stop()

    def test_serve_healthz_and_ws(self):
        import urllib.request

        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        proc = subprocess.Popen(
            [sys.executable, "-m", "nxtbridge.cli", "serve",
             "--listen", f"127.0.0.1:{port}"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            def healthy():
                try:
                    with urllib.request.urlopen(
                        f"http://127.0.0.1:{port}/healthz", timeout=0.5
                    ) as response:
                        return response.read() == b"ok"
                except OSError:
                    return False

            assert wait_until(healthy, timeout=15.0)
        finally:
            proc.send_signal(signal.SIGINT)
            proc.communicate(timeout=10.0)


def _port_open(endpoint: str) -> bool:
    _, host, port = endpoint.split(":")
    try:
        with socket.create_connection((host, int(port)), timeout=0.2):
            return True
    except OSError:
        return False
