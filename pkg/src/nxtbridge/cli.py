"""Operator entry points: sim, serve, run, teleop, decode, plot.

Exit codes: 0 success, 2 usage or parse error, 3 connect/bind failure,
4 runtime failure, 130 interrupted (after a safe stop).  Error text goes
to stderr; machine-readable output to stdout.
"""

from __future__ import annotations

import json
import select
import signal
import sys
import threading
import time
from pathlib import Path

import click

from . import plots
from .drive import DriveCommand, DriveConfig, map_command, to_telegrams
from .link import Link, LinkError, Warning as LinkWarning
from .logic import (
    ParseError,
    ProgramRunner,
    RunPhase,
    parse as parse_program,
)
from .simbrick import BindError, SimConfig, SimServer
from .telegram import (
    CodecError,
    GetBatteryLevel,
    KeepAlive,
    MotorPort,
    OutputMode,
    PlayTone,
    Reply,
    SetOutputState,
    Telegram,
    TelegramKind,
    Unknown,
    decode as decode_telegram,
)

EXIT_USAGE = 2
EXIT_CONNECT = 3
EXIT_RUNTIME = 4
EXIT_INTERRUPT = 130


@click.group()
@click.version_option(package_name="nxtbridge")
def main():
    """Drive, program, and simulate an NXT-style brick."""


# -- sim ----------------------------------------------------------------------


@main.command()
@click.option("--listen", required=True, metavar="ENDPOINT",
              help="tcp:HOST:PORT or inproc:NAME to listen on.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the pose/power trace here on exit.")
@click.option("--plot", "plot_path", type=click.Path(dir_okay=False, path_type=Path),
              help="Render the trace to this figure on exit (requires --trace or standalone).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON file overriding simulator constants.")
def sim(listen, trace_path, plot_path, config_path):
    """Run the simulated brick until interrupted."""
    cfg = _load_sim_config(config_path) if config_path else SimConfig()
    try:
        server = SimServer(listen, cfg).start()
    except (BindError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_CONNECT if isinstance(e, BindError) else EXIT_USAGE)
    click.echo(f"listening on {server.endpoint}")
    _wait_for_interrupt()
    server.stop()
    if trace_path is not None:
        server.write_trace(trace_path)
        click.echo(f"trace written to {trace_path}")
        if plot_path is not None:
            plots.render_trace_file(trace_path, plot_path)
            click.echo(f"figure written to {plot_path}")
    elif plot_path is not None:
        plots.render_trace(server.brick.trace_rows(), plot_path)
        click.echo(f"figure written to {plot_path}")


def _wait_for_interrupt() -> None:
    done = threading.Event()
    previous = signal.signal(signal.SIGTERM, lambda signum, frame: done.set())
    try:
        while not done.is_set():
            try:
                time.sleep(0.2)
            except KeyboardInterrupt:
                return
    finally:
        signal.signal(signal.SIGTERM, previous)


def _load_sim_config(path: Path) -> SimConfig:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(obj, dict):
            raise ValueError("config must be a JSON object")
        if "left_port" in obj:
            obj["left_port"] = MotorPort[obj["left_port"]]
        if "right_port" in obj:
            obj["right_port"] = MotorPort[obj["right_port"]]
        return SimConfig(**obj)
    except (ValueError, KeyError, TypeError) as e:
        click.echo(f"error: bad simulator config: {e}", err=True)
        sys.exit(EXIT_USAGE)


# -- serve --------------------------------------------------------------------


@main.command()
@click.option("--listen", default="127.0.0.1:8080", show_default=True, metavar="HOST:PORT")
@click.option("--target", envvar="NXTBRIDGE_TARGET", metavar="ENDPOINT",
              help="Default robot endpoint offered to clients.")
@click.option("--telemetry-period", default=0.2, show_default=True,
              help="Seconds between telemetry broadcasts.")
@click.option("--static-dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Console UI bundle to serve at /.")
def serve(listen, target, telemetry_period, static_dir):
    """Run the WebSocket bridge service for browser consoles."""
    import uvicorn

    from .service import ServiceConfig, create_app

    host, sep, port_text = listen.rpartition(":")
    if not sep or not port_text.isdigit():
        click.echo(f"error: --listen needs HOST:PORT, got {listen!r}", err=True)
        sys.exit(EXIT_USAGE)
    app = create_app(
        ServiceConfig(
            default_target=target,
            telemetry_period_s=telemetry_period,
            static_dir=static_dir,
        )
    )
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")


# -- run ----------------------------------------------------------------------


@main.command()
@click.argument("program_file", type=click.Path(path_type=Path))
@click.option("--target", envvar="NXTBRIDGE_TARGET", required=True, metavar="ENDPOINT")
@click.option("--time-scale", default=1.0, show_default=True,
              help="Dwell multiplier; < 1 speeds playback up for dry runs.")
def run(program_file, target, time_scale):
    """Execute a .mynxt.json program file against a robot or simulator."""
    try:
        text = program_file.read_text(encoding="utf-8")
    except OSError as e:
        click.echo(f"error: cannot read {program_file}: {e}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        program = parse_program(text)
    except ParseError as e:
        click.echo(f"error: {program_file}: {e}", err=True)
        sys.exit(EXIT_USAGE)

    link = Link(target)
    warnings = link.subscribe()
    try:
        link.connect()
    except LinkError as e:
        _print_warnings(warnings)
        click.echo(f"error: cannot connect to {target}: {e}", err=True)
        sys.exit(EXIT_CONNECT)

    runner = ProgramRunner(link, time_scale=time_scale)
    total = len(program)

    def progress(status):
        step = program.steps[status.step_index]
        click.echo(f"step {status.step_index + 1}/{total}: {_describe_step(step)}")

    result = {}

    def worker():
        try:
            result["status"] = runner.run(program, on_progress=progress)
        except Exception as e:
            result["error"] = e

    thread = threading.Thread(target=worker)
    thread.start()
    interrupted = False
    try:
        while thread.is_alive():
            thread.join(timeout=0.1)
    except KeyboardInterrupt:
        interrupted = True
        runner.cancel()
        thread.join(timeout=5.0)
    link.disconnect()

    status = result.get("status")
    if interrupted or (status is not None and status.phase is RunPhase.CANCELLED):
        click.echo("cancelled")
        sys.exit(EXIT_INTERRUPT)
    if status is None or status.phase is RunPhase.FAILED:
        reason = status.reason if status else str(result.get("error", "runner did not finish"))
        click.echo(f"failed: {reason}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo("finished")


def _describe_step(step) -> str:
    bits = [step.op.value, f"{step.duration_ms} ms"]
    if step.power is not None:
        bits.append(f"power {step.power}")
    if step.frequency_hz is not None:
        bits.append(f"{step.frequency_hz} Hz")
    return " ".join(bits)


def _print_warnings(events) -> None:
    import queue

    while True:
        try:
            event = events.get_nowait()
        except queue.Empty:
            return
        if isinstance(event, LinkWarning):
            click.echo(event.text, err=True)


# -- teleop -------------------------------------------------------------------

_KEY_COMMANDS = {
    "w": DriveCommand.FORWARD,
    "s": DriveCommand.BACKWARD,
    "a": DriveCommand.SPIN_LEFT,
    "d": DriveCommand.SPIN_RIGHT,
    "\x1b[A": DriveCommand.FORWARD,
    "\x1b[B": DriveCommand.BACKWARD,
    "\x1b[D": DriveCommand.SPIN_LEFT,
    "\x1b[C": DriveCommand.SPIN_RIGHT,
}

_TOKEN_COMMANDS = {c.value: c for c in DriveCommand}


class TeleopSession:
    """Press/release mapping onto the link; release always brakes."""

    def __init__(self, link: Link, cfg: DriveConfig = DriveConfig()):
        self._link = link
        self._cfg = cfg
        self._active: DriveCommand | None = None

    def press(self, cmd: DriveCommand) -> None:
        self._active = None if cmd is DriveCommand.STOP else cmd
        for telegram in to_telegrams(map_command(cmd, self._cfg), self._cfg):
            self._link.send(telegram)

    def release(self) -> None:
        if self._active is not None:
            self._active = None
            for telegram in to_telegrams(map_command(DriveCommand.STOP, self._cfg), self._cfg):
                self._link.send(telegram)

    @property
    def active(self) -> DriveCommand | None:
        return self._active


@main.command()
@click.option("--target", envvar="NXTBRIDGE_TARGET", required=True, metavar="ENDPOINT")
@click.option("--hold-ms", default=200, show_default=True,
              help="Idle time after which a held key counts as released (TTY mode).")
def teleop(target, hold_ms):
    """Drive from the terminal: WASD / arrow keys, space stops, q quits.

    With stdin not a terminal, reads one command word per line instead
    (forward/backward/left/right/stop/quit).
    """
    link = Link(target)
    warnings = link.subscribe()
    try:
        link.connect()
    except LinkError as e:
        _print_warnings(warnings)
        click.echo(f"error: cannot connect to {target}: {e}", err=True)
        sys.exit(EXIT_CONNECT)
    session = TeleopSession(link)
    try:
        if sys.stdin.isatty():
            click.echo("driving: WASD or arrow keys; space stops; q quits")
            _teleop_tty(session, hold_ms)
        else:
            _teleop_script(session)
    except KeyboardInterrupt:
        link.disconnect()
        sys.exit(EXIT_INTERRUPT)
    link.disconnect()


def _teleop_script(session: TeleopSession) -> None:
    for line in sys.stdin:
        for token in line.split():
            token = token.lower()
            if token in ("quit", "exit", "q"):
                return
            cmd = _TOKEN_COMMANDS.get(token)
            if cmd is None:
                click.echo(f"unknown command {token!r}", err=True)
                continue
            session.press(cmd)
    # EOF counts as letting go of the controls
    session.release()


def _teleop_tty(session: TeleopSession, hold_ms: int) -> None:
    import termios
    import tty

    fd = sys.stdin.fileno()
    saved = termios.tcgetattr(fd)
    tty.setcbreak(fd)
    try:
        while True:
            ready, _, _ = select.select([fd], [], [], hold_ms / 1000.0)
            if not ready:
                session.release()
                continue
            key = sys.stdin.read(1)
            if key == "\x1b":
                ready, _, _ = select.select([fd], [], [], 0.05)
                if ready:
                    key += sys.stdin.read(2)
            if key in ("q", "\x03"):
                session.release()
                return
            if key == " ":
                session.press(DriveCommand.STOP)
                continue
            cmd = _KEY_COMMANDS.get(key)
            if cmd is not None:
                session.press(cmd)
    finally:
        termios.tcsetattr(fd, termios.TCSADRAIN, saved)


# -- decode -------------------------------------------------------------------


@main.command(name="decode")
@click.argument("hex_string")
def decode_cmd(hex_string):
    """Print a human-readable rendering of telegram bytes (hex)."""
    cleaned = hex_string.replace(":", " ")
    try:
        data = bytes.fromhex(cleaned)
    except ValueError:
        click.echo(f"error: not a hex byte string: {hex_string!r}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        telegram = decode_telegram(data)
    except CodecError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    click.echo(describe_telegram(telegram))


_OPCODE_NAMES = {
    0x03: "PlayTone",
    0x04: "SetOutputState",
    0x0B: "GetBatteryLevel",
    0x0D: "KeepAlive",
}


def describe_telegram(t: Telegram) -> str:
    suffix = {
        TelegramKind.COMMAND_NO_REPLY: " (no reply)",
        TelegramKind.COMMAND_WITH_REPLY: " (reply requested)",
        TelegramKind.REPLY: "",
    }[t.kind]
    body = t.body
    if isinstance(body, PlayTone):
        return f"PlayTone {body.frequency_hz} Hz {body.duration_ms} ms{suffix}"
    if isinstance(body, SetOutputState):
        return (
            f"SetOutputState port={body.port.name} power={body.power}"
            f" mode={_mode_names(body.mode)} regulation={body.regulation.name}"
            f" turn_ratio={body.turn_ratio} run_state={body.run_state.name}"
            f" tacho_limit={body.tacho_limit}{suffix}"
        )
    if isinstance(body, GetBatteryLevel):
        return f"GetBatteryLevel{suffix}"
    if isinstance(body, KeepAlive):
        return f"KeepAlive{suffix}"
    if isinstance(body, Reply):
        name = _OPCODE_NAMES.get(int(body.opcode_echo), f"0x{int(body.opcode_echo):02X}")
        text = f"Reply to {name} status={body.status}"
        if int(body.opcode_echo) == 0x0B and body.value is not None:
            text += f" battery {body.value} mV"
        elif int(body.opcode_echo) == 0x0D and body.value is not None:
            text += f" sleep limit {body.value} ms"
        return text
    assert isinstance(body, Unknown)
    return f"Unknown opcode 0x{body.data[0]:02X} ({len(body.data)} bytes){suffix}"


def _mode_names(mode: OutputMode) -> str:
    if not mode:
        return "0"
    names = [flag.name for flag in (OutputMode.MOTOR_ON, OutputMode.BRAKE, OutputMode.REGULATED)
             if flag in mode]
    return "|".join(names)


# -- plot ---------------------------------------------------------------------


@main.command()
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path),
              help="Figure path [default: trace file with .png suffix].")
def plot(trace_file, output):
    """Render a simulator trace CSV to a figure."""
    out = output or trace_file.with_suffix(".png")
    try:
        plots.render_trace_file(trace_file, out)
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    click.echo(f"figure written to {out}")


if __name__ == "__main__":
    main()
