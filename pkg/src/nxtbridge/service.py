"""Session service bridging browser consoles to one robot link.

One WebSocket per client, one JSON object per text frame.

Client to server:  hello{role}, screen{screen}, connect{target},
disconnect{}, drive{cmd}, tilt{pitch,roll}, speech{utterance},
program.load{program}, program.run{}, program.cancel{}.

Server to client:  state{link,screen,run}, guidance{text},
warning{code,text}, error{code,reason}, progress{step},
telemetry{battery_mv?,pose?}, speech.nomatch{utterance}.

At most one client holds the controller role at a time (first come); every
other client observes.  All session mutations are serialized through one
lock; broadcasts fan out through per-connection queues without blocking
the session.  Guidance is recomputed and broadcast whenever the (screen,
link, run) triple changes, and a schema-violating message always gets an
"error" answer with the connection kept open.

Speech recognition and tilt sensing live in the browser: this service only
ever sees utterance strings and angle pairs.
"""

from __future__ import annotations

import asyncio
import json
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import simbrick
from .drive import DriveCommand, DriveConfig, Tilt, map_command, map_tilt, map_utterance, to_telegrams
from .guidance import Screen, guidance_for
from .link import (
    IllegalState,
    Link,
    LinkConfig,
    LinkError,
    LinkPhase,
    LinkState,
    NotConnected,
    ReplyTimeout,
    BrickError,
    StateChanged,
    Warning as LinkWarning,
)
from .logic import (
    AlreadyRunning,
    LogicProgram,
    ParseError,
    ProgramRunner,
    RunPhase,
    RunStatus,
    program_from_obj,
)
from .telegram import GetBatteryLevel, command


@dataclass
class ServiceConfig:
    default_target: Optional[str] = None
    telemetry_period_s: float = 0.2
    static_dir: Optional[Path] = None
    link_config: LinkConfig = LinkConfig()
    drive_config: DriveConfig = DriveConfig()


class Role:
    CONTROLLER = "controller"
    OBSERVER = "observer"


class ClientHandle:
    def __init__(self, send_fn: Callable[[dict], None]):
        self._send_fn = send_fn
        self.role = Role.OBSERVER

    def send(self, message: dict) -> None:
        try:
            self._send_fn(message)
        except Exception:
            pass  # client is gone; detach will clean up


class _BadMessage(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


_DRIVE_COMMANDS = {c.value: c for c in DriveCommand}
_SCREENS = {s.value: s for s in Screen}

_LINK_ERROR_CODES = (
    (NotConnected, "not-connected"),
    (IllegalState, "illegal-state"),
    (ReplyTimeout, "reply-timeout"),
    (BrickError, "brick-error"),
)


class Session:
    """Owns the link, screen, program, and controller slot for one robot."""

    def __init__(self, cfg: ServiceConfig):
        self._cfg = cfg
        self._lock = threading.RLock()
        self._clients: list[ClientHandle] = []
        self._controller: Optional[ClientHandle] = None
        self._screen = Screen.HOME
        self._link: Optional[Link] = None
        self._program: Optional[LogicProgram] = None
        self._runner: Optional[ProgramRunner] = None
        self._run_status = RunStatus.idle()
        self._pump_stop: Optional[threading.Event] = None
        self._telemetry_stop = threading.Event()
        self._telemetry_thread: Optional[threading.Thread] = None

    # -- client management ----------------------------------------------------

    def attach(self, send_fn: Callable[[dict], None]) -> ClientHandle:
        handle = ClientHandle(send_fn)
        with self._lock:
            self._clients.append(handle)
        return handle

    def detach(self, handle: ClientHandle) -> None:
        with self._lock:
            if handle in self._clients:
                self._clients.remove(handle)
            was_controller = self._controller is handle
            if was_controller:
                self._controller = None
        if was_controller:
            self._safety_stop()

    def _safety_stop(self) -> None:
        """Brake the wheels when the controller goes away mid-drive."""
        link = self._link
        if link is not None and link.state.phase is LinkPhase.CONNECTED:
            try:
                for telegram in to_telegrams(
                    map_command(DriveCommand.STOP, self._cfg.drive_config),
                    self._cfg.drive_config,
                ):
                    link.send(telegram)
            except LinkError:
                pass

    # -- lifecycle --------------------------------------------------------------

    def start_telemetry(self) -> None:
        if self._telemetry_thread is not None:
            return
        self._telemetry_stop.clear()
        self._telemetry_thread = threading.Thread(target=self._telemetry_loop, daemon=True)
        self._telemetry_thread.start()

    def shutdown(self) -> None:
        self._telemetry_stop.set()
        if self._telemetry_thread is not None:
            self._telemetry_thread.join(timeout=2.0)
            self._telemetry_thread = None
        runner = self._runner
        if runner is not None:
            runner.cancel()
        if self._pump_stop is not None:
            self._pump_stop.set()
        link = self._link
        if link is not None:
            link.disconnect()

    # -- message handling --------------------------------------------------------

    def handle_message(self, handle: ClientHandle, text: str) -> None:
        try:
            msg = json.loads(text)
        except json.JSONDecodeError as e:
            handle.send(_error("bad-message", f"not valid JSON: {e.msg}"))
            return
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            handle.send(_error("bad-message", "message must be an object with a string 'type'"))
            return
        msg_type = msg["type"]
        handler = _HANDLERS.get(msg_type)
        if handler is None:
            handle.send(_error("bad-message", f"unknown message type {msg_type!r}"))
            return
        if msg_type != "hello" and handle.role != Role.CONTROLLER:
            handle.send(_error("not-controller", "only the controller may do that"))
            return
        try:
            handler(self, handle, msg)
        except _BadMessage as e:
            handle.send(_error("bad-message", e.reason))
        except ParseError as e:
            handle.send(_error("parse", str(e)))
        except AlreadyRunning as e:
            handle.send(_error("already-running", str(e)))
        except LinkError as e:
            handle.send(_error(_link_error_code(e), str(e)))

    def _on_hello(self, handle: ClientHandle, msg: dict) -> None:
        role = _expect_str(msg, "role")
        if role not in (Role.CONTROLLER, Role.OBSERVER):
            raise _BadMessage(f"unknown role {role!r}")
        if role == Role.CONTROLLER:
            with self._lock:
                granted = self._controller is None or self._controller is handle
                if granted:
                    self._controller = handle
                    handle.role = Role.CONTROLLER
            if not granted:
                handle.send(_error("not-controller", "another client already controls the robot"))
        handle.send(self._state_message())
        handle.send(self._guidance_message())

    def _on_screen(self, handle: ClientHandle, msg: dict) -> None:
        name = _expect_str(msg, "screen")
        screen = _SCREENS.get(name)
        if screen is None:
            raise _BadMessage(f"unknown screen {name!r}")
        with self._lock:
            self._screen = screen
        self._broadcast_state()

    def _on_connect(self, handle: ClientHandle, msg: dict) -> None:
        target = msg.get("target", self._cfg.default_target)
        if not isinstance(target, str) or not target:
            raise _BadMessage("no connect target configured or given")
        with self._lock:
            link = self._ensure_link(target)
        try:
            link.connect()
        except IllegalState:
            raise
        except LinkError:
            # the event pump has already broadcast the warning and fault
            pass

    def _on_disconnect(self, handle: ClientHandle, msg: dict) -> None:
        link = self._link
        was_connected = link is not None and link.state.phase is LinkPhase.CONNECTED
        if link is not None:
            link.disconnect()
        if not was_connected:
            # idempotent disconnect emits no link event; answer regardless
            self._broadcast_state()

    def _on_drive(self, handle: ClientHandle, msg: dict) -> None:
        name = _expect_str(msg, "cmd")
        cmd = _DRIVE_COMMANDS.get(name)
        if cmd is None:
            raise _BadMessage(f"unknown drive command {name!r}")
        self._send_pair(map_command(cmd, self._cfg.drive_config))

    def _on_tilt(self, handle: ClientHandle, msg: dict) -> None:
        pitch = _expect_number(msg, "pitch")
        roll = _expect_number(msg, "roll")
        self._send_pair(map_tilt(Tilt(pitch, roll), self._cfg.drive_config))

    def _on_speech(self, handle: ClientHandle, msg: dict) -> None:
        utterance = _expect_str(msg, "utterance")
        cmd = map_utterance(utterance)
        if cmd is None:
            handle.send({"type": "speech.nomatch", "utterance": utterance})
            return
        self._send_pair(map_command(cmd, self._cfg.drive_config))

    def _send_pair(self, pair) -> None:
        link = self._require_link()
        for telegram in to_telegrams(pair, self._cfg.drive_config):
            link.send(telegram)
        self._broadcast_state()

    def _on_program_load(self, handle: ClientHandle, msg: dict) -> None:
        if "program" not in msg:
            raise _BadMessage("missing field 'program'")
        program = program_from_obj(msg["program"])
        with self._lock:
            self._program = program
        self._broadcast_state()

    def _on_program_run(self, handle: ClientHandle, msg: dict) -> None:
        with self._lock:
            program = self._program
            if program is None:
                handle.send(_error("no-program", "load a program before running"))
                return
            if self._run_status.phase is RunPhase.RUNNING:
                raise AlreadyRunning("a program is already running")
            link = self._require_link()
            runner = ProgramRunner(link, self._cfg.drive_config)
            if link.state.phase is not LinkPhase.CONNECTED:
                raise NotConnected("connect before running a program")
            self._runner = runner
            self._set_run_status(RunStatus.running(0), broadcast=False)
        thread = threading.Thread(
            target=self._run_program, args=(runner, program), daemon=True
        )
        thread.start()
        self._broadcast_state()

    def _run_program(self, runner: ProgramRunner, program: LogicProgram) -> None:
        def progress(status: RunStatus) -> None:
            self._set_run_status(status)
            self._broadcast({"type": "progress", "step": status.step_index})

        try:
            final = runner.run(program, on_progress=progress)
        except LinkError as e:
            final = RunStatus.failed(0, str(e))
        self._set_run_status(final)

    def _on_program_cancel(self, handle: ClientHandle, msg: dict) -> None:
        runner = self._runner
        if runner is not None:
            runner.cancel()
        self._broadcast_state()

    # -- link plumbing -------------------------------------------------------------

    def _require_link(self) -> Link:
        link = self._link
        if link is None:
            raise NotConnected("no link: press CONNECT first")
        return link

    def _ensure_link(self, target: str) -> Link:
        link = self._link
        if link is not None and str(link.endpoint) == target:
            return link
        if link is not None:
            link.disconnect()
        if self._pump_stop is not None:
            self._pump_stop.set()
        link = Link(target, self._cfg.link_config)
        events = link.subscribe()
        stop = threading.Event()
        pump = threading.Thread(target=self._pump_events, args=(events, stop), daemon=True)
        pump.start()
        self._link = link
        self._pump_stop = stop
        return link

    def _pump_events(self, events, stop: threading.Event) -> None:
        import queue as _queue

        while not stop.is_set():
            try:
                event = events.get(timeout=0.1)
            except _queue.Empty:
                continue
            if isinstance(event, StateChanged):
                self._broadcast_state()
            elif isinstance(event, LinkWarning):
                self._broadcast({"type": "warning", "code": event.code, "text": event.text})

    # -- telemetry -------------------------------------------------------------------

    def _telemetry_loop(self) -> None:
        if self._cfg.telemetry_period_s <= 0:
            return
        while not self._telemetry_stop.wait(self._cfg.telemetry_period_s):
            link = self._link
            if link is None or link.state.phase is not LinkPhase.CONNECTED:
                continue
            message: dict = {"type": "telemetry"}
            try:
                reply = link.send(command(GetBatteryLevel(), reply=True))
                message["battery_mv"] = reply.value
            except LinkError:
                pass  # omit the field, keep the stream alive
            server = simbrick.find_server(link.endpoint)
            if server is not None:
                pose, _ = server.snapshot()
                message["pose"] = {
                    "x": pose.x_m,
                    "y": pose.y_m,
                    "theta": pose.theta_rad,
                }
            if len(message) > 1:
                self._broadcast(message)

    # -- broadcasting ---------------------------------------------------------------

    def _link_state(self) -> LinkState:
        link = self._link
        return link.state if link is not None else LinkState.disconnected()

    def _set_run_status(self, status: RunStatus, broadcast: bool = True) -> None:
        with self._lock:
            self._run_status = status
        if broadcast:
            self._broadcast_state()

    def _state_message(self) -> dict:
        with self._lock:
            screen = self._screen
            run = self._run_status
        link_state = self._link_state()
        link_obj: dict = {"state": link_state.phase.value}
        if link_state.reason is not None:
            link_obj["reason"] = link_state.reason
        run_obj: dict = {"state": run.phase.value}
        if run.step_index is not None:
            run_obj["step"] = run.step_index
        if run.reason is not None:
            run_obj["reason"] = run.reason
        return {"type": "state", "link": link_obj, "screen": screen.value, "run": run_obj}

    def _guidance_message(self) -> dict:
        with self._lock:
            screen = self._screen
            run = self._run_status
        return {
            "type": "guidance",
            "text": guidance_for(screen, self._link_state(), run),
        }

    def _broadcast_state(self) -> None:
        self._broadcast(self._state_message())
        self._broadcast(self._guidance_message())

    def _broadcast(self, message: dict) -> None:
        with self._lock:
            clients = list(self._clients)
        for client in clients:
            client.send(message)


def _error(code: str, reason: str) -> dict:
    return {"type": "error", "code": code, "reason": reason}


def _link_error_code(e: LinkError) -> str:
    for cls, code in _LINK_ERROR_CODES:
        if isinstance(e, cls):
            return code
    return "link"


def _expect_str(msg: dict, key: str) -> str:
    value = msg.get(key)
    if not isinstance(value, str):
        raise _BadMessage(f"field {key!r} must be a string")
    return value


def _expect_number(msg: dict, key: str) -> float:
    value = msg.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _BadMessage(f"field {key!r} must be a number")
    return float(value)


_HANDLERS = {
    "hello": Session._on_hello,
    "screen": Session._on_screen,
    "connect": Session._on_connect,
    "disconnect": Session._on_disconnect,
    "drive": Session._on_drive,
    "tilt": Session._on_tilt,
    "speech": Session._on_speech,
    "program.load": Session._on_program_load,
    "program.run": Session._on_program_run,
    "program.cancel": Session._on_program_cancel,
}


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    """Build the FastAPI app: /healthz, /ws, and optional static console files."""
    cfg = config or ServiceConfig()
    session = Session(cfg)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        session.start_telemetry()
        yield
        await asyncio.to_thread(session.shutdown)

    app = FastAPI(title="nxtbridge", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.session = session

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        loop = asyncio.get_running_loop()
        outbound: asyncio.Queue = asyncio.Queue()

        def send_fn(message: dict) -> None:
            try:
                loop.call_soon_threadsafe(outbound.put_nowait, message)
            except RuntimeError:
                pass  # loop already closed

        async def sender():
            while True:
                message = await outbound.get()
                await ws.send_text(json.dumps(message, separators=(",", ":")))

        client = session.attach(send_fn)
        sender_task = asyncio.create_task(sender())
        try:
            while True:
                text = await ws.receive_text()
                await asyncio.to_thread(session.handle_message, client, text)
        except WebSocketDisconnect:
            pass
        finally:
            sender_task.cancel()
            await asyncio.to_thread(session.detach, client)

    if cfg.static_dir is not None:
        app.mount("/", StaticFiles(directory=cfg.static_dir, html=True), name="console")

    return app
