"""Linear logic programs: the document a user prebuilds and then runs.

A program is an ordered list of at most 64 timed steps; each step is one of
forward / backward / spin_left / spin_right / pause / tone and lasts
between 1 ms and 60 s.  There are no loops or branches by design -- the
programs stay short, observable, and composable.

Program files are UTF-8 JSON (extension ``.mynxt.json``) with a mandatory
schema version:

    {"version":1,"name":"demo","steps":[
        {"op":"forward","ms":1000,"power":75},
        {"op":"pause","ms":500},
        {"op":"tone","ms":500,"hz":440}]}

:func:`serialize` is canonical -- fixed key order, no insignificant
whitespace -- so golden-file comparison is byte-stable, and
``parse(serialize(p)) == p`` for every valid program.

:func:`compile_program` lowers a program to timed actions (telegrams plus
a dwell); motion steps brake after their dwell and the action list always
ends with a stop-all, so a finished, cancelled, or failed run leaves the
motors braked.  :class:`ProgramRunner` plays the actions against a link,
emitting a running status per step, and acknowledges cancel within 100 ms.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from . import drive
from .link import Link, LinkError, LinkPhase, NotConnected
from .telegram import Telegram, stop_all

MAX_STEPS = 64
MAX_STEP_MS = 60_000
MAX_NAME_CHARS = 64
FORMAT_VERSION = 1
PROGRAM_SUFFIX = ".mynxt.json"

DEFAULT_POWER = 75


class ProgramFull(ValueError):
    """The program already holds the maximum number of steps."""


class IndexOutOfRange(IndexError):
    """No step at the given index."""


class AlreadyRunning(RuntimeError):
    """A run is already in progress on this link."""


class ParseError(ValueError):
    """Program text violates the schema; carries position context."""

    def __init__(self, reason: str, line: Optional[int] = None,
                 column: Optional[int] = None, step: Optional[int] = None):
        self.reason = reason
        self.line = line
        self.column = column
        self.step = step
        where = ""
        if line is not None:
            where = f" at line {line}, column {column}"
        elif step is not None:
            where = f" in step {step}"
        super().__init__(f"{reason}{where}")


class StepOp(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    SPIN_LEFT = "spin_left"
    SPIN_RIGHT = "spin_right"
    PAUSE = "pause"
    TONE = "tone"

    @property
    def is_motion(self) -> bool:
        return self in (StepOp.FORWARD, StepOp.BACKWARD, StepOp.SPIN_LEFT, StepOp.SPIN_RIGHT)


_MOTION_COMMANDS = {
    StepOp.FORWARD: drive.DriveCommand.FORWARD,
    StepOp.BACKWARD: drive.DriveCommand.BACKWARD,
    StepOp.SPIN_LEFT: drive.DriveCommand.SPIN_LEFT,
    StepOp.SPIN_RIGHT: drive.DriveCommand.SPIN_RIGHT,
}


@dataclass(frozen=True)
class LogicStep:
    """One timed action; fields are present exactly per op."""

    op: StepOp
    duration_ms: int
    power: Optional[int] = None        # motion ops only
    frequency_hz: Optional[int] = None  # tone only

    def __post_init__(self):
        if type(self.duration_ms) is not int or not 1 <= self.duration_ms <= MAX_STEP_MS:
            raise ValueError(
                f"duration_ms must be an integer in [1, {MAX_STEP_MS}], got {self.duration_ms!r}"
            )
        if self.op.is_motion:
            if self.power is None:
                object.__setattr__(self, "power", DEFAULT_POWER)
            if type(self.power) is not int or not 1 <= self.power <= 100:
                raise ValueError(f"power must be an integer in [1, 100], got {self.power!r}")
            if self.frequency_hz is not None:
                raise ValueError(f"{self.op.value} step carries no frequency")
        elif self.op is StepOp.TONE:
            if self.power is not None:
                raise ValueError("tone step carries no power")
            if type(self.frequency_hz) is not int or not 200 <= self.frequency_hz <= 14000:
                raise ValueError(
                    f"frequency_hz must be an integer in [200, 14000], got {self.frequency_hz!r}"
                )
        else:  # pause
            if self.power is not None or self.frequency_hz is not None:
                raise ValueError("pause step carries no power or frequency")


@dataclass(frozen=True)
class LogicProgram:
    name: str = ""
    steps: tuple[LogicStep, ...] = ()
    version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if len(self.name) > MAX_NAME_CHARS:
            raise ValueError(f"name exceeds {MAX_NAME_CHARS} characters")
        if len(self.steps) > MAX_STEPS:
            raise ValueError(f"program exceeds {MAX_STEPS} steps")
        if self.version != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {self.version!r}")

    def __len__(self) -> int:
        return len(self.steps)


def append(prog: LogicProgram, step: LogicStep) -> LogicProgram:
    if len(prog.steps) >= MAX_STEPS:
        raise ProgramFull(f"program already has {MAX_STEPS} steps")
    return LogicProgram(prog.name, prog.steps + (step,), prog.version)


def remove(prog: LogicProgram, index: int) -> LogicProgram:
    if not 0 <= index < len(prog.steps):
        raise IndexOutOfRange(f"no step at index {index} (length {len(prog.steps)})")
    return LogicProgram(prog.name, prog.steps[:index] + prog.steps[index + 1:], prog.version)


def clear(prog: LogicProgram) -> LogicProgram:
    return LogicProgram(prog.name, (), prog.version)


# -- serialization -----------------------------------------------------------


def _step_to_obj(step: LogicStep) -> dict:
    obj = {"op": step.op.value, "ms": step.duration_ms}
    if step.op.is_motion:
        obj["power"] = step.power
    elif step.op is StepOp.TONE:
        obj["hz"] = step.frequency_hz
    return obj


def program_to_obj(prog: LogicProgram) -> dict:
    return {
        "version": prog.version,
        "name": prog.name,
        "steps": [_step_to_obj(s) for s in prog.steps],
    }


def serialize(prog: LogicProgram) -> str:
    """Canonical text form: fixed key order, no insignificant whitespace."""
    return json.dumps(program_to_obj(prog), separators=(",", ":"), ensure_ascii=False)


def _require(obj: dict, key: str, expected: type, step: Optional[int] = None):
    if key not in obj:
        raise ParseError(f"missing field {key!r}", step=step)
    value = obj[key]
    if not isinstance(value, expected) or isinstance(value, bool):
        raise ParseError(f"field {key!r} must be {expected.__name__}", step=step)
    return value


def _step_from_obj(obj, index: int) -> LogicStep:
    if not isinstance(obj, dict):
        raise ParseError("step must be an object", step=index)
    op_name = _require(obj, "op", str, step=index)
    try:
        op = StepOp(op_name)
    except ValueError:
        raise ParseError(f"unknown op {op_name!r}", step=index) from None
    ms = _require(obj, "ms", int, step=index)
    allowed = {"op", "ms"}
    kwargs = {}
    if op.is_motion:
        allowed.add("power")
        if "power" in obj:
            kwargs["power"] = _require(obj, "power", int, step=index)
    elif op is StepOp.TONE:
        allowed.add("hz")
        kwargs["frequency_hz"] = _require(obj, "hz", int, step=index)
    extras = set(obj) - allowed
    if extras:
        raise ParseError(f"unexpected field {sorted(extras)[0]!r}", step=index)
    try:
        return LogicStep(op, ms, **kwargs)
    except ValueError as e:
        raise ParseError(str(e), step=index) from None


def program_from_obj(obj) -> LogicProgram:
    """Validate a decoded JSON object against the program schema."""
    if not isinstance(obj, dict):
        raise ParseError("program must be a JSON object")
    version = _require(obj, "version", int)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}")
    name = _require(obj, "name", str)
    steps_obj = _require(obj, "steps", list)
    extras = set(obj) - {"version", "name", "steps"}
    if extras:
        raise ParseError(f"unexpected field {sorted(extras)[0]!r}")
    if len(steps_obj) > MAX_STEPS:
        raise ParseError(f"program exceeds {MAX_STEPS} steps")
    steps = tuple(_step_from_obj(s, i) for i, s in enumerate(steps_obj))
    try:
        return LogicProgram(name=name, steps=steps, version=version)
    except ValueError as e:
        raise ParseError(str(e)) from None


def parse(text: str) -> LogicProgram:
    """Inverse of :func:`serialize`; rejects anything outside the schema."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, column=e.colno) from None
    return program_from_obj(obj)


# -- execution ---------------------------------------------------------------


class RunPhase(Enum):
    IDLE = "idle"
    RUNNING = "running"
    FINISHED = "finished"
    CANCELLED = "cancelled"
    FAILED = "failed"


@dataclass(frozen=True)
class RunStatus:
    phase: RunPhase
    step_index: Optional[int] = None
    reason: Optional[str] = None

    @classmethod
    def idle(cls) -> "RunStatus":
        return cls(RunPhase.IDLE)

    @classmethod
    def running(cls, step_index: int) -> "RunStatus":
        return cls(RunPhase.RUNNING, step_index)

    @classmethod
    def finished(cls) -> "RunStatus":
        return cls(RunPhase.FINISHED)

    @classmethod
    def cancelled(cls, step_index: int) -> "RunStatus":
        return cls(RunPhase.CANCELLED, step_index)

    @classmethod
    def failed(cls, step_index: int, reason: str) -> "RunStatus":
        return cls(RunPhase.FAILED, step_index, reason)


@dataclass(frozen=True)
class TimedAction:
    """Telegrams to emit, then a dwell; step_index is None for the terminal stop."""

    telegrams: tuple[Telegram, ...]
    dwell_ms: int
    step_index: Optional[int]


def compile_program(
    prog: LogicProgram, cfg: drive.DriveConfig = drive.DriveConfig()
) -> tuple[TimedAction, ...]:
    """Lower a program to its exact wire timeline.

    Motion steps run both wheels for the step's dwell and then brake; a
    pause is a bare dwell; a tone plays and dwells for its duration.  The
    list always terminates with a stop-all telegram.
    """
    actions: list[TimedAction] = []
    for i, step in enumerate(prog.steps):
        if step.op.is_motion:
            pair = drive.map_command(_MOTION_COMMANDS[step.op], _with_power(cfg, step.power))
            actions.append(TimedAction(drive.to_telegrams(pair, cfg), step.duration_ms, i))
            actions.append(TimedAction(drive.to_telegrams(drive.PowerPair(0, 0), cfg), 0, i))
        elif step.op is StepOp.PAUSE:
            actions.append(TimedAction((), step.duration_ms, i))
        else:
            actions.append(
                TimedAction(
                    (drive.tone_telegram(step.frequency_hz, step.duration_ms),),
                    step.duration_ms,
                    i,
                )
            )
    actions.append(TimedAction((stop_all(),), 0, None))
    return tuple(actions)


def _with_power(cfg: drive.DriveConfig, power: int) -> drive.DriveConfig:
    if power == cfg.base_power:
        return cfg
    return drive.DriveConfig(
        base_power=power,
        deadzone_deg=cfg.deadzone_deg,
        full_scale_deg=cfg.full_scale_deg,
        left_port=cfg.left_port,
        right_port=cfg.right_port,
    )


def transcript(actions: tuple[TimedAction, ...]) -> tuple[Telegram, ...]:
    """Flatten the actions into the exact telegram sequence seen on the wire."""
    return tuple(t for action in actions for t in action.telegrams)


def abort_telegrams(cfg: drive.DriveConfig = drive.DriveConfig()) -> tuple[Telegram, ...]:
    """Brake both wheels, then stop everything: the epilogue of any aborted run."""
    return drive.to_telegrams(drive.PowerPair(0, 0), cfg) + (stop_all(),)


class ProgramRunner:
    """Plays one program at a time against a link.

    ``run`` blocks until the program finishes, fails, or is cancelled;
    callers who need it in the background start their own thread.
    ``cancel`` may be called from any thread and takes effect within
    100 ms; the motors are braked on every exit path.  ``time_scale``
    shrinks dwells for tests (the telegram sequence is unchanged).
    """

    def __init__(
        self,
        link: Link,
        cfg: drive.DriveConfig = drive.DriveConfig(),
        time_scale: float = 1.0,
    ):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self._link = link
        self._cfg = cfg
        self._time_scale = time_scale
        self._cancel = threading.Event()
        self._status_lock = threading.Lock()
        self._status = RunStatus.idle()

    @property
    def status(self) -> RunStatus:
        with self._status_lock:
            return self._status

    def cancel(self) -> None:
        """Request cancellation; a no-op when nothing is running."""
        self._cancel.set()

    def run(
        self,
        prog: LogicProgram,
        on_progress: Optional[Callable[[RunStatus], None]] = None,
    ) -> RunStatus:
        if self._link.state.phase is not LinkPhase.CONNECTED:
            raise NotConnected("run requires a connected link")
        if not self._link.exclusive.acquire(blocking=False):
            raise AlreadyRunning("another run is in progress on this link")
        try:
            self._cancel.clear()
            return self._execute(compile_program(prog, self._cfg), on_progress)
        finally:
            self._link.exclusive.release()

    def _execute(self, actions, on_progress) -> RunStatus:
        current_step = 0
        started = -1
        try:
            for action in actions:
                if self._cancel.is_set():
                    return self._abort(RunStatus.cancelled(current_step))
                if action.step_index is not None:
                    current_step = action.step_index
                    if current_step > started:
                        started = current_step
                        self._set_status(RunStatus.running(current_step), on_progress)
                for telegram in action.telegrams:
                    self._link.send(telegram)
                if action.dwell_ms:
                    if self._cancel.wait(action.dwell_ms * self._time_scale / 1000.0):
                        return self._abort(RunStatus.cancelled(current_step))
            return self._set_status(RunStatus.finished(), on_progress)
        except LinkError as e:
            return self._abort(RunStatus.failed(current_step, str(e)))

    def _abort(self, status: RunStatus) -> RunStatus:
        try:
            for telegram in abort_telegrams(self._cfg):
                self._link.send(telegram)
        except LinkError:
            pass
        return self._set_status(status, None)

    def _set_status(self, status: RunStatus, on_progress) -> RunStatus:
        with self._status_lock:
            self._status = status
        if on_progress is not None and status.phase is RunPhase.RUNNING:
            on_progress(status)
        return status
