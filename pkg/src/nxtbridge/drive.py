"""Map the three direct-control inputs to motor power pairs and telegrams.

The three modalities (arrow-key buttons, device tilt, recognized speech)
all funnel into a :class:`PowerPair`, which :func:`to_telegrams` turns into
one SetOutputState per wheel port.  Left/right turns spin in place; the
device at rest maps to the robot at rest.

Recognition itself is external: :func:`map_utterance` consumes the
recognizer's output string and only ever answers from a closed vocabulary,
never a guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

from .telegram import (
    MotorPort,
    MotorRunState,
    OutputMode,
    PlayTone,
    Regulation,
    SetOutputState,
    Telegram,
    command,
)


class DriveCommand(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    SPIN_LEFT = "left"
    SPIN_RIGHT = "right"
    STOP = "stop"


def _clamp_power(value: int) -> int:
    return max(-100, min(100, value))


@dataclass(frozen=True)
class PowerPair:
    """Per-wheel power in percent, clamped into [-100, 100] on construction."""

    left: int
    right: int

    def __post_init__(self):
        object.__setattr__(self, "left", _clamp_power(int(self.left)))
        object.__setattr__(self, "right", _clamp_power(int(self.right)))


@dataclass(frozen=True)
class Tilt:
    """Device attitude: nose-down pitch positive, right-edge-down roll positive."""

    pitch_deg: float
    roll_deg: float


@dataclass(frozen=True)
class DriveConfig:
    base_power: int = 75
    deadzone_deg: float = 10.0
    full_scale_deg: float = 45.0
    left_port: MotorPort = MotorPort.B
    right_port: MotorPort = MotorPort.C

    def __post_init__(self):
        if not 0 < self.base_power <= 100:
            raise ValueError(f"base_power must be in (0, 100], got {self.base_power}")
        if not 0 <= self.deadzone_deg < self.full_scale_deg <= 90:
            raise ValueError(
                "need 0 <= deadzone_deg < full_scale_deg <= 90, got "
                f"deadzone={self.deadzone_deg} full_scale={self.full_scale_deg}"
            )


DEFAULT_VOCABULARY: Mapping[str, DriveCommand] = {
    "forward": DriveCommand.FORWARD,
    "backward": DriveCommand.BACKWARD,
    "back": DriveCommand.BACKWARD,
    "left": DriveCommand.SPIN_LEFT,
    "right": DriveCommand.SPIN_RIGHT,
    "stop": DriveCommand.STOP,
}

_COMMAND_NAMES = {c.value: c for c in DriveCommand}


def load_vocabulary(text: str) -> dict[str, DriveCommand]:
    """Parse a vocabulary config: one ``utterance=command`` pair per line.

    Blank lines and ``#`` comments are skipped.  Commands must be one of
    forward/backward/left/right/stop.  Utterances are stored lowercased.
    """
    vocab: dict[str, DriveCommand] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        utterance, sep, cmd_name = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'utterance=command', got {raw!r}")
        utterance = utterance.strip().lower()
        cmd_name = cmd_name.strip().lower()
        if not utterance:
            raise ValueError(f"line {lineno}: empty utterance")
        if cmd_name not in _COMMAND_NAMES:
            raise ValueError(f"line {lineno}: unknown command {cmd_name!r}")
        vocab[utterance] = _COMMAND_NAMES[cmd_name]
    return vocab


def map_command(cmd: DriveCommand, cfg: DriveConfig = DriveConfig()) -> PowerPair:
    """Arrow-key command to wheel powers at the configured base power."""
    p = cfg.base_power
    table = {
        DriveCommand.FORWARD: (p, p),
        DriveCommand.BACKWARD: (-p, -p),
        DriveCommand.SPIN_LEFT: (-p, p),
        DriveCommand.SPIN_RIGHT: (p, -p),
        DriveCommand.STOP: (0, 0),
    }
    return PowerPair(*table[cmd])


def _sanitize_angle(deg: float) -> float:
    if not math.isfinite(deg):
        return 0.0
    return max(-90.0, min(90.0, deg))


def _axis_scale(angle_deg: float, cfg: DriveConfig) -> float:
    """Deadzone-then-linear law in percent: 0 inside the deadzone, +/-100 at full scale."""
    mag = abs(angle_deg)
    if mag < cfg.deadzone_deg:
        return 0.0
    span = cfg.full_scale_deg - cfg.deadzone_deg
    return math.copysign(min(1.0, (mag - cfg.deadzone_deg) / span) * 100.0, angle_deg)


def _round_half_away(x: float) -> int:
    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


def map_tilt(tilt: Tilt, cfg: DriveConfig = DriveConfig()) -> PowerPair:
    """Device tilt to wheel powers: pitch drives, roll turns.

    Total over all inputs: non-finite angles count as 0 and magnitudes are
    capped at 90 degrees before mapping.
    """
    pitch = _sanitize_angle(tilt.pitch_deg)
    roll = _sanitize_angle(tilt.roll_deg)
    forward = _axis_scale(pitch, cfg)
    turn = _axis_scale(roll, cfg)
    left = _round_half_away(max(-100.0, min(100.0, forward + turn)))
    right = _round_half_away(max(-100.0, min(100.0, forward - turn)))
    return PowerPair(left, right)


def map_utterance(
    utterance: str, vocab: Optional[Mapping[str, DriveCommand]] = None
) -> Optional[DriveCommand]:
    """Look up a recognized utterance; None means no match, never a guess.

    Matching is case-insensitive on the whitespace-trimmed string.
    """
    if vocab is None:
        vocab = DEFAULT_VOCABULARY
    return vocab.get(utterance.strip().lower())


def to_telegrams(pair: PowerPair, cfg: DriveConfig = DriveConfig()) -> tuple[Telegram, Telegram]:
    """Two no-reply SetOutputState telegrams (left port first, then right).

    A (0, 0) pair brakes both wheels (power 0, brake mode, idle run state);
    anything else runs the motors speed-regulated with no tacho limit.
    """
    if pair.left == 0 and pair.right == 0:
        return (_brake(cfg.left_port), _brake(cfg.right_port))
    return (
        _run(cfg.left_port, pair.left),
        _run(cfg.right_port, pair.right),
    )


def _run(port: MotorPort, power: int) -> Telegram:
    return command(
        SetOutputState(
            port=port,
            power=power,
            mode=OutputMode.MOTOR_ON | OutputMode.BRAKE | OutputMode.REGULATED,
            regulation=Regulation.SPEED,
            turn_ratio=0,
            run_state=MotorRunState.RUNNING,
            tacho_limit=0,
        )
    )


def _brake(port: MotorPort) -> Telegram:
    return command(
        SetOutputState(
            port=port,
            power=0,
            mode=OutputMode.BRAKE,
            regulation=Regulation.IDLE,
            turn_ratio=0,
            run_state=MotorRunState.IDLE,
            tacho_limit=0,
        )
    )


def tone_telegram(frequency_hz: int, duration_ms: int) -> Telegram:
    """No-reply PlayTone, the feedback beep used by programs."""
    return command(PlayTone(frequency_hz, duration_ms))
