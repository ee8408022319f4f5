"""Direct-command telegrams and their wire form.

Wire layout (all multi-byte integers little-endian):

    frame    := len_lo len_hi telegram       (length covers the telegram only)
    telegram := kind opcode payload
    reply    := 0x02 opcode_echo status payload

Command payloads:

    0x03 PlayTone        freq:u16 duration_ms:u16
    0x04 SetOutputState  port:u8 power:i8 mode:u8 regulation:u8
                         turn_ratio:i8 run_state:u8 tacho_limit:u32
    0x0B GetBatteryLevel (empty); reply payload millivolts:u16
    0x0D KeepAlive       (empty); reply payload sleep_limit_ms:u32

Out-of-range fields are rejected at encode time, never clamped: clamping
belongs to the drive layer, the codec stays a pure bijection.  Telegrams
with an unrecognised opcode decode to :class:`Unknown`, which re-encodes
byte-identically, so captures from richer devices pass through losslessly.

Everything here is an immutable value plus pure functions; calls are safe
from any thread.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum, IntFlag
from typing import Optional, Union


class CodecError(ValueError):
    """Base class for telegram encode/decode failures."""


class RangeError(CodecError):
    """A field value is outside the range its wire type allows."""


class TruncatedError(CodecError):
    """Too few bytes for the declared opcode."""


class KindError(CodecError):
    """First byte is not a recognised telegram kind."""


class OversizeError(CodecError):
    """Frame payload longer than a u16 length prefix can describe."""


class TelegramKind(IntEnum):
    COMMAND_WITH_REPLY = 0x00
    COMMAND_NO_REPLY = 0x80
    REPLY = 0x02


class Opcode(IntEnum):
    PLAY_TONE = 0x03
    SET_OUTPUT_STATE = 0x04
    GET_BATTERY_LEVEL = 0x0B
    KEEP_ALIVE = 0x0D


class MotorPort(IntEnum):
    A = 0x00
    B = 0x01
    C = 0x02
    ALL = 0xFF


class OutputMode(IntFlag):
    MOTOR_ON = 0x01
    BRAKE = 0x02
    REGULATED = 0x04


class Regulation(IntEnum):
    IDLE = 0x00
    SPEED = 0x01
    SYNC = 0x02


class MotorRunState(IntEnum):
    IDLE = 0x00
    RUNNING = 0x20


@dataclass(frozen=True)
class PlayTone:
    """Beep command: frequency 200..14000 Hz, duration >= 1 ms."""

    frequency_hz: int
    duration_ms: int

    opcode = Opcode.PLAY_TONE


@dataclass(frozen=True)
class SetOutputState:
    """Motor command for one port (or ALL ports at once)."""

    port: MotorPort
    power: int
    mode: OutputMode
    regulation: Regulation
    turn_ratio: int
    run_state: MotorRunState
    tacho_limit: int

    opcode = Opcode.SET_OUTPUT_STATE


@dataclass(frozen=True)
class GetBatteryLevel:
    opcode = Opcode.GET_BATTERY_LEVEL


@dataclass(frozen=True)
class KeepAlive:
    opcode = Opcode.KEEP_ALIVE


@dataclass(frozen=True)
class Reply:
    """Brick reply: echoes the command opcode, status 0 means success.

    ``value`` carries the opcode-specific payload: battery millivolts for
    GET_BATTERY_LEVEL, sleep limit in ms for KEEP_ALIVE, None otherwise.
    """

    opcode_echo: Opcode
    status: int
    value: Optional[int] = None


@dataclass(frozen=True)
class Unknown:
    """Unrecognised opcode, preserved verbatim (opcode byte included)."""

    data: bytes


Body = Union[PlayTone, SetOutputState, GetBatteryLevel, KeepAlive, Reply, Unknown]


@dataclass(frozen=True)
class Telegram:
    kind: TelegramKind
    body: Body

    @property
    def wants_reply(self) -> bool:
        return self.kind is TelegramKind.COMMAND_WITH_REPLY


def command(body: Body, reply: bool = False) -> Telegram:
    """Build a command telegram around ``body``."""
    kind = TelegramKind.COMMAND_WITH_REPLY if reply else TelegramKind.COMMAND_NO_REPLY
    return Telegram(kind, body)


def reply_to(opcode: Opcode, status: int = 0, value: Optional[int] = None) -> Telegram:
    return Telegram(TelegramKind.REPLY, Reply(Opcode(opcode), status, value))


def stop_all() -> Telegram:
    """The safety telegram: brake every motor, run state idle, no reply."""
    return command(
        SetOutputState(
            port=MotorPort.ALL,
            power=0,
            mode=OutputMode.BRAKE,
            regulation=Regulation.IDLE,
            turn_ratio=0,
            run_state=MotorRunState.IDLE,
            tacho_limit=0,
        )
    )


_PLAY_TONE = struct.Struct("<HH")
_SET_OUTPUT_STATE = struct.Struct("<BbBBbBI")
_BATTERY_VALUE = struct.Struct("<H")
_KEEPALIVE_VALUE = struct.Struct("<I")
_FRAME_LEN = struct.Struct("<H")

# Reply payload format per echoed opcode; absent means an empty payload.
_REPLY_VALUE = {
    Opcode.GET_BATTERY_LEVEL: _BATTERY_VALUE,
    Opcode.KEEP_ALIVE: _KEEPALIVE_VALUE,
}


def _check(name: str, value: int, lo: int, hi: int) -> None:
    if not lo <= value <= hi:
        raise RangeError(f"{name} must be in [{lo}, {hi}], got {value}")


def _enum(name: str, enum_cls, value):
    try:
        return enum_cls(value)
    except ValueError:
        raise RangeError(f"{name} value {value!r} is not a valid {enum_cls.__name__}") from None


_MODE_ALL = OutputMode.MOTOR_ON | OutputMode.BRAKE | OutputMode.REGULATED


def _mode(value: int) -> OutputMode:
    # IntFlag keeps undefined bits silently; reject them here.
    if int(value) & ~int(_MODE_ALL):
        raise RangeError(f"mode value 0x{int(value):02X} has bits outside 0x07")
    return OutputMode(value)


def encode(t: Telegram) -> bytes:
    """Encode one telegram, without the frame length prefix.

    Raises RangeError naming the offending field when any value is outside
    its documented range.
    """
    kind = _enum("kind", TelegramKind, t.kind)
    body = t.body

    if isinstance(body, Reply):
        if kind is not TelegramKind.REPLY:
            raise RangeError("Reply body requires kind=REPLY")
        echo = _enum("opcode_echo", Opcode, body.opcode_echo)
        _check("status", body.status, 0, 255)
        fmt = _REPLY_VALUE.get(echo)
        if fmt is None:
            if body.value is not None:
                raise RangeError(f"reply to {echo.name} carries no value")
            payload = b""
        else:
            if body.value is None:
                raise RangeError(f"reply to {echo.name} requires a value")
            _check("value", body.value, 0, (1 << (8 * fmt.size)) - 1)
            payload = fmt.pack(body.value)
        return bytes([kind, echo, body.status]) + payload

    if kind is TelegramKind.REPLY and not isinstance(body, Unknown):
        raise RangeError("kind=REPLY requires a Reply body")

    if isinstance(body, Unknown):
        if not body.data:
            raise RangeError("Unknown body must carry at least the opcode byte")
        return bytes([kind]) + bytes(body.data)

    if isinstance(body, PlayTone):
        _check("frequency_hz", body.frequency_hz, 200, 14000)
        _check("duration_ms", body.duration_ms, 1, 0xFFFF)
        return bytes([kind, body.opcode]) + _PLAY_TONE.pack(body.frequency_hz, body.duration_ms)

    if isinstance(body, SetOutputState):
        port = _enum("port", MotorPort, body.port)
        _check("power", body.power, -100, 100)
        mode = _mode(body.mode)
        regulation = _enum("regulation", Regulation, body.regulation)
        _check("turn_ratio", body.turn_ratio, -100, 100)
        run_state = _enum("run_state", MotorRunState, body.run_state)
        _check("tacho_limit", body.tacho_limit, 0, 0xFFFFFFFF)
        return bytes([kind, body.opcode]) + _SET_OUTPUT_STATE.pack(
            port, body.power, mode, regulation, body.turn_ratio, run_state, body.tacho_limit
        )

    if isinstance(body, (GetBatteryLevel, KeepAlive)):
        return bytes([kind, body.opcode])

    raise RangeError(f"unsupported telegram body {type(body).__name__}")


def decode(data: bytes) -> Telegram:
    """Decode one telegram (the exact payload of one frame).

    Inverse of :func:`encode` on its image.  Unknown opcodes are preserved
    as :class:`Unknown`; short input raises TruncatedError, a bad kind byte
    raises KindError, and trailing bytes after a known payload raise
    CodecError.  Field values outside their ranges never survive decode.
    """
    buf = bytes(data)
    if not buf:
        raise TruncatedError("empty telegram")
    try:
        kind = TelegramKind(buf[0])
    except ValueError:
        raise KindError(f"unknown telegram kind byte 0x{buf[0]:02X}") from None
    if len(buf) < 2:
        raise TruncatedError("missing opcode byte")

    rest = buf[2:]

    if kind is TelegramKind.REPLY:
        try:
            echo = Opcode(buf[1])
        except ValueError:
            return Telegram(kind, Unknown(buf[1:]))
        if len(rest) < 1:
            raise TruncatedError("reply missing status byte")
        status, payload = rest[0], rest[1:]
        fmt = _REPLY_VALUE.get(echo)
        if fmt is None:
            if payload:
                raise CodecError(f"trailing bytes after reply to {echo.name}")
            return Telegram(kind, Reply(echo, status))
        if len(payload) < fmt.size:
            raise TruncatedError(f"reply to {echo.name} needs {fmt.size} payload bytes")
        if len(payload) > fmt.size:
            raise CodecError(f"trailing bytes after reply to {echo.name}")
        return Telegram(kind, Reply(echo, status, fmt.unpack(payload)[0]))

    try:
        opcode = Opcode(buf[1])
    except ValueError:
        return Telegram(kind, Unknown(buf[1:]))

    if opcode is Opcode.PLAY_TONE:
        if len(rest) < _PLAY_TONE.size:
            raise TruncatedError("PlayTone needs 4 payload bytes")
        if len(rest) > _PLAY_TONE.size:
            raise CodecError("trailing bytes after PlayTone payload")
        freq, dur = _PLAY_TONE.unpack(rest)
        _check("frequency_hz", freq, 200, 14000)
        _check("duration_ms", dur, 1, 0xFFFF)
        return Telegram(kind, PlayTone(freq, dur))

    if opcode is Opcode.SET_OUTPUT_STATE:
        if len(rest) < _SET_OUTPUT_STATE.size:
            raise TruncatedError("SetOutputState needs 10 payload bytes")
        if len(rest) > _SET_OUTPUT_STATE.size:
            raise CodecError("trailing bytes after SetOutputState payload")
        port, power, mode, regulation, turn_ratio, run_state, tacho = _SET_OUTPUT_STATE.unpack(rest)
        body = SetOutputState(
            port=_enum("port", MotorPort, port),
            power=power,
            mode=_mode(mode),
            regulation=_enum("regulation", Regulation, regulation),
            turn_ratio=turn_ratio,
            run_state=_enum("run_state", MotorRunState, run_state),
            tacho_limit=tacho,
        )
        _check("power", body.power, -100, 100)
        _check("turn_ratio", body.turn_ratio, -100, 100)
        return Telegram(kind, body)

    # GET_BATTERY_LEVEL and KEEP_ALIVE carry no command payload.
    if rest:
        raise CodecError(f"trailing bytes after {opcode.name} payload")
    body = GetBatteryLevel() if opcode is Opcode.GET_BATTERY_LEVEL else KeepAlive()
    return Telegram(kind, body)


def frame(payload: bytes) -> bytes:
    """Prefix ``payload`` with its 2-byte little-endian length."""
    if len(payload) > 0xFFFF:
        raise OversizeError(f"frame payload of {len(payload)} bytes exceeds 65535")
    return _FRAME_LEN.pack(len(payload)) + bytes(payload)


def unframe(data: bytes) -> Optional[tuple[bytes, bytes]]:
    """Strip one complete frame, returning ``(payload, rest)``.

    Returns None when ``data`` does not yet hold a complete frame (need
    more bytes); never raises on short input.
    """
    buf = bytes(data)
    if len(buf) < _FRAME_LEN.size:
        return None
    (n,) = _FRAME_LEN.unpack_from(buf)
    if len(buf) < _FRAME_LEN.size + n:
        return None
    return buf[2 : 2 + n], buf[2 + n :]
