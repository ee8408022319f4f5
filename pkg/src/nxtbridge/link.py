"""Connection lifecycle and serialized command stream to one brick endpoint.

Endpoint text syntax: ``serial:<path>``, ``tcp:<host>:<port>``,
``inproc:<name>``.  The serial scheme plays the Bluetooth-RFCOMM role and
expects an already-paired device node (pairing belongs to the OS); tcp and
inproc reach a simulated brick.

One link owns one endpoint.  Any number of threads may call
:meth:`Link.send`; the link serializes them FIFO by holding the I/O lock
through the whole write(+reply) round trip.  State transitions never skip
CONNECTING, every transition emits exactly one :class:`StateChanged`, and a
closing link always brakes the motors first, so a robot is never left
running.

Connect failures of the "nothing there" kind emit a single
``transport-off`` warning telling the user to switch the transport on --
the pop-up the console is expected to show.
"""

from __future__ import annotations

import queue
import select
import socket
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

from .telegram import (
    CodecError,
    KeepAlive,
    Reply,
    Telegram,
    TelegramKind,
    command,
    decode,
    encode,
    frame,
    stop_all,
    unframe,
)


class LinkError(RuntimeError):
    """Base class for link failures."""


class TransportUnavailable(LinkError):
    """The transport is off or absent (no device node, no route, no such name)."""


class EndpointRefused(LinkError):
    """Something answered at the endpoint and refused the connection."""


class ConnectTimeout(LinkError):
    """The endpoint did not answer within the connect timeout."""


class NotConnected(LinkError):
    """Operation requires a connected link."""


class ReplyTimeout(LinkError):
    """No reply arrived within the reply timeout; the link is now faulted."""


class IllegalState(LinkError):
    """The requested transition is not allowed from the current state."""


class BrickError(LinkError):
    """The brick answered with a nonzero status byte."""

    def __init__(self, status: int):
        super().__init__(f"brick reported error status 0x{status:02X}")
        self.status = status


WARNING_TRANSPORT_OFF = "transport-off"
TRANSPORT_OFF_TEXT = (
    "Cannot reach the robot: the transport is off or unavailable. "
    "Turn it on and press CONNECT again."
)


class Scheme(Enum):
    SERIAL = "serial"
    TCP = "tcp"
    INPROC = "inproc"


@dataclass(frozen=True)
class Endpoint:
    scheme: Scheme
    address: str

    def __post_init__(self):
        if not self.address:
            raise ValueError("endpoint address must be non-empty")

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        scheme_name, sep, address = text.partition(":")
        if not sep:
            raise ValueError(f"endpoint {text!r} lacks a scheme prefix (serial:/tcp:/inproc:)")
        try:
            scheme = Scheme(scheme_name)
        except ValueError:
            raise ValueError(f"unrecognized endpoint scheme {scheme_name!r}") from None
        return cls(scheme, address)

    def __str__(self) -> str:
        return f"{self.scheme.value}:{self.address}"


class LinkPhase(Enum):
    DISCONNECTED = "disconnected"
    CONNECTING = "connecting"
    CONNECTED = "connected"
    FAULTED = "faulted"


@dataclass(frozen=True)
class LinkState:
    phase: LinkPhase
    reason: Optional[str] = None

    @classmethod
    def disconnected(cls) -> "LinkState":
        return cls(LinkPhase.DISCONNECTED)

    @classmethod
    def connecting(cls) -> "LinkState":
        return cls(LinkPhase.CONNECTING)

    @classmethod
    def connected(cls) -> "LinkState":
        return cls(LinkPhase.CONNECTED)

    @classmethod
    def faulted(cls, reason: str) -> "LinkState":
        return cls(LinkPhase.FAULTED, reason)


@dataclass(frozen=True)
class StateChanged:
    state: LinkState


@dataclass(frozen=True)
class Warning:
    code: str
    text: str


@dataclass(frozen=True)
class ReplyReceived:
    telegram: Telegram


LinkEvent = Union[StateChanged, Warning, ReplyReceived]


@dataclass(frozen=True)
class LinkConfig:
    connect_timeout_s: float = 5.0
    reply_timeout_s: float = 1.0
    keepalive_period_s: float = 30.0  # <= 0 disables the periodic keepalive


# ---------------------------------------------------------------------------
# In-process endpoints: a simulator registers an acceptor under a name and a
# link dials it by that name, receiving one end of a socketpair.

_inproc_lock = threading.Lock()
_inproc_acceptors: dict[str, Callable[[], socket.socket]] = {}


def register_inproc(name: str, acceptor: Callable[[], socket.socket]) -> None:
    with _inproc_lock:
        if name in _inproc_acceptors:
            raise ValueError(f"inproc name {name!r} already registered")
        _inproc_acceptors[name] = acceptor


def unregister_inproc(name: str) -> None:
    with _inproc_lock:
        _inproc_acceptors.pop(name, None)


def _dial_inproc(name: str) -> socket.socket:
    with _inproc_lock:
        acceptor = _inproc_acceptors.get(name)
    if acceptor is None:
        raise TransportUnavailable(f"no in-process endpoint named {name!r}")
    return acceptor()


# ---------------------------------------------------------------------------
# Transports


class _SocketTransport:
    def __init__(self, sock: socket.socket):
        self._sock = sock
        sock.settimeout(None)

    def send(self, data: bytes) -> None:
        self._sock.sendall(data)

    def recv(self, timeout: float) -> Optional[bytes]:
        """One chunk, None on timeout, b'' on EOF."""
        ready, _, _ = select.select([self._sock], [], [], timeout)
        if not ready:
            return None
        return self._sock.recv(4096)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class _FileTransport:
    """Raw device-node transport for serial (RFCOMM) endpoints."""

    def __init__(self, path: str):
        self._file = open(path, "r+b", buffering=0)

    def send(self, data: bytes) -> None:
        self._file.write(data)

    def recv(self, timeout: float) -> Optional[bytes]:
        ready, _, _ = select.select([self._file], [], [], timeout)
        if not ready:
            return None
        chunk = self._file.read(4096)
        return b"" if chunk is None else chunk

    def close(self) -> None:
        self._file.close()


def _open_transport(endpoint: Endpoint, timeout_s: float):
    if endpoint.scheme is Scheme.TCP:
        host, sep, port_text = endpoint.address.rpartition(":")
        if not sep or not port_text.isdigit():
            raise ValueError(f"tcp endpoint needs host:port, got {endpoint.address!r}")
        try:
            sock = socket.create_connection((host, int(port_text)), timeout=timeout_s)
        except ConnectionRefusedError as e:
            raise EndpointRefused(f"{endpoint}: {e.strerror or e}") from e
        except socket.timeout as e:
            raise ConnectTimeout(f"{endpoint}: no answer within {timeout_s:g} s") from e
        except OSError as e:
            raise TransportUnavailable(f"{endpoint}: {e.strerror or e}") from e
        return _SocketTransport(sock)

    if endpoint.scheme is Scheme.INPROC:
        try:
            return _SocketTransport(_dial_inproc(endpoint.address))
        except ConnectionRefusedError as e:
            raise EndpointRefused(f"{endpoint}: {e}") from e

    try:
        return _FileTransport(endpoint.address)
    except OSError as e:
        raise TransportUnavailable(f"{endpoint}: {e.strerror or e}") from e


# ---------------------------------------------------------------------------


class Link:
    """Lifecycle and FIFO command stream for one endpoint."""

    def __init__(self, endpoint: Union[Endpoint, str], config: Optional[LinkConfig] = None):
        self._endpoint = Endpoint.parse(endpoint) if isinstance(endpoint, str) else endpoint
        self._cfg = config or LinkConfig()
        self._io_lock = threading.RLock()
        self._state_lock = threading.Lock()
        self._sub_lock = threading.Lock()
        self._state = LinkState.disconnected()
        self._subscribers: list[queue.SimpleQueue] = []
        self._transport = None
        self._closing = threading.Event()
        self._reader: Optional[threading.Thread] = None
        self._keepalive: Optional[threading.Thread] = None
        self._replies: "queue.Queue[Telegram]" = queue.Queue()
        # Held by a program run for the run's duration: one run per link.
        self.exclusive = threading.Lock()

    @property
    def endpoint(self) -> Endpoint:
        return self._endpoint

    @property
    def state(self) -> LinkState:
        with self._state_lock:
            return self._state

    def subscribe(self) -> "queue.SimpleQueue[LinkEvent]":
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._sub_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q) -> None:
        with self._sub_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _emit(self, event: LinkEvent) -> None:
        with self._sub_lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(event)

    def _set_state(self, new: LinkState) -> None:
        with self._state_lock:
            if self._state == new:
                return
            self._state = new
        self._emit(StateChanged(new))

    def _fault(self, reason: str) -> None:
        with self._state_lock:
            if self._state.phase is LinkPhase.FAULTED:
                return
            self._state = LinkState.faulted(reason)
        self._emit(StateChanged(self.state))

    # -- lifecycle ----------------------------------------------------------

    def connect(self) -> LinkState:
        """Bring the link up and verify liveness with a keepalive round trip."""
        with self._io_lock:
            phase = self.state.phase
            if phase in (LinkPhase.CONNECTED, LinkPhase.CONNECTING):
                raise IllegalState(f"connect while {phase.value}")
            self._set_state(LinkState.connecting())
            try:
                self._transport = _open_transport(self._endpoint, self._cfg.connect_timeout_s)
            except (LinkError, ValueError) as e:
                self._emit(Warning(WARNING_TRANSPORT_OFF, TRANSPORT_OFF_TEXT))
                self._set_state(LinkState.faulted(str(e)))
                raise
            # Fresh event per session so threads of a torn-down session can
            # never observe a later session's flag.
            self._closing = threading.Event()
            self._drain_replies()
            self._reader = threading.Thread(
                target=self._reader_loop, args=(self._transport, self._closing), daemon=True
            )
            self._reader.start()
            self._set_state(LinkState.connected())
            try:
                self._send_locked(command(KeepAlive(), reply=True))
            except LinkError as e:
                self._teardown_transport()
                self._fault(f"liveness check failed: {e}")
                raise
            if self._cfg.keepalive_period_s > 0:
                self._keepalive = threading.Thread(
                    target=self._keepalive_loop, args=(self._closing,), daemon=True
                )
                self._keepalive.start()
            return self.state

    def send(self, t: Telegram) -> Optional[Reply]:
        """Frame and write ``t``; for with-reply commands, wait for the reply body.

        Round trips are serialized, so replies always match their senders in
        submission order.
        """
        with self._io_lock:
            if self.state.phase is not LinkPhase.CONNECTED:
                raise NotConnected(f"send while {self.state.phase.value}")
            return self._send_locked(t)

    def disconnect(self) -> LinkState:
        """Brake the motors best-effort, close the transport, go DISCONNECTED.

        Idempotent: a disconnected link stays disconnected with no wire
        traffic.
        """
        with self._io_lock:
            if self.state.phase is LinkPhase.CONNECTED:
                try:
                    self._send_locked(stop_all())
                except Exception:
                    pass
            self._teardown_transport()
            if self.state.phase is not LinkPhase.DISCONNECTED:
                self._set_state(LinkState.disconnected())
            return self.state

    # -- internals ----------------------------------------------------------

    def _send_locked(self, t: Telegram) -> Optional[Reply]:
        data = frame(encode(t))
        try:
            self._transport.send(data)
        except OSError as e:
            self._fault(f"send failed: {e}")
            raise NotConnected(f"send failed: {e}") from e
        if t.kind is not TelegramKind.COMMAND_WITH_REPLY:
            return None
        try:
            reply_telegram = self._replies.get(timeout=self._cfg.reply_timeout_s)
        except queue.Empty:
            self._fault("reply timeout")
            self._teardown_transport()
            raise ReplyTimeout(
                f"no reply within {self._cfg.reply_timeout_s:g} s"
            ) from None
        body = reply_telegram.body
        assert isinstance(body, Reply)
        if body.status != 0:
            raise BrickError(body.status)
        return body

    def _drain_replies(self) -> None:
        while True:
            try:
                self._replies.get_nowait()
            except queue.Empty:
                return

    def _reader_loop(self, transport, closing: threading.Event) -> None:
        buf = b""
        while not closing.is_set():
            try:
                chunk = transport.recv(timeout=0.05)
            except (OSError, ValueError):
                chunk = b""
            if chunk is None:
                continue
            if chunk == b"":
                if not closing.is_set():
                    self._fault("connection closed by peer")
                return
            buf += chunk
            while True:
                result = unframe(buf)
                if result is None:
                    break
                payload, buf = result
                try:
                    telegram = decode(payload)
                except CodecError:
                    continue
                if telegram.kind is TelegramKind.REPLY and isinstance(telegram.body, Reply):
                    self._replies.put(telegram)
                    self._emit(ReplyReceived(telegram))

    def _keepalive_loop(self, closing: threading.Event) -> None:
        while not closing.wait(self._cfg.keepalive_period_s):
            with self._io_lock:
                if closing.is_set() or self.state.phase is not LinkPhase.CONNECTED:
                    return
                try:
                    self._send_locked(command(KeepAlive()))
                except LinkError:
                    return

    def _teardown_transport(self) -> None:
        self._closing.set()
        if self._transport is not None:
            try:
                self._transport.close()
            except OSError:
                pass
            self._transport = None
        if self._reader is not None and self._reader is not threading.current_thread():
            self._reader.join(timeout=1.0)
            self._reader = None
