"""Framed key-value messaging: wire codec, in-process bus, TCP pub/sub
server, and the navigation-engine boundary.

Frame layout (big-endian throughout):

    u32  length of everything after this field
    u8   version (1)
    u8   value-type tag (1 double, 2 utf-8 string, 3 binary)
    f64  timestamp (s)
    u8   key length, then key bytes (1..255)
    u8   source length, then source bytes (0..255)
    u32  value length, then value payload

A double value is its 8-byte IEEE-754 encoding.  Whole frames never exceed
64 KiB.  decode(encode(m)) reproduces the message exactly, and decode
raises ``WireError`` (never crashes) on any malformed input.

The TCP server accepts multiple clients; a client subscribes by publishing
a message with key ``SUBSCRIBE`` whose string value is an exact key or a
``PREFIX_*`` pattern.  Publishes fan out to matching subscribers (except
the originator) and into the in-process bus.  Slow clients are disconnected
once their outbound backlog exceeds the configured depth, protecting the
control loop.
"""

from __future__ import annotations

import math
import queue
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

from .measurements import (
    DepthMeas,
    DvlMeas,
    GpsFix,
    ImuMeas,
    LblFix,
    Measurement,
    RpmMeas,
)

MAX_FRAME = 64 * 1024
VERSION = 1
TAG_DOUBLE = 1
TAG_STRING = 2
TAG_BINARY = 3

NAV_PORT = 9001
PAYLOAD_PORT = 9002

Value = Union[float, str, bytes]


class WireError(ValueError):
    """Malformed frame or invariant violation."""


@dataclass(frozen=True)
class WireMessage:
    timestamp: float
    key: str
    value: Value
    source: str = ""


def encode(msg: WireMessage) -> bytes:
    key = msg.key.encode("utf-8")
    if not 1 <= len(key) <= 255:
        raise WireError(f"key must be 1..255 bytes, got {len(key)}")
    source = msg.source.encode("utf-8")
    if len(source) > 255:
        raise WireError("source exceeds 255 bytes")
    if isinstance(msg.value, bool) or not isinstance(msg.value, (float, int, str, bytes)):
        raise WireError(f"unsupported value type {type(msg.value).__name__}")
    if isinstance(msg.value, (float, int)):
        tag, payload = TAG_DOUBLE, struct.pack(">d", float(msg.value))
    elif isinstance(msg.value, str):
        tag, payload = TAG_STRING, msg.value.encode("utf-8")
    else:
        tag, payload = TAG_BINARY, bytes(msg.value)
    body = struct.pack(">BBd", VERSION, tag, msg.timestamp)
    body += struct.pack(">B", len(key)) + key
    body += struct.pack(">B", len(source)) + source
    body += struct.pack(">I", len(payload)) + payload
    if 4 + len(body) > MAX_FRAME:
        raise WireError(f"frame of {4 + len(body)} bytes exceeds {MAX_FRAME}")
    return struct.pack(">I", len(body)) + body


def decode(data: bytes) -> WireMessage:
    """Decode one complete frame (including its length prefix)."""
    if len(data) < 4:
        raise WireError("truncated frame: missing length")
    (length,) = struct.unpack(">I", data[:4])
    if 4 + length != len(data):
        raise WireError(f"length field {length} does not match frame size")
    if 4 + length > MAX_FRAME:
        raise WireError("frame exceeds the 64 KiB limit")
    return _decode_body(data[4:])


def _decode_body(body: bytes) -> WireMessage:
    try:
        if len(body) < 10:
            raise WireError("truncated frame: missing header")
        version, tag, timestamp = struct.unpack(">BBd", body[:10])
        if version != VERSION:
            raise WireError(f"unknown version {version}")
        offset = 10
        key_len = body[offset]
        offset += 1
        if key_len == 0:
            raise WireError("empty key")
        key = body[offset:offset + key_len]
        if len(key) != key_len:
            raise WireError("truncated key")
        offset += key_len
        if offset >= len(body):
            raise WireError("truncated source length")
        src_len = body[offset]
        offset += 1
        source = body[offset:offset + src_len]
        if len(source) != src_len:
            raise WireError("truncated source")
        offset += src_len
        if len(body) - offset < 4:
            raise WireError("truncated value length")
        (val_len,) = struct.unpack(">I", body[offset:offset + 4])
        offset += 4
        payload = body[offset:offset + val_len]
        if len(payload) != val_len or offset + val_len != len(body):
            raise WireError("value length does not match frame")
        if tag == TAG_DOUBLE:
            if val_len != 8:
                raise WireError("double value must be 8 bytes")
            value: Value = struct.unpack(">d", payload)[0]
        elif tag == TAG_STRING:
            value = payload.decode("utf-8")
        elif tag == TAG_BINARY:
            value = payload
        else:
            raise WireError(f"unknown value tag {tag}")
        return WireMessage(timestamp=timestamp, key=key.decode("utf-8"),
                           value=value, source=source.decode("utf-8"))
    except WireError:
        raise
    except Exception as exc:       # any other malformation is a WireError
        raise WireError(str(exc)) from exc


class FrameReader:
    """Incremental splitter: feed arbitrary byte chunks, yields frames."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> List[bytes]:
        self._buf.extend(data)
        frames = []
        while True:
            if len(self._buf) < 4:
                break
            (length,) = struct.unpack(">I", bytes(self._buf[:4]))
            if 4 + length > MAX_FRAME:
                raise WireError("incoming frame exceeds the 64 KiB limit")
            if len(self._buf) < 4 + length:
                break
            frames.append(bytes(self._buf[:4 + length]))
            del self._buf[:4 + length]
        return frames


def key_matches(pattern: str, key: str) -> bool:
    """Exact match, or prefix wildcard written as ``PREFIX_*``."""
    if pattern.endswith("*"):
        return key.startswith(pattern[:-1])
    return pattern == key


class MessageBus:
    """Thread-safe pub/sub fanout for in-process consumers."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._subs: List[Tuple[str, Callable[[WireMessage], None]]] = []

    def subscribe(self, pattern: str, handler: Callable[[WireMessage], None]) -> None:
        with self._lock:
            self._subs.append((pattern, handler))

    def publish(self, msg: WireMessage) -> None:
        with self._lock:
            targets = [h for pat, h in self._subs if key_matches(pat, msg.key)]
        for handler in targets:
            handler(msg)


class QueueSubscriber:
    """Bus subscriber backed by a queue, drained at tick boundaries."""

    def __init__(self, maxsize: int = 4096) -> None:
        self.queue: "queue.Queue[WireMessage]" = queue.Queue(maxsize=maxsize)
        self.dropped = 0

    def __call__(self, msg: WireMessage) -> None:
        try:
            self.queue.put_nowait(msg)
        except queue.Full:
            self.dropped += 1

    def drain(self) -> List[WireMessage]:
        out = []
        while True:
            try:
                out.append(self.queue.get_nowait())
            except queue.Empty:
                return out


class _Client:
    def __init__(self, sock: socket.socket, addr, backlog: int) -> None:
        self.sock = sock
        self.addr = addr
        self.patterns: List[str] = []
        self.outbox: "queue.Queue[Optional[bytes]]" = queue.Queue(maxsize=backlog)
        self.alive = True

    def wants(self, key: str) -> bool:
        return any(key_matches(p, key) for p in self.patterns)


class GatewayServer:
    """Threaded TCP pub/sub endpoint bridging remote clients and the bus."""

    def __init__(self, port: int, bus: Optional[MessageBus] = None,
                 host: str = "127.0.0.1", backlog: int = 1024) -> None:
        self.bus = bus or MessageBus()
        self.backlog = backlog
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(16)
        self.port = self._listener.getsockname()[1]
        self._clients: List[_Client] = []
        self._lock = threading.Lock()
        self._running = True
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               daemon=True)
        self._accept_thread.start()
        # remote publishes already fan out in _handle_publish; this hook
        # forwards bus traffic published by local code out to the clients
        self.bus.subscribe("*", self._from_bus)
        self._in_dispatch = threading.local()

    # -- lifecycle -----------------------------------------------------------

    def close(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            clients = list(self._clients)
        for client in clients:
            self._drop(client)

    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)

    # -- internals -------------------------------------------------------------

    def _accept_loop(self) -> None:
        while self._running:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client = _Client(sock, addr, self.backlog)
            with self._lock:
                self._clients.append(client)
            threading.Thread(target=self._read_loop, args=(client,),
                             daemon=True).start()
            threading.Thread(target=self._write_loop, args=(client,),
                             daemon=True).start()

    def _drop(self, client: _Client) -> None:
        client.alive = False
        try:
            client.sock.close()
        except OSError:
            pass
        try:
            client.outbox.put_nowait(None)
        except queue.Full:
            pass
        with self._lock:
            if client in self._clients:
                self._clients.remove(client)

    def _read_loop(self, client: _Client) -> None:
        reader = FrameReader()
        while client.alive and self._running:
            try:
                chunk = client.sock.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            try:
                frames = reader.feed(chunk)
            except WireError:
                break
            for frame in frames:
                try:
                    msg = decode(frame)
                except WireError:
                    continue   # malformed frames isolate to this client
                if msg.key == "SUBSCRIBE" and isinstance(msg.value, str):
                    client.patterns.append(msg.value)
                else:
                    self._handle_publish(msg, origin=client, frame=frame)
        self._drop(client)

    def _write_loop(self, client: _Client) -> None:
        while client.alive:
            frame = client.outbox.get()
            if frame is None:
                return
            try:
                client.sock.sendall(frame)
            except OSError:
                self._drop(client)
                return

    def _enqueue(self, client: _Client, frame: bytes) -> None:
        try:
            client.outbox.put_nowait(frame)
        except queue.Full:
            # slow consumer: disconnect rather than stall the loop
            self._drop(client)

    def _fan_out(self, msg: WireMessage, frame: bytes,
                 origin: Optional[_Client]) -> None:
        with self._lock:
            targets = [c for c in self._clients
                       if c is not origin and c.wants(msg.key)]
        for client in targets:
            self._enqueue(client, frame)

    def _handle_publish(self, msg: WireMessage, origin: Optional[_Client],
                        frame: bytes) -> None:
        self._fan_out(msg, frame, origin)
        self._in_dispatch.active = True
        try:
            self.bus.publish(msg)
        finally:
            self._in_dispatch.active = False

    def _from_bus(self, msg: WireMessage) -> None:
        if getattr(self._in_dispatch, "active", False):
            return   # already fanned out in _handle_publish
        try:
            frame = encode(msg)
        except WireError:
            return
        self._fan_out(msg, frame, origin=None)


class GatewayClient:
    """Blocking TCP client for tests, payload scripts and remote tools."""

    def __init__(self, port: int, host: str = "127.0.0.1",
                 source: str = "client") -> None:
        self.sock = socket.create_connection((host, port), timeout=10.0)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.source = source
        self._reader = FrameReader()
        self._pending: List[WireMessage] = []

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def subscribe(self, pattern: str) -> None:
        self.send(WireMessage(0.0, "SUBSCRIBE", pattern, self.source))

    def send(self, msg: WireMessage) -> None:
        self.sock.sendall(encode(msg))

    def publish(self, key: str, value: Value, timestamp: float = 0.0) -> None:
        self.send(WireMessage(timestamp, key, value, self.source))

    def recv(self, timeout: float = 5.0) -> Optional[WireMessage]:
        if self._pending:
            return self._pending.pop(0)
        self.sock.settimeout(timeout)
        while True:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                return None
            except OSError:
                return None
            if not chunk:
                return None
            for frame in self._reader.feed(chunk):
                self._pending.append(decode(frame))
            if self._pending:
                return self._pending.pop(0)


# ---------------------------------------------------------------------------
# navigation boundary: sensor frames in, NAV_* frames out
# ---------------------------------------------------------------------------

SENSOR_SOURCE = "frontseat"
NAV_SOURCE = "nav-engine"


def measurement_to_wire(m: Measurement) -> WireMessage:
    if isinstance(m, DepthMeas):
        return WireMessage(m.t, "SENSOR_DEPTH", m.z, SENSOR_SOURCE)
    if isinstance(m, ImuMeas):
        payload = struct.pack(">6d", m.phi, m.theta, m.psi, m.p, m.q, m.r)
        return WireMessage(m.t, "SENSOR_IMU", payload, SENSOR_SOURCE)
    if isinstance(m, GpsFix):
        return WireMessage(m.t, "SENSOR_GPS", struct.pack(">2d", m.x, m.y),
                           SENSOR_SOURCE)
    if isinstance(m, LblFix):
        return WireMessage(m.t_rx, "SENSOR_LBL",
                           struct.pack(">3d", m.x, m.y, m.t_n), SENSOR_SOURCE)
    if isinstance(m, DvlMeas):
        frame_id = 1 if m.frame == "mount" else 0
        return WireMessage(m.t, "SENSOR_DVL",
                           struct.pack(">3dB", m.vx, m.vy, m.vz, frame_id),
                           SENSOR_SOURCE)
    if isinstance(m, RpmMeas):
        return WireMessage(m.t, "SENSOR_RPM", m.rpm, SENSOR_SOURCE)
    raise WireError(f"unsupported measurement {type(m).__name__}")


def wire_to_measurement(msg: WireMessage) -> Optional[Measurement]:
    """Translate a SENSOR_* frame; returns None for unknown keys or
    malformed payloads (the boundary counts those)."""
    try:
        if msg.key == "SENSOR_DEPTH" and isinstance(msg.value, float):
            return DepthMeas(z=msg.value, t=msg.timestamp)
        if msg.key == "SENSOR_IMU" and isinstance(msg.value, bytes):
            phi, theta, psi, p, q, r = struct.unpack(">6d", msg.value)
            return ImuMeas(phi, theta, psi, p, q, r, t=msg.timestamp)
        if msg.key == "SENSOR_GPS" and isinstance(msg.value, bytes):
            x, y = struct.unpack(">2d", msg.value)
            return GpsFix(x=x, y=y, t=msg.timestamp)
        if msg.key == "SENSOR_LBL" and isinstance(msg.value, bytes):
            x, y, t_n = struct.unpack(">3d", msg.value)
            return LblFix(x=x, y=y, t_n=t_n, t_rx=msg.timestamp)
        if msg.key == "SENSOR_DVL" and isinstance(msg.value, bytes):
            vx, vy, vz, frame_id = struct.unpack(">3dB", msg.value)
            return DvlMeas(vx=vx, vy=vy, vz=vz, t=msg.timestamp,
                           frame="mount" if frame_id else "body")
        if msg.key == "SENSOR_RPM" and isinstance(msg.value, float):
            return RpmMeas(rpm=msg.value, t=msg.timestamp)
    except (struct.error, ValueError):
        return None
    return None


def solution_to_wire(sol) -> List[WireMessage]:
    """NAV_* frames published after each fusion tick."""
    heading = math.degrees(sol.psi) % 360.0
    return [
        WireMessage(sol.t, "NAV_X", sol.x, NAV_SOURCE),
        WireMessage(sol.t, "NAV_Y", sol.y, NAV_SOURCE),
        WireMessage(sol.t, "NAV_DEPTH", sol.z, NAV_SOURCE),
        WireMessage(sol.t, "NAV_HEADING", heading, NAV_SOURCE),
        WireMessage(sol.t, "NAV_SPEED", sol.speed, NAV_SOURCE),
        WireMessage(sol.t, "NAV_STATUS", sol.status, NAV_SOURCE),
    ]


class HydromanBoundary:
    """Feeds a navigation engine from SENSOR_* frames and emits NAV_*.

    The 20 Hz SENSOR_IMU stream is the tick heartbeat: each IMU frame
    closes the current measurement batch and runs one fusion step at the
    IMU timestamp.  Identical input streams therefore produce identical
    output frames whether delivered in-process or over TCP.
    """

    def __init__(self, engine, dt: float = 0.05,
                 watchdog: float = 2.0) -> None:
        self.engine = engine
        self.dt = dt
        self.watchdog = watchdog
        self.unknown_keys = 0
        self._batch: List[Measurement] = []
        self._imu: Optional[ImuMeas] = None
        self.last_solution = None

    def ingest(self, msg: WireMessage) -> List[WireMessage]:
        """Feed one frame; returns NAV_* frames when a tick completed."""
        meas = wire_to_measurement(msg)
        if meas is None:
            self.unknown_keys += 1
            return []
        if isinstance(meas, ImuMeas):
            self._imu = meas
            batch = self._batch + [meas]
            self._batch = []
            sol = self.engine.step(meas.t, batch, self.dt)
            self.last_solution = sol
            return solution_to_wire(sol)
        self._batch.append(meas)
        return []
