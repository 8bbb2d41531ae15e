"""Multi-node synchronized acquisition: one TCP server, N clients.

Clients idle until the server broadcasts a start trigger; stop and
heartbeats flow over the same line-delimited JSON channel. There is no
clock synchronization beyond the shared trigger: each recorder logs its
own monotonic receipt timestamp so trigger skew can be measured but not
corrected.

State machine per node: idle -> armed (ready sent) -> recording (start
received) -> stopped -> idle. A client is only moved to recording by a
decoded start message that arrives while it is armed; a start observed
in any other phase is informational (a late joiner learns a session is
already running but does not join it).
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

from .errors import PhysiortError

DEFAULT_PORT = 9798
HEARTBEAT_S = 2.0
MISSED_HEARTBEATS = 3

MESSAGE_TYPES = ("hello", "ready", "start", "stop", "heartbeat")


class MalformedMessage(PhysiortError):
    exit_code = 5


class UnknownType(PhysiortError):
    exit_code = 5


class PortInUse(PhysiortError):
    exit_code = 5


class NoReadyPeers(PhysiortError):
    exit_code = 5


class ConnectFailed(PhysiortError):
    exit_code = 5


class Phase(str, Enum):
    IDLE = "idle"
    ARMED = "armed"
    RECORDING = "recording"
    STOPPED = "stopped"


@dataclass(frozen=True)
class SyncMessage:
    type: str
    node_id: str
    session_id: str = ""
    condition: str = ""
    duration_s: float | None = None
    server_mono_ns: int = 0


def encode_msg(msg: SyncMessage) -> bytes:
    if msg.type not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type {msg.type!r}")
    if msg.type == "start" and (not msg.session_id or not msg.condition):
        raise MalformedMessage("start requires session_id and condition")
    body = {
        "type": msg.type,
        "node_id": msg.node_id,
        "session_id": msg.session_id,
        "condition": msg.condition,
        "server_mono_ns": msg.server_mono_ns,
    }
    if msg.duration_s is not None:
        body["duration_s"] = msg.duration_s
    return json.dumps(body, sort_keys=True).encode("utf-8") + b"\n"


def decode_msg(line: bytes | str) -> SyncMessage:
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    try:
        body = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedMessage(f"not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise MalformedMessage("message must be a JSON object")
    mtype = body.get("type")
    if not isinstance(mtype, str) or not mtype:
        raise MalformedMessage("missing message type")
    if mtype not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type {mtype!r}")
    node_id = body.get("node_id")
    if not isinstance(node_id, str) or not node_id:
        raise MalformedMessage("missing node_id")
    duration = body.get("duration_s")
    if duration is not None and not isinstance(duration, (int, float)):
        raise MalformedMessage("duration_s must be a number")
    msg = SyncMessage(
        type=mtype, node_id=node_id,
        session_id=str(body.get("session_id", "")),
        condition=str(body.get("condition", "")),
        duration_s=float(duration) if duration is not None else None,
        server_mono_ns=int(body.get("server_mono_ns", 0)))
    if msg.type == "start" and (not msg.session_id or not msg.condition):
        raise MalformedMessage("start requires session_id and condition")
    return msg


class _LineReader:
    """Accumulates socket bytes and yields complete lines."""

    def __init__(self, conn: socket.socket):
        self._conn = conn
        self._buf = b""

    def readline(self) -> bytes | None:
        while b"\n" not in self._buf:
            try:
                chunk = self._conn.recv(4096)
            except OSError:
                return None
            if not chunk:
                return None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line


@dataclass
class _Peer:
    node_id: str
    conn: socket.socket
    phase: Phase = Phase.IDLE
    last_seen: float = field(default_factory=time.monotonic)
    outbox: "queue.Queue[bytes | None]" = field(default_factory=queue.Queue)
    connected: bool = True


class SyncServer:
    """Accepts hellos from any address, tracks peer phases, broadcasts the
    start trigger to every ready peer and the local recorder in one
    dispatch step. All state transitions run under one lock."""

    def __init__(self, listen_port: int = DEFAULT_PORT, node_id: str = "server",
                 heartbeat_s: float = HEARTBEAT_S,
                 on_start=None, on_stop=None):
        self.node_id = node_id
        self.heartbeat_s = heartbeat_s
        self.on_start = on_start
        self.on_stop = on_stop
        self.phase = Phase.IDLE
        self.local_receipt_ns: int | None = None
        self._active: SyncMessage | None = None
        self._peers: dict[str, _Peer] = {}
        self._lock = threading.Lock()
        self._closing = threading.Event()
        self._threads: list[threading.Thread] = []
        try:
            self._sock = socket.create_server(("", listen_port))
        except OSError as exc:
            raise PortInUse(f"cannot listen on port {listen_port}: {exc}") from exc
        self._spawn(self._accept_loop)
        self._spawn(self._heartbeat_loop)

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    def _spawn(self, fn, *args):
        t = threading.Thread(target=fn, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self):
        while not self._closing.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            self._spawn(self._peer_loop, conn)

    def _peer_loop(self, conn: socket.socket):
        reader = _LineReader(conn)
        peer: _Peer | None = None
        while not self._closing.is_set():
            line = reader.readline()
            if line is None:
                break
            try:
                msg = decode_msg(line)
            except PhysiortError:
                continue  # one bad line does not kill the link
            with self._lock:
                if peer is None:
                    if msg.type != "hello":
                        break
                    if msg.node_id in self._peers and self._peers[msg.node_id].connected:
                        conn.close()
                        return  # duplicate node_id: reject silently
                    peer = _Peer(node_id=msg.node_id, conn=conn)
                    self._peers[msg.node_id] = peer
                    self._spawn(self._sender_loop, peer)
                    # hello back: ack plus the active session, if any, so a
                    # late joiner learns the current phase.
                    active = self._active
                    peer.outbox.put(encode_msg(SyncMessage(
                        type="hello", node_id=self.node_id,
                        session_id=active.session_id if active else "",
                        condition=active.condition if active else "",
                        server_mono_ns=time.monotonic_ns())))
                    continue
                peer.last_seen = time.monotonic()
                if msg.type == "ready":
                    peer.phase = Phase.ARMED
                elif msg.type == "stop":
                    peer.phase = Phase.IDLE
        if peer is not None:
            with self._lock:
                peer.connected = False
                peer.outbox.put(None)
        conn.close()

    def _sender_loop(self, peer: _Peer):
        while True:
            item = peer.outbox.get()
            if item is None:
                return
            try:
                peer.conn.sendall(item)
            except OSError:
                with self._lock:
                    peer.connected = False
                return

    def _heartbeat_loop(self):
        while not self._closing.wait(self.heartbeat_s):
            beat = encode_msg(SyncMessage(type="heartbeat", node_id=self.node_id,
                                          server_mono_ns=time.monotonic_ns()))
            deadline = time.monotonic() - MISSED_HEARTBEATS * self.heartbeat_s
            with self._lock:
                for peer in self._peers.values():
                    if not peer.connected:
                        continue
                    if peer.last_seen < deadline:
                        peer.connected = False
                        peer.outbox.put(None)
                        peer.conn.close()
                        continue
                    peer.outbox.put(beat)

    def peers(self) -> list[tuple[str, Phase, bool]]:
        with self._lock:
            return [(p.node_id, p.phase, p.connected) for p in self._peers.values()]

    def start_session(self, session_id: str, condition: str,
                      duration_s: float | None = None, force: bool = False) -> SyncMessage:
        """Broadcast start to all ready peers, then trigger the local
        recorder in the same dispatch step."""
        msg = SyncMessage(type="start", node_id=self.node_id,
                          session_id=session_id, condition=condition,
                          duration_s=duration_s,
                          server_mono_ns=time.monotonic_ns())
        wire = encode_msg(msg)
        with self._lock:
            ready = [p for p in self._peers.values()
                     if p.connected and p.phase is Phase.ARMED]
            if not ready and not force:
                raise NoReadyPeers("no armed peers; pass force to record locally")
            for peer in ready:
                peer.outbox.put(wire)
                peer.phase = Phase.RECORDING
            self._active = msg
            self.phase = Phase.RECORDING
            self.local_receipt_ns = time.monotonic_ns()
        if self.on_start:
            self.on_start(msg)
        return msg

    def stop_session(self) -> None:
        msg = SyncMessage(type="stop", node_id=self.node_id,
                          session_id=self._active.session_id if self._active else "",
                          server_mono_ns=time.monotonic_ns())
        wire = encode_msg(msg)
        with self._lock:
            for peer in self._peers.values():
                if peer.connected:
                    peer.outbox.put(wire)
                    if peer.phase is Phase.RECORDING:
                        peer.phase = Phase.STOPPED
            self._active = None
            self.phase = Phase.IDLE
        if self.on_stop:
            self.on_stop(msg)

    def close(self):
        self._closing.set()
        with self._lock:
            for peer in self._peers.values():
                peer.outbox.put(None)
                peer.conn.close()
            self._peers.clear()
        self._sock.close()


class SyncClient:
    """Single-owner client handle. ready() arms it; a start received while
    armed flips it to recording and fires on_start."""

    def __init__(self, server_address: tuple[str, int], node_id: str,
                 on_start=None, on_stop=None, heartbeat_s: float = HEARTBEAT_S,
                 timeout_s: float = 5.0):
        self.node_id = node_id
        self.phase = Phase.IDLE
        self.active_session: SyncMessage | None = None
        self.server_session: SyncMessage | None = None
        self.receipt_ns: int | None = None
        self.on_start = on_start
        self.on_stop = on_stop
        self.heartbeat_s = heartbeat_s
        self._lock = threading.Lock()
        self._closing = threading.Event()
        self._hello_ok = threading.Event()
        try:
            self._conn = socket.create_connection(server_address, timeout=timeout_s)
        except OSError as exc:
            raise ConnectFailed(f"cannot reach {server_address}: {exc}") from exc
        self._conn.settimeout(None)
        self._send(SyncMessage(type="hello", node_id=node_id))
        self._reader_thread = threading.Thread(target=self._read_loop, daemon=True)
        self._reader_thread.start()
        if not self._hello_ok.wait(timeout_s):
            self.close()
            raise ConnectFailed("server did not acknowledge hello")
        threading.Thread(target=self._heartbeat_loop, daemon=True).start()

    def _send(self, msg: SyncMessage):
        try:
            self._conn.sendall(encode_msg(msg))
        except OSError:
            pass

    def _heartbeat_loop(self):
        while not self._closing.wait(self.heartbeat_s):
            self._send(SyncMessage(type="heartbeat", node_id=self.node_id))

    def _read_loop(self):
        reader = _LineReader(self._conn)
        while not self._closing.is_set():
            line = reader.readline()
            if line is None:
                break
            try:
                msg = decode_msg(line)
            except PhysiortError:
                continue
            if msg.type == "hello":
                with self._lock:
                    if msg.session_id:
                        self.server_session = msg
                self._hello_ok.set()
            elif msg.type == "start":
                fire = False
                with self._lock:
                    self.server_session = msg
                    if self.phase is Phase.ARMED:
                        self.phase = Phase.RECORDING
                        self.active_session = msg
                        self.receipt_ns = time.monotonic_ns()
                        fire = True
                if fire and self.on_start:
                    self.on_start(msg)
            elif msg.type == "stop":
                fire = False
                with self._lock:
                    self.server_session = None
                    if self.phase is Phase.RECORDING:
                        self.phase = Phase.STOPPED
                        fire = True
                if fire and self.on_stop:
                    self.on_stop(msg)
                with self._lock:
                    if self.phase is Phase.STOPPED:
                        self.phase = Phase.IDLE
                        self.active_session = None
        # Server gone: recording continues locally, anything else resets.
        with self._lock:
            if self.phase is not Phase.RECORDING:
                self.phase = Phase.IDLE

    def ready(self):
        with self._lock:
            self.phase = Phase.ARMED
        self._send(SyncMessage(type="ready", node_id=self.node_id))

    def finish(self):
        """Local recording done (timer or operator); return to idle."""
        with self._lock:
            self.phase = Phase.IDLE
            self.active_session = None

    def close(self):
        self._closing.set()
        try:
            self._conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._conn.close()


def measure_trigger_jitter(n_nodes: int, session_id: str = "jitter",
                           condition: str = "loopback") -> dict:
    """Loopback skew harness: n_nodes recorders (server-local plus
    n_nodes - 1 clients) share one monotonic clock; returns the receipt
    timestamps and the max pairwise difference in nanoseconds."""
    if n_nodes < 1:
        raise ValueError("need at least one node")
    server = SyncServer(listen_port=0)
    clients: list[SyncClient] = []
    started = threading.Barrier(n_nodes)
    try:
        for i in range(n_nodes - 1):
            client = SyncClient(("127.0.0.1", server.port), node_id=f"node{i + 1}",
                                on_start=lambda m: started.wait(timeout=5.0))
            client.ready()
            clients.append(client)
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline:
            armed = sum(1 for _, phase, ok in server.peers()
                        if ok and phase is Phase.ARMED)
            if armed == n_nodes - 1:
                break
            time.sleep(0.002)
        server.start_session(session_id, condition, force=(n_nodes == 1))
        started.wait(timeout=5.0)
        receipts = {server.node_id: server.local_receipt_ns}
        for client in clients:
            receipts[client.node_id] = client.receipt_ns
        stamps = [v for v in receipts.values() if v is not None]
        if len(stamps) != n_nodes:
            raise PhysiortError("a recorder missed the start trigger")
        skew = max(stamps) - min(stamps) if len(stamps) > 1 else 0
        return {"max_skew_ns": int(skew), "receipts_ns": receipts}
    finally:
        for client in clients:
            client.close()
        server.close()
