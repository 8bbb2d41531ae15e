"""WebSocket gateway: the console's window onto a running session.

Outbound traffic is the runtime's event stream (status, samples, sqi,
metric, biofeedback) plus mark_ack and error; inbound commands are
start_condition, stop, mark_on, mark_off and status. Every console
gets the same broadcast; each connection sits behind its own bounded
drop-oldest queue so one slow console cannot stall the others or the
recording itself.
"""

from __future__ import annotations

import json
import threading
from collections import deque

from websockets.sync.server import serve
from websockets.exceptions import ConnectionClosed

from .config import condition_schedule
from .errors import PhysiortError
from .runtime import BadCommand, SessionRuntime
from .sync import PortInUse

OUTBOX_LIMIT = 4096


class _Connection:
    def __init__(self, ws):
        self.ws = ws
        self.outbox: deque = deque(maxlen=OUTBOX_LIMIT)
        self.wake = threading.Condition()
        self.alive = True

    def push(self, text: str):
        with self.wake:
            self.outbox.append(text)
            self.wake.notify()


class Gateway:
    """Serves one SessionRuntime to any number of consoles."""

    def __init__(self, runtime: SessionRuntime, host: str = "127.0.0.1",
                 port: int = 8765):
        self.runtime = runtime
        self._conns: set[_Connection] = set()
        self._lock = threading.Lock()
        self._closing = threading.Event()
        self._schedule = {e.name: e for e in condition_schedule(runtime.exp)}
        try:
            self._server = serve(self._handler, host, port)
        except OSError as exc:
            raise PortInUse(f"cannot serve websocket on {host}:{port}: {exc}") from exc
        self.port = self._server.socket.getsockname()[1]
        self._events = runtime.add_listener()
        threading.Thread(target=self._server.serve_forever, daemon=True).start()
        threading.Thread(target=self._broadcast_loop, daemon=True).start()

    # -- outbound ------------------------------------------------------------

    def _broadcast_loop(self):
        while not self._closing.is_set():
            if not self._events:
                self._closing.wait(0.02)
                continue
            event = self._events.popleft()
            self._broadcast(event)

    def _broadcast(self, event: dict):
        text = json.dumps(event)
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            conn.push(text)

    def _sender_loop(self, conn: _Connection):
        while conn.alive and not self._closing.is_set():
            with conn.wake:
                while not conn.outbox and conn.alive:
                    if not conn.wake.wait(timeout=0.5):
                        break
                if not conn.outbox:
                    continue
                text = conn.outbox.popleft()
            try:
                conn.ws.send(text)
            except (ConnectionClosed, OSError):
                conn.alive = False

    # -- inbound -------------------------------------------------------------

    def _handler(self, ws):
        conn = _Connection(ws)
        with self._lock:
            self._conns.add(conn)
        sender = threading.Thread(target=self._sender_loop, args=(conn,), daemon=True)
        sender.start()
        conn.push(json.dumps(self.runtime.status_event()))
        try:
            while not self._closing.is_set():
                try:
                    raw = ws.recv()
                except (ConnectionClosed, OSError):
                    break
                self._handle_command(conn, raw)
        finally:
            conn.alive = False
            with conn.wake:
                conn.wake.notify()
            with self._lock:
                self._conns.discard(conn)

    def _handle_command(self, conn: _Connection, raw):
        try:
            cmd = json.loads(raw)
            if not isinstance(cmd, dict) or "cmd" not in cmd:
                raise ValueError("commands are objects with a 'cmd' field")
            name = cmd["cmd"]
            if name == "start_condition":
                condition = cmd.get("condition")
                if condition not in self._schedule:
                    raise BadCommand(f"unknown condition {condition!r}")
                entry = self._schedule[condition]
                self.runtime.arm(entry.name, entry.duration_s)
                self.runtime.start(threaded=True)
            elif name == "stop":
                self.runtime.request_stop()
            elif name == "mark_on":
                code = cmd.get("code")
                if not isinstance(code, int) or isinstance(code, bool):
                    raise BadCommand("mark_on needs an integer code")
                idx = self.runtime.mark_on(code)
                self._broadcast({"type": "mark_ack", "action": "on", "code": code,
                                 "sample_idx": idx, "t": idx / self.runtime.fs})
            elif name == "mark_off":
                idx = self.runtime.mark_off()
                self._broadcast({"type": "mark_ack", "action": "off", "code": 0,
                                 "sample_idx": idx, "t": idx / self.runtime.fs})
            elif name == "status":
                conn.push(json.dumps(self.runtime.status_event()))
            else:
                raise BadCommand(f"unknown command {name!r}")
        except (PhysiortError, ValueError, json.JSONDecodeError) as exc:
            conn.push(json.dumps({"type": "error", "message": str(exc)}))

    def close(self):
        self._closing.set()
        self.runtime.remove_listener(self._events)
        self._server.shutdown()
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            conn.alive = False
            try:
                conn.ws.close()
            except Exception:
                pass
