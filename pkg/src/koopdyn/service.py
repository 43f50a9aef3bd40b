"""Interactive session server.

Exposes stepping and control over a persistent TCP connection speaking
length-delimited UTF-8 JSON: each message is a 4-byte big-endian length
prefix followed by one JSON object.  One session per connection; messages
within a session are processed strictly in arrival order, and every state
broadcast carries a strictly increasing version number.

Wire messages (client -> server):
    {"type": "load", "model": path?, "mesh": path?, "display_stride": s?}
    {"type": "force", "vertex": i, "vec": [x, y, z]}
    {"type": "set_h", "h": seconds}
    {"type": "set_damping", "mu": fraction}
    {"type": "step", "n": count}
    {"type": "control", "targets": [[vertex, [dx, dy, dz]], ...], "horizon": N}
    {"type": "reset"}

Server -> client:
    {"type": "state", "version": v, "positions": [...]}   (flat 3m floats)
    {"type": "ok"}                                        (silent acks)
    {"type": "control_result", "pressures": [...], "keyframes": [...]}
    {"type": "error", "code": "usage"|"data"|"numerical", "detail": "..."}

Step-size and damping edits always derive from the pristine loaded model, so
they are absolute settings, never cumulative.
"""
from __future__ import annotations

import json
import socket
import socketserver
import struct

import numpy as np

from . import control as ctl
from . import io, koopstep
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    IllConditionedError,
    KoopdynError,
    StepSizeError,
)
from .statespace import LiftedState, lift_force

_NUMERICAL = (ConvergenceError, IllConditionedError, StepSizeError)
CONTROL_KEYFRAMES = 10


class Session:
    """Single-connection simulation session.

    ``handle_message(dict) -> list[dict]`` is the whole protocol; the socket
    layer only frames bytes.  Keeping it socket-free makes the session
    directly unit-testable and the recorded-log replay deterministic.
    """

    def __init__(self, default_model_path, default_mesh_path):
        self.default_model_path = default_model_path
        self.default_mesh_path = default_mesh_path
        self.pristine = None      # model exactly as loaded
        self.model = None         # pristine with the active h / damping edits
        self.elastic = None
        self.chambers = ()
        self.current = None
        self.h_active = None
        self.mu_active = 0.0
        self.version = 0
        self.stride = 1
        self.pending_force = None

    # -- helpers --------------------------------------------------------------

    def _broadcast(self):
        self.version += 1
        n = self.model.n_vertices
        pos = self.elastic.rest_positions + self.current.displacement.reshape(n, 3)
        return {"type": "state", "version": self.version,
                "positions": pos[:: self.stride].ravel().tolist()}

    def _rebuild_model(self):
        """Re-derive the active model from the pristine one (absolute edits)."""
        model = self.pristine
        if self.mu_active > 0.0:
            model = koopstep.apply_damping(model, self.mu_active)
        if self.h_active != self.pristine.h:
            model = koopstep.rescale_timestep(model, self.h_active)
        self.model = model

    def _require_loaded(self):
        if self.model is None:
            raise DomainError("no model loaded; send a 'load' message first")

    # -- message handlers ------------------------------------------------------

    def handle_message(self, msg):
        if not isinstance(msg, dict) or "type" not in msg:
            return [_error("usage", "message must be an object with a 'type'")]
        handler = getattr(self, f"_on_{msg['type']}", None)
        if handler is None:
            return [_error("usage", f"unknown message type {msg['type']!r}")]
        try:
            return handler(msg)
        except _NUMERICAL as exc:
            return [_error("numerical", str(exc))]
        except (KoopdynError, KeyError, ValueError, TypeError, OSError) as exc:
            return [_error("data", f"{type(exc).__name__}: {exc}")]

    def _on_load(self, msg):
        model_path = msg.get("model", self.default_model_path)
        mesh_path = msg.get("mesh", self.default_mesh_path)
        pristine = io.read_model(model_path)
        elastic, chambers = io.read_mesh(mesh_path)
        if elastic.n_vertices != pristine.n_vertices:
            raise DimensionError("mesh and model vertex counts differ")
        stride = int(msg.get("display_stride", 1))
        if stride < 1:
            raise DomainError(f"display_stride must be >= 1, got {stride}")
        self.pristine = self.model = pristine
        self.elastic, self.chambers = elastic, chambers
        self.h_active, self.mu_active = pristine.h, 0.0
        self.stride = stride
        self.current = LiftedState(np.zeros(pristine.dim))
        self.pending_force = None
        return [self._broadcast()]

    def _on_force(self, msg):
        self._require_loaded()
        v = int(msg["vertex"])
        n = self.model.n_vertices
        if not 0 <= v < n:
            raise DimensionError(f"vertex {v} out of range for {n} vertices")
        vec = np.asarray(msg["vec"], dtype=np.float64)
        if vec.shape != (3,):
            raise DimensionError("force vec must have 3 components")
        f = np.zeros(3 * n)
        f[3 * v: 3 * v + 3] = vec / self.elastic.vertex_masses[v]
        self.pending_force = lift_force(f, self.h_active)
        return [{"type": "ok"}]

    def _on_set_h(self, msg):
        self._require_loaded()
        h = float(msg["h"])
        if h <= 0:
            raise DomainError(f"h must be positive, got {h}")
        self.h_active = h
        self._rebuild_model()
        self.pending_force = None  # the old lift is scaled for the old h
        return [{"type": "ok"}]

    def _on_set_damping(self, msg):
        self._require_loaded()
        mu = float(msg["mu"])
        self.mu_active = mu
        self._rebuild_model()
        return [{"type": "ok"}]

    def _on_step(self, msg):
        self._require_loaded()
        n = int(msg.get("n", 1))
        if n < 0:
            raise DomainError(f"step count must be >= 0, got {n}")
        if n == 0:
            return [self._broadcast()]
        x = self.current.values
        if self.pending_force is not None:
            x = x + self.pending_force.values
            self.pending_force = None
        op = koopstep.real_operator(self.model)
        self.current = koopstep.real_multi_step(op, self.model, x, n)
        return [self._broadcast()]

    def _on_control(self, msg):
        self._require_loaded()
        if not self.chambers:
            raise DomainError("mesh defines no chamber faces")
        targets = msg["targets"]
        horizon = int(msg["horizon"])
        dofs, goal = [], []
        for vertex, disp in targets:
            vertex = int(vertex)
            disp = np.asarray(disp, dtype=np.float64)
            if disp.shape != (3,):
                raise DimensionError("each target needs a 3-vector displacement")
            dofs.extend(range(3 * vertex, 3 * vertex + 3))
            goal.extend(disp)
        problem = ctl.ControlProblem(chambers=self.chambers,
                                     goal_dofs=np.asarray(dofs, dtype=np.intp),
                                     goal=np.asarray(goal), horizon=horizon)
        C, trace = ctl.solve_pressures(self.model, problem, self.current,
                                       self.elastic.rest_positions,
                                       self.elastic.vertex_masses)
        # predicted keyframes: the reduced trajectory under the solved pressures
        A = ctl.pressure_force_map(self.elastic.rest_positions,
                                   self.elastic.vertex_masses, trace[-1][1],
                                   self.chambers, self.model.h)
        n = self.model.n_vertices
        ticks = np.unique(np.linspace(1, horizon, CONTROL_KEYFRAMES, dtype=int))
        keyframes = []
        for t in ticks:
            x_t = ctl.predict_final(self.model, A, C, int(t), x0=self.current)
            pos = self.elastic.rest_positions + x_t.displacement.reshape(n, 3)
            keyframes.append({"step": int(t),
                              "positions": pos[:: self.stride].ravel().tolist()})
        return [{"type": "control_result", "pressures": C.tolist(),
                 "keyframes": keyframes}]

    def _on_reset(self, msg):
        self._require_loaded()
        self.current = LiftedState(np.zeros(self.model.dim))
        self.pending_force = None
        return [self._broadcast()]


def _error(code, detail):
    return {"type": "error", "code": code, "detail": detail}


# -- framing ------------------------------------------------------------------

def encode_message(obj) -> bytes:
    payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(payload)) + payload


def read_message(sock_file):
    """Read one length-prefixed JSON message from a binary file-like object;
    returns None on a clean end of stream."""
    header = sock_file.read(4)
    if len(header) < 4:
        return None
    (length,) = struct.unpack(">I", header)
    payload = sock_file.read(length)
    if len(payload) < length:
        return None
    return json.loads(payload.decode("utf-8"))


# -- TCP server ---------------------------------------------------------------

class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        session = Session(self.server.model_path, self.server.mesh_path)
        rfile = self.request.makefile("rb")
        try:
            while True:
                try:
                    msg = read_message(rfile)
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    self._send(_error("usage", f"bad frame: {exc}"))
                    continue
                if msg is None:
                    return
                for reply in session.handle_message(msg):
                    self._send(reply)
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            rfile.close()

    def _send(self, obj):
        self.request.sendall(encode_message(obj))


class SessionServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, model_path, mesh_path):
        super().__init__(address, _Handler)
        self.model_path = model_path
        self.mesh_path = mesh_path


def create_server(model_path, mesh_path, host="127.0.0.1", port=0) -> SessionServer:
    """Bind the session server; ``port=0`` picks a free port."""
    return SessionServer((host, port), model_path, mesh_path)


class Client:
    """Minimal blocking client for tests and scripted sessions."""

    def __init__(self, host, port, timeout=30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self.sock.makefile("rb")

    def send(self, msg):
        self.sock.sendall(encode_message(msg))

    def recv(self):
        return read_message(self._rfile)

    def request(self, msg):
        self.send(msg)
        return self.recv()

    def close(self):
        self._rfile.close()
        self.sock.close()
