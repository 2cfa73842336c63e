"""Network gateway exposing the tick loop to external controllers.

One controller drives the session over the framed wire protocol, either as
raw TCP bytes or with each message wrapped in a single binary WebSocket
frame (identical bytes either way). The same port also answers plain HTTP
GETs with static files so the browser cockpit can be served from the
simulator itself.

Lockstep mode blocks each tick on a command acknowledging the tick just
sent; realtime mode applies the latest command received, hovering until one
arrives.
"""
from __future__ import annotations

import base64
import hashlib
import logging
import socket
import struct
import threading
import time
from pathlib import Path

import numpy as np

from . import render, scenario, wire
from .config import SessionConfig
from .session import CommandSource, SessionAborted, SessionLog, run_session

__all__ = ["GatewayServer", "GatewaySource", "serve", "parse_endpoint"]

log = logging.getLogger(__name__)

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".svg": "image/svg+xml",
}


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host, int(port)


# ---------------------------------------------------------------------------
# Transports


class RawTransport:
    """Length-prefixed messages straight over a TCP socket.

    Sends go through a dup'd socket object so their timeout is independent
    of a reader thread blocking on the receive side; a stalled peer can
    never wedge the simulation loop.
    """

    def __init__(self, sock: socket.socket, rfile=None):
        self.sock = sock
        self.rfile = rfile if rfile is not None else sock.makefile("rb")
        self._send_sock = sock.dup()

    def send(self, data: bytes, timeout: float | None = None) -> None:
        self._send_sock.settimeout(timeout)
        try:
            self._send_sock.sendall(data)
        except socket.timeout as exc:
            raise TimeoutError("send timed out") from exc

    def recv_message(self, timeout: float | None = None) -> wire.WireMessage:
        self.sock.settimeout(timeout)
        try:
            return wire.read_message(self.rfile)
        except socket.timeout as exc:
            raise TimeoutError("read timed out") from exc
        finally:
            self.sock.settimeout(None)

    def close(self) -> None:
        for s in (self._send_sock, self.sock):
            try:
                s.close()
            except OSError:
                pass


class WsTransport:
    """One wire message per binary WebSocket frame; bytes inside are identical."""

    def __init__(self, sock: socket.socket, rfile):
        self.sock = sock
        self.rfile = rfile
        self._send_sock = sock.dup()
        self._send_lock = threading.Lock()

    def send(self, data: bytes, timeout: float | None = None) -> None:
        header = bytearray([0x82])  # FIN + binary opcode
        n = len(data)
        if n < 126:
            header.append(n)
        elif n < (1 << 16):
            header.append(126)
            header += struct.pack(">H", n)
        else:
            header.append(127)
            header += struct.pack(">Q", n)
        with self._send_lock:
            self._send_sock.settimeout(timeout)
            try:
                self._send_sock.sendall(bytes(header) + data)
            except socket.timeout as exc:
                raise TimeoutError("send timed out") from exc

    def _read_frame(self) -> tuple[int, bool, bytes]:
        head = self._read_exact(2)
        fin = bool(head[0] & 0x80)
        opcode = head[0] & 0x0F
        masked = bool(head[1] & 0x80)
        n = head[1] & 0x7F
        if n == 126:
            (n,) = struct.unpack(">H", self._read_exact(2))
        elif n == 127:
            (n,) = struct.unpack(">Q", self._read_exact(8))
        mask = self._read_exact(4) if masked else None
        payload = self._read_exact(n) if n else b""
        if mask:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, fin, payload

    def _read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            chunk = self.rfile.read(remaining)
            if not chunk:
                raise EOFError("websocket stream closed")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv_message(self, timeout: float | None = None) -> wire.WireMessage:
        self.sock.settimeout(timeout)
        try:
            data = bytearray()
            message_opcode = None
            while True:
                opcode, fin, payload = self._read_frame()
                if opcode == 0x8:
                    raise EOFError("websocket closed by peer")
                if opcode == 0x9:  # ping
                    with self._send_lock:
                        self._send_sock.sendall(bytes([0x8A, len(payload)]) + payload)
                    continue
                if opcode == 0xA:  # pong
                    continue
                if opcode in (0x1, 0x2):
                    message_opcode = opcode
                    data = bytearray(payload)
                elif opcode == 0x0:
                    if message_opcode is None:
                        raise wire.FramingError("websocket continuation without start")
                    data += payload
                else:
                    raise wire.FramingError(f"unsupported websocket opcode {opcode}")
                if fin:
                    break
            msg, used = wire.decode_message(bytes(data))
            if used != len(data):
                raise wire.ProtocolError("websocket message carries trailing bytes")
            return msg
        except socket.timeout as exc:
            raise TimeoutError("read timed out") from exc
        finally:
            self.sock.settimeout(None)

    def close(self) -> None:
        try:
            with self._send_lock:
                self._send_sock.settimeout(1.0)
                self._send_sock.sendall(bytes([0x88, 0]))
        except OSError:
            pass
        for s in (self._send_sock, self.sock):
            try:
                s.close()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# HTTP helpers (static files + WebSocket upgrade)


def _read_http_request(rfile) -> tuple[str, str, dict]:
    line = rfile.readline(8192)
    if not line:
        raise EOFError("connection closed before request line")
    parts = line.decode("latin-1").strip().split()
    if len(parts) < 2:
        raise ValueError(f"malformed request line: {line!r}")
    method, target = parts[0], parts[1]
    headers: dict[str, str] = {}
    while True:
        line = rfile.readline(8192)
        if not line or line in (b"\r\n", b"\n"):
            break
        name, _, value = line.decode("latin-1").partition(":")
        headers[name.strip().lower()] = value.strip()
    return method, target, headers


def _http_response(sock, status: str, body: bytes, content_type: str = "text/plain") -> None:
    head = (f"HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\n"
            f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n")
    try:
        sock.sendall(head.encode("latin-1") + body)
    except OSError:
        pass


def _serve_static(sock, target: str, static_dir: Path | None) -> None:
    if static_dir is None:
        _http_response(sock, "404 Not Found", b"no static directory configured\n")
        return
    path = target.split("?", 1)[0]
    if path == "/":
        path = "/index.html"
    candidate = (static_dir / path.lstrip("/")).resolve()
    if not str(candidate).startswith(str(static_dir.resolve())) or not candidate.is_file():
        _http_response(sock, "404 Not Found", b"not found\n")
        return
    ctype = _CONTENT_TYPES.get(candidate.suffix.lower(), "application/octet-stream")
    _http_response(sock, "200 OK", candidate.read_bytes(), ctype)


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode("latin-1")).digest()
    return base64.b64encode(digest).decode("latin-1")


def _upgrade_websocket(sock, rfile, headers: dict) -> WsTransport:
    key = headers.get("sec-websocket-key")
    if not key:
        raise ValueError("websocket upgrade missing Sec-WebSocket-Key")
    resp = ("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
            f"Connection: Upgrade\r\nSec-WebSocket-Accept: {_ws_accept_key(key)}\r\n\r\n")
    sock.sendall(resp.encode("latin-1"))
    return WsTransport(sock, rfile)


# ---------------------------------------------------------------------------
# Command source bridging the session loop and a controller connection


class GatewaySource(CommandSource):
    def __init__(self, transport, realtime: bool, gateway_cfg, websocket: bool = False):
        self.transport = transport
        self.realtime = realtime
        self.cfg = gateway_cfg
        self.encoding = "png" if websocket else gateway_cfg.encoding
        self._mailbox: wire.CommandMessage | None = None
        self._mailbox_lock = threading.Lock()
        self._disconnected_at: float | None = None
        self._reader: threading.Thread | None = None
        self._overview_cache: tuple[int, bytes, int, int] | None = None

    # -- handshake ----------------------------------------------------------
    # The controller speaks first: it sends {"type": "hello",
    # "protocol_version": N} on connect, and the server answers with the
    # full hello (version, manifest summary, vac dims, mode).

    def begin(self, session_info: dict) -> None:
        try:
            msg = self.transport.recv_message(timeout=self.cfg.lockstep_timeout_s)
        except (EOFError, TimeoutError, wire.FramingError, OSError) as exc:
            raise SessionAborted(f"handshake failed: {exc}") from exc
        if msg.type != "hello":
            self._send_quiet(wire.encode_error(f"expected hello, got {msg.type!r}"))
            raise SessionAborted(f"handshake failed: first message was {msg.type!r}")
        peer = msg.header.get("protocol_version")
        if peer != wire.PROTOCOL_VERSION:
            self._send_quiet(wire.encode_error(
                f"protocol version mismatch: server {wire.PROTOCOL_VERSION}, client {peer}"))
            raise SessionAborted(f"protocol version mismatch: server "
                                 f"{wire.PROTOCOL_VERSION}, client {peer}")
        try:
            self.transport.send(wire.encode_hello(
                session_info["manifest"], session_info["vac"], session_info["mode"]),
                timeout=self.cfg.lockstep_timeout_s)
        except (OSError, TimeoutError) as exc:
            raise SessionAborted(f"handshake failed: {exc}") from exc
        if self.realtime:
            self._reader = threading.Thread(target=self._reader_loop, daemon=True)
            self._reader.start()

    def _send_quiet(self, data: bytes) -> None:
        try:
            self.transport.send(data, timeout=2.0)
        except (OSError, TimeoutError):
            pass

    # -- realtime reader ----------------------------------------------------

    def _reader_loop(self) -> None:
        while True:
            try:
                msg = self.transport.recv_message()
            except (EOFError, OSError, wire.FramingError):
                self._disconnected_at = time.monotonic()
                return
            try:
                if msg.type != "command":
                    raise wire.ProtocolError(f"unexpected message type {msg.type!r}")
                cmd = wire.decode_command(msg)
            except wire.ProtocolError as exc:
                try:
                    self.transport.send(wire.encode_error(str(exc)), timeout=2.0)
                except (OSError, TimeoutError):
                    pass
                continue
            with self._mailbox_lock:
                self._mailbox = cmd

    # -- per-tick exchange --------------------------------------------------

    def _overview_message(self, src_frame: scenario.Frame) -> bytes | None:
        if not self.cfg.overview or src_frame is None:
            return None
        cached = self._overview_cache
        if cached is None or cached[0] != src_frame.index:
            src_h, src_w = src_frame.pixels.shape[:2]
            ow = min(self.cfg.overview_width, src_w)
            oh = max(1, int(round(src_h * ow / src_w)))
            small = render.resample_to(src_frame.pixels, ow, oh,
                                       render.UpscalerSpec(kind="bilinear"))
            payload = wire._png_bytes(small)
            self._overview_cache = (src_frame.index, payload, src_w, src_h)
        index, payload, src_w, src_h = self._overview_cache
        header = {"type": "overview", "frame_id": index, "encoding": "png",
                  "src_width": src_w, "src_height": src_h,
                  "payload_bytes": len(payload)}
        return wire.encode_message(header, payload)

    def get_command(self, tick, state_view, vac, src_frame=None):
        extra = {
            "footprint_corners_src": [[float(u), float(v)]
                                      for u, v in vac.footprint_corners_src],
            "scale_factor": float(vac.scale_factor),
            "coverage": float(vac.coverage),
        }
        send_timeout = (self.cfg.realtime_hold_s if self.realtime
                        else self.cfg.lockstep_timeout_s)
        try:
            if self._disconnected_at is None:
                overview = self._overview_message(src_frame)
                if overview is not None:
                    self.transport.send(overview, timeout=send_timeout)
                self.transport.send(wire.encode_state(state_view, vac.pixels,
                                                      self.encoding, extra=extra),
                                    timeout=send_timeout)
        except (OSError, TimeoutError) as exc:
            if not self.realtime:
                raise SessionAborted(f"controller unresponsive: {exc}") from exc
            if self._disconnected_at is None:
                self._disconnected_at = time.monotonic()
        if self.realtime:
            return self._realtime_command()
        return self._lockstep_command(tick)

    def _realtime_command(self) -> wire.CommandMessage:
        if self._disconnected_at is not None:
            if time.monotonic() - self._disconnected_at > self.cfg.realtime_hold_s:
                raise SessionAborted("controller disconnected and hold timeout elapsed")
            return wire.CommandMessage(stick=(0.0, 0.0, 0.0, 0.0))
        with self._mailbox_lock:
            cmd = self._mailbox
        if cmd is not None:
            return cmd
        return wire.CommandMessage(stick=(0.0, 0.0, 0.0, 0.0))

    def _lockstep_command(self, tick: int) -> wire.CommandMessage:
        deadline = time.monotonic() + self.cfg.lockstep_timeout_s
        consecutive_errors = 0
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise SessionAborted(f"lockstep command timed out after "
                                     f"{self.cfg.lockstep_timeout_s}s at tick {tick}")
            try:
                msg = self.transport.recv_message(timeout=remaining)
            except TimeoutError:
                raise SessionAborted(f"lockstep command timed out after "
                                     f"{self.cfg.lockstep_timeout_s}s at tick {tick}") from None
            except (EOFError, OSError) as exc:
                raise SessionAborted(f"controller disconnected at tick {tick}: {exc}") from exc
            except wire.FramingError as exc:
                raise SessionAborted(f"stream desynchronized at tick {tick}: {exc}") from exc
            try:
                if msg.type != "command":
                    raise wire.ProtocolError(f"unexpected message type {msg.type!r}")
                cmd = wire.decode_command(msg)
                if cmd.tick_ack != tick:
                    raise wire.ProtocolError(f"tick_ack {cmd.tick_ack} does not match tick {tick}")
            except wire.ProtocolError as exc:
                consecutive_errors += 1
                try:
                    self.transport.send(wire.encode_error(str(exc)), timeout=2.0)
                except (OSError, TimeoutError):
                    pass
                if consecutive_errors >= 3:
                    raise SessionAborted(f"3 consecutive protocol errors at tick {tick}: "
                                         f"{exc}") from exc
                continue
            return cmd

    def finish(self, status: str, final_pos) -> None:
        try:
            self.transport.send(wire.encode_message({
                "type": "end", "status": status,
                "final_pos": [float(v) for v in final_pos],
            }), timeout=2.0)
        except (OSError, TimeoutError):
            pass

    def close(self) -> None:
        self.transport.close()


# ---------------------------------------------------------------------------
# Server


class GatewayServer:
    """Binds the endpoint, adopts exactly one controller, runs the session."""

    def __init__(self, config: SessionConfig, static_dir: str | Path | None = None):
        self.config = config
        self.static_dir = Path(static_dir) if static_dir else None
        host, port = parse_endpoint(config.gateway.endpoint)
        self._listener = socket.create_server((host, port))
        self._controller_bound = False
        self._shutdown = False

    @property
    def port(self) -> int:
        return self._listener.getsockname()[1]

    @property
    def endpoint(self) -> str:
        host, port = self._listener.getsockname()[:2]
        return f"{host}:{port}"

    @staticmethod
    def _peek_head(conn: socket.socket, n: int = 4, timeout: float = 10.0) -> bytes:
        deadline = time.monotonic() + timeout
        data = b""
        while len(data) < n:
            conn.settimeout(max(0.01, deadline - time.monotonic()))
            chunk = conn.recv(n, socket.MSG_PEEK)
            if not chunk:
                return data
            data = chunk
            if len(data) < n:
                if time.monotonic() > deadline:
                    return data
                time.sleep(0.005)
        return data

    def _classify(self, conn: socket.socket):
        """Dispatch one accepted connection; returns a GatewaySource for controllers."""
        conn.settimeout(10.0)
        try:
            head = self._peek_head(conn)
        except OSError:
            conn.close()
            return None
        rfile = conn.makefile("rb")
        if head[:4] in (b"GET ", b"HEAD") or head[:4] == b"POST":
            try:
                method, target, headers = _read_http_request(rfile)
            except (EOFError, ValueError, OSError):
                conn.close()
                return None
            if headers.get("upgrade", "").lower() == "websocket":
                try:
                    transport = _upgrade_websocket(conn, rfile, headers)
                except (ValueError, OSError):
                    conn.close()
                    return None
                conn.settimeout(None)
                return self._adopt(transport, websocket=True)
            _serve_static(conn, target, self.static_dir)
            conn.close()
            return None
        conn.settimeout(None)
        return self._adopt(RawTransport(conn, rfile), websocket=False)

    def _adopt(self, transport, websocket: bool):
        if self._controller_bound:
            try:
                transport.send(wire.encode_error("controller already connected"), timeout=2.0)
            except (OSError, TimeoutError):
                pass
            transport.close()
            return None
        self._controller_bound = True
        return GatewaySource(transport, realtime=self.config.realtime,
                             gateway_cfg=self.config.gateway, websocket=websocket)

    def wait_for_controller(self, timeout: float | None = None) -> GatewaySource:
        self._listener.settimeout(timeout)
        while True:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                raise TimeoutError("no controller connected") from None
            source = self._classify(conn)
            if source is not None:
                return source

    def _background_acceptor(self) -> None:
        self._listener.settimeout(0.2)
        while not self._shutdown:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                self._classify(conn)
            except Exception:
                log.exception("background connection handling failed")

    def run(self) -> SessionLog:
        """Wait for a controller, drive the session, and return its log."""
        source = self.wait_for_controller()
        acceptor = threading.Thread(target=self._background_acceptor, daemon=True)
        acceptor.start()
        try:
            log_ = run_session(self.config, command_source=source)
        finally:
            self._shutdown = True
            source.close()
        return log_

    def close(self) -> None:
        self._shutdown = True
        try:
            self._listener.close()
        except OSError:
            pass


def serve(config: SessionConfig, static_dir=None) -> SessionLog:
    """Bind the configured endpoint, run one controller-driven session."""
    server = GatewayServer(config, static_dir=static_dir)
    try:
        return server.run()
    finally:
        server.close()
