"""JSON-RPC 2.0 gateway server.

Baseline transport is newline-delimited JSON over a pair of text streams
(standard input/output when run as a module); an HTTP POST transport
serves the identical envelopes. Each request line is handled on its own
thread so a blocking call (wait_simulation_until_ready) does not stall
unrelated simulations; response writes are serialized on a lock and
requests pair with responses by id, not by arrival order.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional

from ..rationals import dumps_canonical, loads_exact
from .tools import ToolRegistry, UnknownToolError

PROTOCOL_VERSION = "2024-11-05"

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


def _error(msg_id: Any, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": msg_id,
            "error": {"code": code, "message": message}}


class GatewayServer:
    def __init__(self, registry: Optional[ToolRegistry] = None, seed: Any = 0,
                 scenario_root: Optional[str] = None,
                 name: str = "edgesim-gateway", version: str = "0.1.0"):
        self.registry = registry if registry is not None else ToolRegistry(
            seed=seed, scenario_root=scenario_root)
        self.name = name
        self.version = version

    # ---- envelope handling ------------------------------------------------

    def handle_message(self, message: Any) -> Optional[dict]:
        """One request or notification in, one response (or None) out."""
        if not isinstance(message, dict) or message.get("jsonrpc") != "2.0":
            return _error(None, INVALID_REQUEST, "not a JSON-RPC 2.0 message")
        msg_id = message.get("id")
        method = message.get("method")
        params = message.get("params") or {}
        if not isinstance(method, str):
            return _error(msg_id, INVALID_REQUEST, "missing method")
        if msg_id is None:
            # Notification: nothing to answer. notifications/initialized and
            # anything else land here.
            return None
        try:
            if method == "initialize":
                result = {"protocolVersion": PROTOCOL_VERSION,
                          "capabilities": {"tools": {}},
                          "serverInfo": {"name": self.name,
                                         "version": self.version}}
            elif method == "ping":
                result = {}
            elif method == "tools/list":
                result = {"tools": self.registry.descriptors()}
            elif method == "tools/call":
                return self._tools_call(msg_id, params)
            else:
                return _error(msg_id, METHOD_NOT_FOUND,
                              f"unknown method {method!r}")
            return {"jsonrpc": "2.0", "id": msg_id, "result": result}
        except Exception as exc:
            return _error(msg_id, INTERNAL_ERROR,
                          f"{type(exc).__name__}: {exc}")

    def _tools_call(self, msg_id: Any, params: dict) -> dict:
        name = params.get("name")
        if not isinstance(name, str):
            return _error(msg_id, INVALID_PARAMS, "tools/call requires a name")
        arguments = params.get("arguments") or {}
        meta = params.get("_meta") or {}
        actor = meta.get("actor", "anonymous")
        window_index = meta.get("window_index")
        try:
            payload, is_error = self.registry.dispatch(
                actor, name, arguments, window_index=window_index)
        except UnknownToolError as exc:
            return _error(msg_id, INVALID_PARAMS, exc.message)
        result = {"content": [{"type": "text",
                               "text": dumps_canonical(payload)}],
                  "structuredContent": payload,
                  "isError": is_error}
        return {"jsonrpc": "2.0", "id": msg_id, "result": result}

    def handle_line(self, line: str) -> Optional[str]:
        try:
            message = loads_exact(line)
        except ValueError:
            return dumps_canonical(_error(None, PARSE_ERROR, "parse error"))
        response = self.handle_message(message)
        if response is None:
            return None
        return dumps_canonical(response)

    # ---- transports -------------------------------------------------------

    def serve_stream(self, instream, outstream) -> None:
        """Newline-delimited JSON-RPC until EOF. Each line runs on its own
        thread; writes are serialized."""
        write_lock = threading.Lock()
        workers: list[threading.Thread] = []

        def _work(raw: str) -> None:
            reply = self.handle_line(raw)
            if reply is None:
                return
            with write_lock:
                outstream.write(reply + "\n")
                outstream.flush()

        for line in instream:
            line = line.strip()
            if not line:
                continue
            worker = threading.Thread(target=_work, args=(line,), daemon=True)
            worker.start()
            workers.append(worker)
        for worker in workers:
            worker.join(timeout=30)

    def serve_http(self, host: str = "127.0.0.1",
                   port: int = 0) -> ThreadingHTTPServer:
        """HTTP POST transport carrying the same envelopes; returns the bound
        server (call serve_forever on it, port 0 picks a free port)."""
        gateway = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length).decode("utf-8")
                reply = gateway.handle_line(body)
                if reply is None:
                    self.send_response(202)
                    self.end_headers()
                    return
                data = reply.encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        return ThreadingHTTPServer((host, port), Handler)
