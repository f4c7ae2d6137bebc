"""Synchronous gateway client plus two ready-made transports: an in-process
loopback socket pair (fast, shares the server object for assertions) and a
spawned stdio subprocess (exercises the real wire end to end)."""

from __future__ import annotations

import json
import socket
import subprocess
import sys
import threading
from typing import Any, Optional

from .server import PROTOCOL_VERSION, GatewayServer


class ToolCallError(Exception):
    """A tool call failed; `code` carries the machine-readable taxonomy
    value (not_found, invalid_state, invalid_argument, capacity, internal)
    or the JSON-RPC error code for protocol-level failures."""

    def __init__(self, code: Any, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message


class GatewayClient:
    def __init__(self, write_stream, read_stream, actor: str = "client",
                 closers: tuple = ()):
        self._write = write_stream
        self._read = read_stream
        self._lock = threading.Lock()
        self._next_id = 0
        self._closers = list(closers)
        self.actor = actor
        self.server_info: Optional[dict] = None

    # ---- wire ------------------------------------------------------------

    def _send(self, envelope: dict) -> None:
        self._write.write(json.dumps(envelope, separators=(",", ":")) + "\n")
        self._write.flush()

    def rpc(self, method: str, params: Optional[dict] = None) -> dict:
        with self._lock:
            self._next_id += 1
            msg_id = self._next_id
            self._send({"jsonrpc": "2.0", "id": msg_id, "method": method,
                        "params": params or {}})
            while True:
                line = self._read.readline()
                if not line:
                    raise ToolCallError("internal",
                                        "gateway closed the stream")
                response = json.loads(line)
                if response.get("id") == msg_id:
                    break
        if "error" in response:
            err = response["error"]
            raise ToolCallError(err.get("code"), err.get("message", ""))
        return response["result"]

    def notify(self, method: str, params: Optional[dict] = None) -> None:
        with self._lock:
            envelope = {"jsonrpc": "2.0", "method": method}
            if params:
                envelope["params"] = params
            self._send(envelope)

    # ---- MCP surface -------------------------------------------------------

    def initialize(self) -> dict:
        result = self.rpc("initialize", {
            "protocolVersion": PROTOCOL_VERSION,
            "capabilities": {},
            "clientInfo": {"name": self.actor, "version": "0.1.0"},
        })
        self.notify("notifications/initialized")
        self.server_info = result
        return result

    def ping(self) -> dict:
        return self.rpc("ping")

    def list_tools(self) -> list[dict]:
        return self.rpc("tools/list")["tools"]

    def call_raw(self, name: str, arguments: Optional[dict] = None,
                 window_index: Optional[int] = None) -> dict:
        """Full tools/call result envelope: content, structuredContent,
        isError."""
        meta: dict[str, Any] = {"actor": self.actor}
        if window_index is not None:
            meta["window_index"] = window_index
        return self.rpc("tools/call", {"name": name,
                                       "arguments": arguments or {},
                                       "_meta": meta})

    def call(self, name: str, arguments: Optional[dict] = None,
             window_index: Optional[int] = None) -> dict:
        result = self.call_raw(name, arguments, window_index)
        payload = result.get("structuredContent")
        if payload is None:
            payload = json.loads(result["content"][0]["text"])
        if result.get("isError"):
            raise ToolCallError(payload.get("code", "internal"),
                                payload.get("message", ""))
        return payload

    def try_call(self, name: str, arguments: Optional[dict] = None,
                 window_index: Optional[int] = None) -> tuple[dict, bool]:
        """Like call(), but returns (payload, is_error) instead of raising
        on tool-level errors. Protocol errors still raise."""
        result = self.call_raw(name, arguments, window_index)
        payload = result.get("structuredContent") or json.loads(
            result["content"][0]["text"])
        return payload, bool(result.get("isError"))

    # ---- teardown ----------------------------------------------------------

    def close(self) -> None:
        for closer in self._closers:
            try:
                closer()
            except Exception:
                pass
        self._closers.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def loopback_client(registry=None, seed: Any = 0, actor: str = "client",
                    scenario_root: Optional[str] = None,
                    ) -> tuple[GatewayClient, GatewayServer]:
    """In-process client/server pair over a socketpair. The returned server
    exposes .registry (service, audit log) for white-box assertions."""
    server = GatewayServer(registry=registry, seed=seed,
                           scenario_root=scenario_root)
    server_sock, client_sock = socket.socketpair()
    server_in = server_sock.makefile("r", encoding="utf-8", newline="\n")
    server_out = server_sock.makefile("w", encoding="utf-8", newline="\n")
    thread = threading.Thread(target=server.serve_stream,
                              args=(server_in, server_out), daemon=True)
    thread.start()

    client_in = client_sock.makefile("r", encoding="utf-8", newline="\n")
    client_out = client_sock.makefile("w", encoding="utf-8", newline="\n")

    def _close():
        for stream in (client_out, client_in):
            try:
                stream.close()
            except Exception:
                pass
        for sock in (client_sock, server_sock):
            try:
                sock.close()
            except Exception:
                pass

    client = GatewayClient(client_out, client_in, actor=actor,
                           closers=(_close,))
    client.initialize()
    return client, server


def spawn_stdio_client(seed: Any = 0, actor: str = "client",
                       extra_args: tuple = (),
                       ) -> tuple[GatewayClient, subprocess.Popen]:
    """Spawn `python -m edgesim.gateway` and speak to it over pipes: the
    same bytes a third-party MCP client would exchange."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "edgesim.gateway", "--seed", str(seed),
         *extra_args],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL, text=True, encoding="utf-8", bufsize=1)

    def _close():
        try:
            proc.stdin.close()
        except Exception:
            pass
        try:
            proc.wait(timeout=10)
        except Exception:
            proc.kill()

    client = GatewayClient(proc.stdin, proc.stdout, actor=actor,
                           closers=(_close,))
    client.initialize()
    return client, proc
