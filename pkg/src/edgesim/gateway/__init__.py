"""MCP gateway: tool catalog, JSON-RPC transports, and the audit log."""

from .audit import AuditLog, ToolCallRecord
from .tools import ToolError, ToolRegistry
from .server import GatewayServer
from .client import GatewayClient, ToolCallError, loopback_client, spawn_stdio_client

__all__ = [
    "AuditLog", "ToolCallRecord", "ToolError", "ToolRegistry",
    "GatewayServer", "GatewayClient", "ToolCallError",
    "loopback_client", "spawn_stdio_client",
]
