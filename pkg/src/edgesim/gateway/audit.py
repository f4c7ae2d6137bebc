"""Append-only audit log: one record per tool invocation, success or not.

Input and output summaries are capped at 1 KiB; the sha256 of the full
body always rides along so truncated entries stay verifiable. Sequence
numbers are monotone across the whole gateway, giving the log a total
order even under concurrent clients.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Optional

from ..rationals import dumps_canonical, jsonable

SUMMARY_LIMIT = 1024


def summarize(payload: Any) -> dict:
    body = dumps_canonical(jsonable(payload))
    digest = hashlib.sha256(body.encode()).hexdigest()
    truncated = len(body) > SUMMARY_LIMIT
    return {"summary": body[:SUMMARY_LIMIT], "sha256": digest,
            "truncated": truncated}


@dataclass(frozen=True)
class ToolCallRecord:
    sequence: int
    actor: str
    simulation_id: Optional[str]
    window_index: Optional[int]
    tool: str
    input: dict
    output: dict
    status: str  # "ok" | "error"
    wall_time: float

    def to_jsonable(self) -> dict:
        return {"sequence": self.sequence, "actor": self.actor,
                "simulation_id": self.simulation_id,
                "window_index": self.window_index, "tool": self.tool,
                "input": self.input, "output": self.output,
                "status": self.status, "wall_time": self.wall_time}


class AuditLog:
    def __init__(self):
        self._lock = threading.Lock()
        self._records: list[ToolCallRecord] = []
        self._sequence = 0

    def append(self, actor: str, tool: str, arguments: Any, result: Any,
               status: str, simulation_id: Optional[str] = None,
               window_index: Optional[int] = None) -> ToolCallRecord:
        with self._lock:
            self._sequence += 1
            record = ToolCallRecord(
                sequence=self._sequence, actor=actor,
                simulation_id=simulation_id, window_index=window_index,
                tool=tool, input=summarize(arguments),
                output=summarize(result), status=status,
                wall_time=time.time())
            self._records.append(record)
            return record

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def export(self, actor: Optional[str] = None,
               simulation_id: Optional[str] = None,
               tool: Optional[str] = None) -> list[ToolCallRecord]:
        with self._lock:
            records = list(self._records)
        if actor is not None:
            records = [r for r in records if r.actor == actor]
        if simulation_id is not None:
            records = [r for r in records if r.simulation_id == simulation_id]
        if tool is not None:
            records = [r for r in records if r.tool == tool]
        return records

    def export_jsonl(self, **filters) -> str:
        return "\n".join(dumps_canonical(r.to_jsonable())
                         for r in self.export(**filters))
