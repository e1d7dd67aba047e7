"""Append-only audit log: one JSON record per line.

Every tool execution, provider exchange and approval decision lands here
before its result propagates. Timestamps are forced strictly increasing so a
timestamp works as a cursor; each record also carries a sequence number.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

KINDS = ("tool_call", "provider", "approval")


class AuditLog:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seq = -1
        self._last_ts = 0.0
        if self.path.exists():
            for rec in self.records():
                self._seq = max(self._seq, rec.get("seq", -1))
                self._last_ts = max(self._last_ts, rec.get("ts", 0.0))
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, session_id: str, turn_id: str, kind: str, payload: dict) -> dict:
        if kind not in KINDS:
            raise ValueError(f"unknown audit kind {kind!r}")
        with self._lock:
            self._seq += 1
            self._last_ts = max(time.time(), self._last_ts + 1e-6)
            record = {
                "ts": self._last_ts,
                "seq": self._seq,
                "session_id": session_id,
                "turn_id": turn_id,
                "kind": kind,
                "payload": payload,
            }
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                fh.flush()
            return record

    def records(self, after_seq: int = -1) -> list[dict]:
        """Records with seq strictly greater than the cursor, in order."""
        return [r for r in self._read() if r.get("seq", -1) > after_seq]

    def records_after_ts(self, after_ts: float) -> list[dict]:
        """Records with ts strictly greater than the cursor, in order."""
        return [r for r in self._read() if r.get("ts", 0.0) > after_ts]

    def _read(self) -> list[dict]:
        if not self.path.exists():
            return []
        with self.path.open() as fh:
            return [json.loads(line) for line in fh if line.strip()]
