"""Sessions: one conversation bound to the shared station.

A session runs at most one turn at a time. Turns execute on a worker thread
and publish an ordered event stream (turn_started, tool_call,
approval_required, turn_finished); approval decisions arrive from outside
through the session's gate, so a suspended turn never blocks other sessions.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field

from . import agent
from .audit import AuditLog
from .config import Policy
from .knowledge import Index
from .station import StationHost

DECISIONS = ("approved", "rejected")


class SessionError(Exception):
    pass


class BusySessionError(SessionError):
    def __init__(self, session_id: str):
        super().__init__(f"session {session_id} already has a turn in flight")


class NoPendingApprovalError(SessionError):
    def __init__(self, turn_id: str):
        super().__init__(f"no approval pending for turn {turn_id}")


class ApprovalGate:
    """Blocking handshake between a suspended turn and an external decision."""

    def __init__(self):
        self._cond = threading.Condition()
        self._pending: tuple[str, dict] | None = None
        self._decision: str | None = None
        self._preloaded: list[str] = []

    def preload(self, decisions: list[str]) -> None:
        """Queue decisions ahead of time; request() consumes them without blocking."""
        for d in decisions:
            if d not in DECISIONS:
                raise ValueError(f"decision must be one of {DECISIONS}, got {d!r}")
        self._preloaded.extend(decisions)

    def request(self, turn_id: str, payload: dict) -> str:
        with self._cond:
            if self._preloaded:
                return self._preloaded.pop(0)
            self._pending = (turn_id, payload)
            self._decision = None
            while self._decision is None:
                self._cond.wait()
            decision = self._decision
            self._pending = None
            self._decision = None
            return decision

    def resolve(self, turn_id: str, decision: str) -> None:
        if decision not in DECISIONS:
            raise ValueError(f"decision must be one of {DECISIONS}, got {decision!r}")
        with self._cond:
            if self._pending is None or self._pending[0] != turn_id:
                raise NoPendingApprovalError(turn_id)
            self._decision = decision
            self._cond.notify_all()

    def pending(self) -> tuple[str, dict] | None:
        with self._cond:
            return self._pending


@dataclass
class TurnState:
    """Poll-friendly view of one turn: status plus every event so far."""

    turn_id: str
    status: str = "running"  # running | awaiting_approval | finished
    events: list[dict] = field(default_factory=list)
    pending_approval: dict | None = None
    turn: dict | None = None

    def to_dict(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "status": self.status,
            "events": self.events,
            "pending_approval": self.pending_approval,
            "turn": self.turn,
        }


class TurnHandle:
    """Live view of one in-flight turn: an event queue and the final result."""

    def __init__(self):
        self.queue: queue.Queue[tuple[str, dict]] = queue.Queue()
        self.turn: agent.AgentTurn | None = None
        self.error: str | None = None
        self._thread: threading.Thread | None = None

    def stream(self, timeout: float = 60.0):
        """Yield (kind, payload) in order until turn_finished (inclusive)."""
        while True:
            kind, payload = self.queue.get(timeout=timeout)
            yield kind, payload
            if kind == "turn_finished":
                return

    def join(self, timeout: float = 60.0) -> None:
        if self._thread is not None:
            self._thread.join(timeout=timeout)


class Session:
    def __init__(
        self,
        session_id: str,
        host: StationHost,
        index: Index,
        audit: AuditLog,
        policy: Policy,
        provider,
    ):
        self.session_id = session_id
        self.host = host
        self.index = index
        self.audit = audit
        self.policy = policy
        self.provider = provider
        self.created_at = time.time()
        self.transcript: list[agent.AgentTurn] = []
        self.gate = ApprovalGate()
        self.turn_states: dict[str, TurnState] = {}
        self._turn_seq = 0
        self._lock = threading.Lock()
        self._active: TurnHandle | None = None

    # --- surface used by the agent loop ---

    def next_turn_id(self) -> str:
        with self._lock:
            self._turn_seq += 1
            return f"turn-{self._turn_seq}"

    def emit(self, kind: str, payload: dict) -> None:
        turn_id = payload.get("turn_id")
        state = self.turn_states.get(turn_id)
        if state is None:
            state = self.turn_states[turn_id] = TurnState(turn_id=turn_id)
        state.events.append({"event": kind, "data": payload})
        if kind == "approval_required":
            state.status = "awaiting_approval"
            state.pending_approval = payload
        elif kind == "turn_finished":
            state.status = "finished"
            state.pending_approval = None
            state.turn = payload.get("turn")
        else:
            state.status = "running"
            state.pending_approval = None
        active = self._active
        if active is not None:
            active.queue.put((kind, payload))

    def request_approval(self, turn_id: str, payload: dict) -> str:
        return self.gate.request(turn_id, payload)

    # --- surface used by the service / CLI ---

    def start_turn(self, text: str) -> TurnHandle:
        with self._lock:
            if self._active is not None:
                raise BusySessionError(self.session_id)
            handle = TurnHandle()
            self._active = handle

        def work():
            try:
                handle.turn = agent.run_turn(self, text)
                self.transcript.append(handle.turn)
            except Exception as exc:  # defensive: the stream must always terminate
                handle.error = f"{type(exc).__name__}: {exc}"
                self.emit("turn_finished", {"turn_id": "unknown", "turn": None, "error": handle.error})
            finally:
                with self._lock:
                    self._active = None

        handle._thread = threading.Thread(target=work, daemon=True)
        handle._thread.start()
        return handle

    def run_turn_blocking(self, text: str, approvals: list[str] | None = None) -> agent.AgentTurn:
        """Run one turn to completion on this thread's behalf, with approval
        decisions supplied up front."""
        if approvals:
            self.gate.preload(approvals)
        handle = self.start_turn(text)
        for _ in handle.stream():
            pass
        handle.join()
        if handle.turn is None:
            raise SessionError(f"turn failed internally: {handle.error}")
        return handle.turn

    def resolve_approval(self, turn_id: str, decision: str) -> None:
        self.gate.resolve(turn_id, decision)

    def busy(self) -> bool:
        with self._lock:
            return self._active is not None

    def turn_state(self, turn_id: str) -> TurnState | None:
        return self.turn_states.get(turn_id)
