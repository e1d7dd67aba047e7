"""The operations agent loop.

Turns one natural-language request into a bounded sequence of typed tool
calls against the station, grounded by retrieval and verified by KPI
readback. Guardrails live here: no apply without a same-turn successful
validation of the byte-identical config, an operator approval gate, and
automatic rollback when post-change KPIs regress past the policy threshold.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, fields

from .cellcalc import CellConfig
from .config import Policy
from .knowledge import retrieve
from .providers import ProviderError, ProviderRequest, system_prompt
from .tools import TOOL_NAMES, ToolContext, execute_tool, provider_tool_schemas

OUTCOMES = ("completed", "rolled_back", "iteration_limit", "provider_error")
APPROVAL_STATES = ("not_required", "pending", "approved", "rejected")


@dataclass
class ToolCall:
    """One executed (or refused) call; result holds either value or error."""

    name: str
    args: dict
    result: dict
    latency_ms: int

    @property
    def ok(self) -> bool:
        return "value" in self.result

    def to_dict(self) -> dict:
        return {"name": self.name, "args": self.args, "result": self.result, "latency_ms": self.latency_ms}


@dataclass
class AgentTurn:
    turn_id: str
    user_message: str
    iterations: list[ToolCall] = field(default_factory=list)
    retrieved_citations: list[str] = field(default_factory=list)
    proposed_diff: dict | None = None  # {"old": config|None, "new": config}
    approval: str = "not_required"
    final_answer: str = ""
    outcome: str = "completed"

    def to_dict(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "user_message": self.user_message,
            "iterations": [c.to_dict() for c in self.iterations],
            "retrieved_citations": list(self.retrieved_citations),
            "proposed_diff": self.proposed_diff,
            "approval": self.approval,
            "final_answer": self.final_answer,
            "outcome": self.outcome,
        }


def diff_configs(old: CellConfig | None, new: CellConfig) -> list[dict]:
    """One entry per differing field, in canonical (declaration) order."""
    changes = []
    for f in fields(CellConfig):
        old_value = None if old is None else getattr(old, f.name)
        new_value = getattr(new, f.name)
        if old_value != new_value:
            changes.append({"field": f.name, "old_value": old_value, "new_value": new_value})
    return changes


def diff_payload(old: CellConfig | None, new: CellConfig) -> dict:
    """Approval-gate payload; the hash lets a console detect stale diffs."""
    old_dict = None if old is None else old.to_dict()
    new_dict = new.to_dict()
    body = json.dumps({"old": old_dict, "new": new_dict}, sort_keys=True, separators=(",", ":"))
    return {
        "old": old_dict,
        "new": new_dict,
        "changes": diff_configs(old, new),
        "diff_hash": hashlib.sha256(body.encode()).hexdigest(),
    }


def _attach_rate(sample: dict) -> float | None:
    if not sample["attach_attempts"]:
        return None
    return sample["attach_successes"] / sample["attach_attempts"]


def _relative_drop(before: float, after: float) -> float:
    if before <= 0:
        return 0.0
    return max(0.0, (before - after) / before)


def kpi_regression(baseline: dict, post: dict, threshold: float) -> str | None:
    """Reason string when attach success rate or throughput dropped by more
    than the relative threshold; None otherwise."""
    drops = []
    rate_before, rate_after = _attach_rate(baseline), _attach_rate(post)
    if rate_before is not None and rate_after is not None:
        drops.append(("attach success rate", rate_before, rate_after))
    drops.append(("downlink throughput", baseline["dl_throughput_mbps"], post["dl_throughput_mbps"]))
    for metric, before, after in drops:
        drop = _relative_drop(before, after)
        if drop > threshold:
            return f"{metric} dropped {drop:.0%} (from {before:.3g} to {after:.3g})"
    return None


def run_turn(session, user_message: str, provider=None, policy: Policy | None = None) -> AgentTurn:
    """Run one agent turn against the session's station.

    The loop asks the provider, validates and executes tool calls, and
    enforces the guardrails. After a successful apply followed by a start it
    always reads KPIs back; a regression past policy.regression_threshold
    restores the pre-turn configuration and ends the turn as rolled_back.
    """
    provider = provider or session.provider
    policy = policy or session.policy
    turn = AgentTurn(turn_id=session.next_turn_id(), user_message=user_message)
    session.emit("turn_started", {"turn_id": turn.turn_id, "user_message": user_message})

    ctx = ToolContext(
        host=session.host, index=session.index, audit=session.audit, session_id=session.session_id
    )
    pre_snapshot = session.host.snapshot()
    baseline: dict | None = None  # last KPI sample before this turn's first apply
    applied_unverified = False
    validated_ok: set[str] = set()

    hits = retrieve(session.index, user_message, policy.retrieval_k)
    context = []
    for chunk_id, score in hits:
        chunk = session.index.get(chunk_id)
        context.append({"chunk_id": chunk_id, "heading_path": chunk.heading_path, "text": chunk.text})
    _cite(turn, [chunk_id for chunk_id, _ in hits])
    conversation: list[dict] = [{"role": "user", "content": user_message}]
    schemas = provider_tool_schemas()

    def ask():
        failure = None
        for attempt in range(policy.max_retries + 1):
            if attempt and policy.retry_backoff_s:
                time.sleep(policy.retry_backoff_s * 2 ** (attempt - 1))
            try:
                return provider.ask(
                    ProviderRequest(system_prompt(), list(conversation), schemas, context)
                )
            except ProviderError as exc:
                failure = exc
        raise failure

    def run_call(name: str, args: dict) -> ToolCall:
        t0 = time.perf_counter()
        outcome = execute_tool(name, args, ctx, turn.turn_id)
        call = ToolCall(name, args, outcome.as_result(), int((time.perf_counter() - t0) * 1000))
        _record(session, turn, conversation, call)
        if name == "kb.search" and call.ok:
            _cite(turn, [r["chunk_id"] for r in call.result["value"]["results"]])
        if name == "config.validate" and call.ok and call.result["value"]["valid"]:
            validated_ok.add(CellConfig.from_dict(args["config"]).canonical_json())
        return call

    def refuse_call(name: str, args: dict, code: str, message: str) -> ToolCall:
        # recorded and audited, but never executed against the station
        call = ToolCall(name, args, {"error": {"code": code, "message": message}}, 0)
        session.audit.append(
            session.session_id,
            turn.turn_id,
            "tool_call",
            {"name": name, "args": args, "status": "refused", "result": call.result},
        )
        _record(session, turn, conversation, call)
        return call

    def verify_and_maybe_rollback() -> bool:
        nonlocal applied_unverified
        applied_unverified = False
        read = run_call("station.read_kpi", {"ticks": policy.verify_ticks, "dt_s": policy.kpi_tick_dt_s})
        if not read.ok or baseline is None:
            return False
        post = read.result["value"]["samples"][-1]
        reason = kpi_regression(baseline, post, policy.regression_threshold)
        if reason is None:
            return False
        if session.host.snapshot().lifecycle in ("RUNNING", "FAULT"):
            run_call("station.stop", {})
        old_cfg = pre_snapshot.active_config
        run_call("config.validate", {"config": old_cfg.to_dict()})
        run_call("station.apply_config", {"config": old_cfg.to_dict()})
        if pre_snapshot.lifecycle == "RUNNING":
            run_call("station.start", {})
        turn.outcome = "rolled_back"
        turn.final_answer = (
            f"Rolled back: {reason} after the change; the previous configuration was restored."
        )
        return True

    while True:
        try:
            response = ask()
        except ProviderError as exc:
            turn.outcome = "provider_error"
            turn.final_answer = f"The language-model provider failed: {exc}"
            break
        session.audit.append(
            session.session_id, turn.turn_id, "provider", {"response": _describe(response)}
        )

        if response.final is not None:
            turn.final_answer = response.final
            break

        name, args = response.tool_name, response.tool_args
        if len(turn.iterations) >= policy.max_iterations:
            turn.outcome = "iteration_limit"
            turn.final_answer = (
                f"Stopping: the {policy.max_iterations}-call budget for this request is exhausted "
                "without a final answer."
            )
            break
        conversation.append({"role": "assistant", "tool_call": {"name": name, "args": args}})

        if name not in TOOL_NAMES:
            conversation.append(
                {
                    "role": "tool",
                    "name": name,
                    "content": {
                        "error": {"code": "unknown-tool", "message": f"unknown tool {name!r}; not executed"}
                    },
                }
            )
            continue

        if name == "station.apply_config":
            cfg_dict = args.get("config")
            canonical = (
                CellConfig.from_dict(cfg_dict).canonical_json() if isinstance(cfg_dict, dict) else None
            )
            if canonical is None or canonical not in validated_ok:
                refuse_call(
                    name,
                    args,
                    "guardrail-unvalidated-config",
                    "apply_config requires an earlier successful config.validate of this exact config in the same turn",
                )
                continue
            new_cfg = CellConfig.from_dict(cfg_dict)
            old_cfg = session.host.snapshot().active_config
            payload = diff_payload(old_cfg, new_cfg)
            turn.proposed_diff = {"old": payload["old"], "new": payload["new"]}
            if policy.require_approval:
                turn.approval = "pending"
                session.emit("approval_required", {"turn_id": turn.turn_id, **payload})
                decision = session.request_approval(turn.turn_id, payload)
                session.audit.append(
                    session.session_id,
                    turn.turn_id,
                    "approval",
                    {"decision": decision, "diff_hash": payload["diff_hash"]},
                )
                turn.approval = decision
                if decision == "rejected":
                    refuse_call(name, args, "approval-rejected", "the operator rejected this configuration change")
                    continue
            if baseline is None:
                latest = session.host.latest_kpi()
                baseline = None if latest is None else latest.to_dict()
            call = run_call(name, args)
            if call.ok:
                applied_unverified = True
            continue

        call = run_call(name, args)
        if name == "station.start" and call.ok and applied_unverified:
            if verify_and_maybe_rollback():
                break

    session.emit("turn_finished", {"turn_id": turn.turn_id, "turn": turn.to_dict()})
    return turn


def _cite(turn: AgentTurn, chunk_ids: list[str]) -> None:
    for chunk_id in chunk_ids:
        if chunk_id not in turn.retrieved_citations:
            turn.retrieved_citations.append(chunk_id)


def _record(session, turn: AgentTurn, conversation: list[dict], call: ToolCall) -> None:
    turn.iterations.append(call)
    session.emit("tool_call", {"turn_id": turn.turn_id, "call": call.to_dict()})
    conversation.append({"role": "tool", "name": call.name, "content": call.result})


def _describe(response) -> dict:
    if response.final is not None:
        return {"final": response.final}
    return {"tool_call": {"name": response.tool_name, "args": response.tool_args}}
