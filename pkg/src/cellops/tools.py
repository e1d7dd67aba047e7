"""The closed tool registry the agent loop dispatches through.

Tool names and argument schemas are fixed; unknown names are rejected before
anything executes and schema violations never reach the station. Downstream
errors come back as structured tool results, wrapped with the tool name.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import jsonschema

from .audit import AuditLog
from .cellcalc import CellConfig, validate_config
from .knowledge import Index, retrieve
from .station import StationError, StationHost

DEFAULT_SEARCH_K = 3

TOOL_SCHEMAS: dict[str, dict] = {
    "kb.search": {
        "description": "Search the operations manuals; returns the best-matching chunks with scores.",
        "parameters": {
            "type": "object",
            "properties": {
                "query": {"type": "string"},
                "k": {"type": "integer", "minimum": 1},
            },
            "required": ["query"],
            "additionalProperties": False,
        },
    },
    "station.get_state": {
        "description": "Read the station lifecycle, active config, fault and simulated time.",
        "parameters": {"type": "object", "properties": {}, "additionalProperties": False},
    },
    "station.get_config": {
        "description": "Read the currently applied cell configuration, if any.",
        "parameters": {"type": "object", "properties": {}, "additionalProperties": False},
    },
    "config.validate": {
        "description": "Validate a candidate cell configuration; lists every violation.",
        "parameters": {
            "type": "object",
            "properties": {"config": {"type": "object"}},
            "required": ["config"],
            "additionalProperties": False,
        },
    },
    "station.apply_config": {
        "description": "Apply a validated cell configuration to a stopped or configured station.",
        "parameters": {
            "type": "object",
            "properties": {"config": {"type": "object"}},
            "required": ["config"],
            "additionalProperties": False,
        },
    },
    "station.start": {
        "description": "Start the configured cell.",
        "parameters": {"type": "object", "properties": {}, "additionalProperties": False},
    },
    "station.stop": {
        "description": "Stop a running or faulted cell; clears the fault flag.",
        "parameters": {"type": "object", "properties": {}, "additionalProperties": False},
    },
    "station.read_kpi": {
        "description": "Advance the simulation and return fresh KPI samples.",
        "parameters": {
            "type": "object",
            "properties": {
                "ticks": {"type": "integer", "minimum": 1},
                "dt_s": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
}

TOOL_NAMES = tuple(TOOL_SCHEMAS)


def provider_tool_schemas() -> list[dict]:
    """Schemas in the shape providers consume: name, description, parameters."""
    return [
        {"name": name, "description": spec["description"], "parameters": spec["parameters"]}
        for name, spec in TOOL_SCHEMAS.items()
    ]


@dataclass
class ToolOutcome:
    ok: bool
    value: dict | None = None
    error: dict | None = None  # {"code", "message"}

    def as_result(self) -> dict:
        """The structured result fed back to the provider and stored on the call."""
        return {"value": self.value} if self.ok else {"error": self.error}


@dataclass
class ToolContext:
    """Everything a tool execution may touch, bound to one session."""

    host: StationHost
    index: Index
    audit: AuditLog
    session_id: str


def _error(code: str, message: str) -> ToolOutcome:
    return ToolOutcome(ok=False, error={"code": code, "message": message})


def _dispatch(name: str, args: dict, ctx: ToolContext) -> ToolOutcome:
    if name == "kb.search":
        hits = retrieve(ctx.index, args["query"], args.get("k", DEFAULT_SEARCH_K))
        results = []
        for chunk_id, score in hits:
            chunk = ctx.index.get(chunk_id)
            results.append(
                {
                    "chunk_id": chunk_id,
                    "score": score,
                    "heading_path": chunk.heading_path,
                    "text": chunk.text,
                }
            )
        return ToolOutcome(ok=True, value={"results": results})

    if name == "station.get_state":
        return ToolOutcome(ok=True, value=ctx.host.snapshot().to_dict())

    if name == "station.get_config":
        snap = ctx.host.snapshot()
        cfg = None if snap.active_config is None else snap.active_config.to_dict()
        return ToolOutcome(ok=True, value={"active_config": cfg})

    if name == "config.validate":
        report = validate_config(CellConfig.from_dict(args["config"]))
        return ToolOutcome(ok=True, value=report.to_dict())

    if name == "station.apply_config":
        ctx.host.apply_config(CellConfig.from_dict(args["config"]))
        return ToolOutcome(ok=True, value={"applied": True, "lifecycle": ctx.host.snapshot().lifecycle})

    if name == "station.start":
        ctx.host.start()
        return ToolOutcome(ok=True, value={"lifecycle": ctx.host.snapshot().lifecycle})

    if name == "station.stop":
        ctx.host.stop()
        return ToolOutcome(ok=True, value={"lifecycle": ctx.host.snapshot().lifecycle})

    if name == "station.read_kpi":
        samples = ctx.host.tick(ticks=args.get("ticks", 1), dt_s=args.get("dt_s", 1.0))
        return ToolOutcome(ok=True, value={"samples": [s.to_dict() for s in samples]})

    raise AssertionError(f"unhandled registered tool {name}")


def execute_tool(name: str, args: dict, ctx: ToolContext, turn_id: str) -> ToolOutcome:
    """Run one registered tool call and audit it before returning.

    The caller must have checked the name against TOOL_NAMES; schema
    violations and downstream station errors become error outcomes wrapped
    with the tool name, never exceptions.
    """
    try:
        jsonschema.validate(args, TOOL_SCHEMAS[name]["parameters"])
    except jsonschema.ValidationError as exc:
        outcome = _error("schema-violation", f"{name}: {exc.message}")
    else:
        try:
            outcome = _dispatch(name, args, ctx)
        except StationError as exc:
            code = {
                "WrongStateError": "wrong-state",
                "InvalidConfigError": "invalid-config",
                "NonPositiveDtError": "non-positive-dt",
            }.get(type(exc).__name__, "station-error")
            error = {"code": code, "message": f"{name}: {exc}"}
            if code == "invalid-config":
                error["report"] = exc.report.to_dict()
            outcome = ToolOutcome(ok=False, error=error)
        except ValueError as exc:
            outcome = _error("bad-argument", f"{name}: {exc}")

    ctx.audit.append(
        ctx.session_id,
        turn_id,
        "tool_call",
        {"name": name, "args": args, "status": "ok" if outcome.ok else "error", "result": outcome.as_result()},
    )
    return outcome
