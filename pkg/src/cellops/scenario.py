"""Scenario files: reproducible end-to-end replays of operator sessions.

A scenario binds a seeded station, a policy and a provider (usually
scripted) to an ordered step list: user messages, fault injection, clock
ticks, approval decisions and machine-checkable expectations. The shipped
scenarios are the demonstration stand-ins that run in CI.
"""

from __future__ import annotations

import operator
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .audit import AuditLog
from .cellcalc import CellConfig
from .config import Policy
from .knowledge import default_knowledge_dir, ingest_directory
from .providers import HttpProvider, ScriptedProvider, parse_script
from .session import Session
from .station import FaultKind, StationHost

EXPECT_KEYS = (
    "lifecycle",
    "fault",
    "outcome",
    "approval",
    "answer_contains",
    "citations_include",
    "tool_calls_at_most",
    "kpi",
    "active_config",
    "active_config_equals",
)
_OPS = {"<": operator.lt, "<=": operator.le, "==": operator.eq, "!=": operator.ne, ">=": operator.ge, ">": operator.gt}


class ScenarioError(ValueError):
    """Malformed scenario file; a usage error, not a test failure."""


@dataclass
class Scenario:
    name: str
    station_seed: int
    policy: dict
    provider: dict
    steps: list

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ScenarioError(f"scenario {path} must be a mapping")
        try:
            scenario = cls(
                name=raw["name"],
                station_seed=int(raw.get("station_seed", 0)),
                policy=raw.get("policy") or {},
                provider=raw.get("provider") or {"kind": "scripted", "script": []},
                steps=raw.get("steps") or [],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"scenario {path} is malformed: {exc}") from exc
        scenario.check()
        return scenario

    def check(self) -> None:
        if not self.steps:
            raise ScenarioError(f"scenario {self.name!r} has no steps")
        expects = 0
        for i, step in enumerate(self.steps):
            kind = step_kind(step)
            if kind is None:
                raise ScenarioError(f"scenario {self.name!r} step {i} is not a recognized step: {step!r}")
            if kind == "expect":
                expect = step["expect"]
                keys = [k for k in EXPECT_KEYS if k in expect]
                if len(keys) != 1:
                    raise ScenarioError(
                        f"scenario {self.name!r} step {i}: expect needs exactly one of {EXPECT_KEYS}"
                    )
                expects += 1
        if expects == 0:
            raise ScenarioError(f"scenario {self.name!r} declares no expects; nothing would be checked")
        kind = self.provider.get("kind", "scripted")
        if kind == "scripted" and not self.provider.get("script"):
            raise ScenarioError(f"scenario {self.name!r}: scripted provider needs a script")
        if kind not in ("scripted", "live"):
            raise ScenarioError(f"scenario {self.name!r}: provider kind must be scripted or live")


def step_kind(step) -> str | None:
    if isinstance(step, str) and step in ("approve", "reject"):
        return step
    if isinstance(step, dict):
        for key in ("say", "inject_fault", "tick", "expect", "approve", "reject"):
            if key in step:
                return "approve" if key == "approve" else "reject" if key == "reject" else key
    return None


@dataclass
class ExpectResult:
    description: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"description": self.description, "passed": self.passed, "detail": self.detail}


@dataclass
class ScenarioRun:
    name: str
    expects: list[ExpectResult] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)
    audit_records: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.expects)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "expects": [e.to_dict() for e in self.expects],
            "transcript": self.transcript,
            "audit": self.audit_records,
        }


def _build_provider(spec: dict, endpoint_override: str | None):
    if spec.get("kind", "scripted") == "scripted":
        return ScriptedProvider(parse_script(spec.get("script") or []))
    endpoint = endpoint_override or spec.get("endpoint")
    return HttpProvider(
        endpoint_url=endpoint,
        model_name=spec.get("model", ""),
        api_key_env=spec.get("api_key_env", "CELLOPS_API_KEY"),
        timeout_s=spec.get("timeout_s", 60.0),
    )


def run_scenario(
    scenario: Scenario,
    audit_path: str | Path | None = None,
    seed_override: int | None = None,
    endpoint_override: str | None = None,
    knowledge_dir: str | Path | None = None,
) -> ScenarioRun:
    seed = scenario.station_seed if seed_override is None else seed_override
    host = StationHost(seed)
    index = ingest_directory(knowledge_dir or default_knowledge_dir())
    if audit_path is None:
        audit_path = Path(tempfile.mkdtemp(prefix="cellops-scenario-")) / "audit.log"
    audit = AuditLog(audit_path)
    policy = Policy().merged(scenario.policy)
    provider = _build_provider(scenario.provider, endpoint_override)
    session = Session("scenario", host, index, audit, policy, provider)

    run = ScenarioRun(name=scenario.name)
    handle = None
    suspended_turn: str | None = None
    last_turn: dict | None = None

    def pump() -> None:
        """Consume turn events until the turn suspends on approval or ends."""
        nonlocal suspended_turn, last_turn, handle
        for kind, payload in handle.stream(timeout=30.0):
            if kind == "approval_required":
                suspended_turn = payload["turn_id"]
                return
            if kind == "turn_finished":
                handle.join()
                last_turn = payload.get("turn")
                run.transcript.append(last_turn)
                suspended_turn = None
                handle = None
                return

    for i, step in enumerate(scenario.steps):
        kind = step_kind(step)
        if kind == "say":
            if handle is not None:
                raise ScenarioError(f"step {i}: previous turn still awaiting approval")
            handle = session.start_turn(step["say"])
            pump()
        elif kind in ("approve", "reject"):
            if handle is None or suspended_turn is None:
                raise ScenarioError(f"step {i}: {kind} with no approval pending")
            session.resolve_approval(suspended_turn, "approved" if kind == "approve" else "rejected")
            pump()
        elif kind == "tick":
            host.tick(ticks=int(step["tick"]), dt_s=float(step.get("dt_s", 1.0)))
        elif kind == "inject_fault":
            host.inject_fault(FaultKind(step["inject_fault"]))
        elif kind == "expect":
            run.expects.append(_evaluate(step["expect"], host, last_turn))

    if handle is not None:
        run.expects.append(
            ExpectResult("scenario leaves no turn suspended", False, "a turn is still awaiting approval")
        )
        # unblock the suspended worker so it does not outlive the run
        if suspended_turn is not None:
            session.resolve_approval(suspended_turn, "rejected")
            pump()
    run.audit_records = audit.records()
    return run


def _evaluate(expect: dict, host: StationHost, last_turn: dict | None) -> ExpectResult:
    key = next(k for k in EXPECT_KEYS if k in expect)
    want = expect[key]
    snap = host.snapshot()

    if key == "lifecycle":
        got = snap.lifecycle
        return ExpectResult(f"lifecycle == {want}", got == want, f"lifecycle is {got}")
    if key == "fault":
        got = snap.active_fault
        return ExpectResult(f"fault == {want}", got == want, f"fault is {got}")
    if key == "kpi":
        sample = host.latest_kpi()
        if sample is None:
            return ExpectResult(f"kpi {want}", False, "no KPI samples yet")
        field_name, op, value = want["field"], want["op"], want["value"]
        got = getattr(sample, field_name)
        ok = _OPS[op](got, value)
        return ExpectResult(f"kpi {field_name} {op} {value}", ok, f"{field_name} is {got}")
    if key == "active_config":
        cfg = snap.active_config
        if cfg is None:
            return ExpectResult(f"active_config matches {want}", False, "no active config")
        mismatches = {k: getattr(cfg, k) for k in want if getattr(cfg, k) != want[k]}
        return ExpectResult(
            f"active_config matches {want}", not mismatches, f"mismatches: {mismatches}" if mismatches else ""
        )
    if key == "active_config_equals":
        cfg = snap.active_config
        got = None if cfg is None else cfg.canonical_json()
        wanted = CellConfig.from_dict(want).canonical_json()
        return ExpectResult("active_config byte-equals expected config", got == wanted, f"active is {got}")

    # the remaining assertions need a finished turn
    if last_turn is None:
        return ExpectResult(f"{key} {want!r}", False, "no finished turn to inspect")
    if key == "outcome":
        got = last_turn["outcome"]
        return ExpectResult(f"outcome == {want}", got == want, f"outcome is {got}")
    if key == "approval":
        got = last_turn["approval"]
        return ExpectResult(f"approval == {want}", got == want, f"approval is {got}")
    if key == "answer_contains":
        got = last_turn["final_answer"]
        return ExpectResult(f"final answer mentions {want!r}", want in got, f"answer: {got[:120]}")
    if key == "citations_include":
        cites = last_turn["retrieved_citations"]
        return ExpectResult(f"citations include {want}", want in cites, f"citations: {cites}")
    if key == "tool_calls_at_most":
        got = len(last_turn["iterations"])
        return ExpectResult(f"tool calls <= {want}", got <= want, f"{got} tool calls")
    raise AssertionError(f"unhandled expect key {key}")
