"""Headless driver: serve the control API, chat from a terminal, ingest
knowledge, validate cell configs and replay scenario files.

Exit codes: 0 success, 1 failed validation or scenario expectation, 2 usage
errors (unreadable files, malformed scenarios, bad flags).
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

import httpx
import yaml

from . import service as service_mod
from .cellcalc import CellConfig, validate_config
from .config import ConfigFileError, ServiceConfig
from .knowledge import KnowledgeError, ingest_directory
from .providers import ProviderConfigError
from .scenario import Scenario, ScenarioError, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cellops", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the control API service")
    p_serve.add_argument("--config", required=True, help="service config YAML")

    p_chat = sub.add_parser("chat", help="interactive REPL against a running service")
    p_chat.add_argument("--endpoint", required=True, help="service base URL")
    p_chat.add_argument("--auto", action="store_true", help="disable the approval gate (dangerous)")

    p_ingest = sub.add_parser("ingest", help="chunk and index a knowledge directory")
    p_ingest.add_argument("dir", help="directory of .md/.txt documents")
    p_ingest.add_argument("--json", action="store_true", dest="as_json")

    p_val = sub.add_parser("validate", help="validate a cell config file")
    p_val.add_argument("config_path", help="YAML/JSON cell config")
    p_val.add_argument("--json", action="store_true", dest="as_json")

    p_scen = sub.add_parser("scenario", help="replay a scenario file and check its expects")
    p_scen.add_argument("path", help="scenario YAML")
    p_scen.add_argument("--seed", type=int, default=None, help="override the scenario station seed")
    p_scen.add_argument("--endpoint", default=None, help="LLM endpoint for live-provider scenarios")
    p_scen.add_argument("--auto", action="store_true", help="disable the approval gate (dangerous)")
    p_scen.add_argument("--json", action="store_true", dest="as_json")

    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args.config)
        if args.command == "chat":
            return cmd_chat(args.endpoint, args.auto)
        if args.command == "ingest":
            return cmd_ingest(args.dir, args.as_json)
        if args.command == "validate":
            return cmd_validate(args.config_path, args.as_json)
        if args.command == "scenario":
            return cmd_scenario(args.path, args.seed, args.endpoint, args.auto, args.as_json)
    except (ConfigFileError, ScenarioError, KnowledgeError, ProviderConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except httpx.HTTPError as exc:
        print(f"error: cannot reach the service: {exc}", file=sys.stderr)
        return EXIT_USAGE
    raise AssertionError("unreachable")


def cmd_serve(config_path: str) -> int:
    config = ServiceConfig.load(config_path)
    service_mod.serve(config)
    return EXIT_OK


def cmd_ingest(directory: str, as_json: bool) -> int:
    index = ingest_directory(directory)
    out_path = Path("kb_index.json")
    out_path.write_text(json.dumps(index.to_dict(), indent=1))
    per_doc = Counter(c.doc_id for c in index.chunks)
    if as_json:
        print(json.dumps({"chunks": len(index.chunks), "docs": dict(per_doc), "index_path": str(out_path)}))
    else:
        for doc_id, n in sorted(per_doc.items()):
            print(f"{doc_id}: {n} chunks")
        print(f"indexed {len(index.chunks)} chunks from {len(per_doc)} documents -> {out_path}")
    return EXIT_OK


def cmd_validate(config_path: str, as_json: bool) -> int:
    try:
        raw = yaml.safe_load(Path(config_path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: cannot read config {config_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not isinstance(raw, dict):
        print(f"error: config {config_path} must be a mapping", file=sys.stderr)
        return EXIT_USAGE
    report = validate_config(CellConfig.from_dict(raw))
    if as_json:
        print(json.dumps(report.to_dict()))
    else:
        print("valid" if report.valid else "INVALID")
        for issue in report.issues:
            fix = f" (suggested fix: {issue.suggested_fix})" if issue.suggested_fix else ""
            print(f"  {issue.severity:7s} {issue.field}: {issue.message}{fix}")
    return EXIT_OK if report.valid else EXIT_FAIL


def cmd_scenario(path: str, seed: int | None, endpoint: str | None, auto: bool, as_json: bool) -> int:
    scenario = Scenario.load(path)
    if auto:
        print("warning: --auto disables the operator approval gate", file=sys.stderr)
        scenario.policy = {**scenario.policy, "require_approval": False}
    run = run_scenario(scenario, seed_override=seed, endpoint_override=endpoint)
    if as_json:
        print(json.dumps(run.to_dict()))
    else:
        print(f"scenario {run.name}")
        for e in run.expects:
            mark = "PASS" if e.passed else "FAIL"
            detail = f"  [{e.detail}]" if e.detail and not e.passed else ""
            print(f"  {mark}  {e.description}{detail}")
        print(f"{'all expects passed' if run.passed else 'EXPECT FAILURES'}")
    return EXIT_OK if run.passed else EXIT_FAIL


def cmd_chat(endpoint: str, auto: bool) -> int:
    client = httpx.Client(base_url=endpoint, timeout=httpx.Timeout(10.0, read=None))
    overrides = {"require_approval": False} if auto else {}
    if auto:
        print("warning: --auto disables the operator approval gate", file=sys.stderr)
    resp = client.post("/sessions", json={"policy": overrides})
    resp.raise_for_status()
    session_id = resp.json()["session_id"]
    print(f"session {session_id} open; empty line or Ctrl-D to quit")

    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            print()
            return EXIT_OK
        if not line:
            return EXIT_OK
        _stream_turn(client, session_id, line)


def _stream_turn(client: httpx.Client, session_id: str, text: str) -> None:
    with client.stream("POST", f"/sessions/{session_id}/message", json={"text": text}) as resp:
        if resp.status_code != 200:
            resp.read()
            print(f"error: {resp.status_code} {resp.text}")
            return
        for kind, payload in _iter_sse(resp.iter_lines()):
            if kind == "tool_call":
                call = payload["call"]
                status = "ok" if "value" in call["result"] else f"error: {call['result']['error']['code']}"
                print(f"  [tool] {call['name']} {json.dumps(call['args'])[:100]} -> {status}")
            elif kind == "approval_required":
                print("  [approval required] proposed config change:")
                for change in payload["changes"]:
                    print(f"    {change['field']}: {change['old_value']} -> {change['new_value']}")
                decision = "approved" if _ask_yes_no("  approve this change? [y/N] ") else "rejected"
                client.post(
                    f"/sessions/{session_id}/turns/{payload['turn_id']}/approval",
                    json={"decision": decision},
                )
            elif kind == "turn_finished":
                turn = payload.get("turn") or {}
                print(f"agent[{turn.get('outcome')}]> {turn.get('final_answer')}")
                if turn.get("retrieved_citations"):
                    print(f"  cited: {', '.join(turn['retrieved_citations'])}")


def _ask_yes_no(prompt: str) -> bool:
    try:
        return input(prompt).strip().lower() in ("y", "yes")
    except EOFError:
        return False


def _iter_sse(lines):
    """Minimal SSE parse: (event, json-decoded data) pairs."""
    event, data = None, []
    for line in lines:
        if line == "":
            if event is not None and data:
                yield event, json.loads("\n".join(data))
            event, data = None, []
        elif line.startswith("event:"):
            event = line.split(":", 1)[1].strip()
        elif line.startswith("data:"):
            data.append(line.split(":", 1)[1].strip())


if __name__ == "__main__":
    sys.exit(main())
