#!/usr/bin/env python3
"""Walk one scripted configure-and-verify turn and print the full trace:
tool calls, approval diff, KPI readback and the final grounded answer.

Useful for eyeballing loop behavior without starting the HTTP service.
"""

import json
import tempfile
from pathlib import Path

from cellops.audit import AuditLog
from cellops.config import Policy
from cellops.knowledge import default_knowledge_dir, ingest_directory
from cellops.providers import ProviderResponse as R
from cellops.providers import ScriptedProvider
from cellops.session import Session
from cellops.station import StationHost

CONFIG = {
    "band": 3,
    "earfcn_dl": 1575,
    "bandwidth_mhz": 10,
    "pci": 301,
    "tx_power_dbm": 30,
    "plmn": "00101",
    "tac": 1,
    "cell_identity": 2561,
    "neighbor_pcis": [110, 204],
}


def main():
    host = StationHost(seed=7)
    index = ingest_directory(default_knowledge_dir())
    audit = AuditLog(Path(tempfile.mkdtemp(prefix="cellops-demo-")) / "audit.log")
    provider = ScriptedProvider(
        [
            R.tool("config.validate", {"config": CONFIG}),
            R.tool("station.apply_config", {"config": CONFIG}),
            R.tool("station.start"),
            R.text("The cell is up on band 3 at 1842.5 MHz; UEs are attaching."),
        ]
    )
    session = Session("demo", host, index, audit, Policy(), provider)
    session.gate.preload(["approved"])

    handle = session.start_turn("Configure and start the cell on band 3 at 10 MHz.")
    for kind, payload in handle.stream():
        if kind == "tool_call":
            call = payload["call"]
            status = "ok" if "value" in call["result"] else call["result"]["error"]["code"]
            print(f"[tool] {call['name']} {json.dumps(call['args'])[:90]} -> {status}")
        elif kind == "approval_required":
            print("[approval] proposed changes:")
            for change in payload["changes"]:
                print(f"    {change['field']}: {change['old_value']} -> {change['new_value']}")
            print("[approval] auto-approved for the demo")
        elif kind == "turn_finished":
            turn = payload["turn"]
            print(f"[{turn['outcome']}] {turn['final_answer']}")
            print(f"    citations: {', '.join(turn['retrieved_citations'])}")
    handle.join()
    print(f"station: {host.snapshot().lifecycle}, latest KPI: {host.latest_kpi().to_dict()}")
    print(f"audit log: {audit.path} ({len(audit.records())} records)")


if __name__ == "__main__":
    main()
