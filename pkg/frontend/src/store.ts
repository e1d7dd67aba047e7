// Console view state: a single ordered reducer over stream events plus the
// 1 Hz station/KPI polls. Rendering reads this store and nothing else, and
// each turn keeps its rows in arrival order, so the "every event rendered
// exactly once and in order" invariant is checkable by replaying the rendered
// transcript back into an event list.

import { diffHash } from "./hash.js";
import type {
  AgentTurn,
  ApprovalRequiredPayload,
  DiffChange,
  KpiSample,
  StationSnapshot,
  ToolCallRecord,
  TurnEvent,
} from "./types.js";

export type Connection = "connected" | "degraded" | "lost";

export type TranscriptRow =
  | { type: "tool_call"; call: ToolCallRecord }
  | { type: "approval"; approval: ApprovalRequiredPayload };

export interface RenderedTurn {
  turnId: string;
  userMessage: string;
  rows: TranscriptRow[];
  finished: AgentTurn | null;
}

export interface PendingApproval {
  turnId: string;
  changes: DiffChange[];
  oldConfig: ApprovalRequiredPayload["old"];
  newConfig: ApprovalRequiredPayload["new"];
  serverHash: string;
  renderedHash: string | null; // recomputed from the rendered diff values
}

export interface KpiPoint {
  t: number;
  attachRate: number;
  avgRsrpDbm: number;
  throughputMbps: number;
}

export const KPI_SERIES_LIMIT = 300;

export interface ConsoleViewState {
  connection: Connection;
  transcript: RenderedTurn[];
  stationPanel: StationSnapshot | null;
  kpiSeries: KpiPoint[];
  pendingApproval: PendingApproval | null;
  notice: string | null; // inline errors such as busy-session
}

export class ConsoleStore {
  state: ConsoleViewState = {
    connection: "lost",
    transcript: [],
    stationPanel: null,
    kpiSeries: [],
    pendingApproval: null,
    notice: null,
  };

  /** Raw events in arrival order; the integration test compares the rendered
   * transcript against this log one-to-one. */
  eventLog: TurnEvent[] = [];

  private listeners: Array<() => void> = [];

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private changed(): void {
    for (const listener of this.listeners) listener();
  }

  /** Apply one stream event; resolves once any approval-hash verification
   * triggered by it has settled. */
  async applyEvent(event: TurnEvent): Promise<void> {
    this.eventLog.push(event);
    const payload = event.payload as Record<string, unknown>;
    switch (event.kind) {
      case "turn_started": {
        this.state.transcript.push({
          turnId: payload["turn_id"] as string,
          userMessage: payload["user_message"] as string,
          rows: [],
          finished: null,
        });
        this.clearPending();
        break;
      }
      case "tool_call": {
        const turn = this.turnEntry(payload["turn_id"] as string);
        turn.rows.push({ type: "tool_call", call: payload["call"] as ToolCallRecord });
        // any event after approval_required means the gate was resolved
        this.clearPending();
        break;
      }
      case "approval_required": {
        const approval = event.payload as unknown as ApprovalRequiredPayload;
        const turn = this.turnEntry(approval.turn_id);
        turn.rows.push({ type: "approval", approval });
        this.state.pendingApproval = {
          turnId: approval.turn_id,
          changes: approval.changes,
          oldConfig: approval.old,
          newConfig: approval.new,
          serverHash: approval.diff_hash,
          renderedHash: null,
        };
        await this.verifyRenderedDiff();
        break;
      }
      case "turn_finished": {
        const turn = this.turnEntry(payload["turn_id"] as string);
        turn.finished = payload["turn"] as unknown as AgentTurn;
        this.clearPending();
        break;
      }
    }
    this.changed();
  }

  private turnEntry(turnId: string): RenderedTurn {
    const found = this.state.transcript.find((t) => t.turnId === turnId);
    if (found) return found;
    // stream delivered a mid-turn event first (e.g. reconnect); synthesize
    const entry: RenderedTurn = { turnId, userMessage: "", rows: [], finished: null };
    this.state.transcript.push(entry);
    return entry;
  }

  private clearPending(): void {
    this.state.pendingApproval = null;
  }

  /** Stale-diff protection: recompute the hash from the values the modal
   * renders; approve stays disabled unless it matches the server's. */
  private async verifyRenderedDiff(): Promise<void> {
    const pending = this.state.pendingApproval;
    if (!pending) return;
    const next = structuredClone(pending.newConfig) as unknown as Record<string, unknown>;
    for (const change of pending.changes) {
      // the modal shows old -> new per field; rebuild `new` from those cells
      next[change.field] = change.new_value;
    }
    pending.renderedHash = await diffHash(pending.oldConfig, next);
    this.changed();
  }

  canApprove(): boolean {
    const pending = this.state.pendingApproval;
    return !!pending && pending.renderedHash !== null && pending.renderedHash === pending.serverHash;
  }

  noteStation(snapshot: StationSnapshot): void {
    this.state.stationPanel = snapshot;
    this.changed();
  }

  noteKpis(samples: KpiSample[]): void {
    const series = samples.map((s) => ({
      t: s.sim_time_s,
      attachRate: s.attach_attempts > 0 ? s.attach_successes / s.attach_attempts : 0,
      avgRsrpDbm: s.avg_rsrp_dbm,
      throughputMbps: s.dl_throughput_mbps,
    }));
    this.state.kpiSeries = series.slice(-KPI_SERIES_LIMIT);
    this.changed();
  }

  noteConnection(connection: Connection): void {
    this.state.connection = connection;
    this.changed();
  }

  setNotice(text: string | null): void {
    this.state.notice = text;
    this.changed();
  }

  /** Re-derive the event sequence from the rendered transcript alone.
   * Losing, duplicating or reordering an event during rendering breaks the
   * one-to-one match with the recorded log. */
  renderedEventStream(): Array<{ kind: string; turnId: string; detail: string }> {
    const out: Array<{ kind: string; turnId: string; detail: string }> = [];
    for (const turn of this.state.transcript) {
      out.push({ kind: "turn_started", turnId: turn.turnId, detail: turn.userMessage });
      for (const row of turn.rows) {
        if (row.type === "tool_call") {
          out.push({ kind: "tool_call", turnId: turn.turnId, detail: row.call.name });
        } else {
          out.push({ kind: "approval_required", turnId: turn.turnId, detail: row.approval.diff_hash });
        }
      }
      if (turn.finished) {
        out.push({ kind: "turn_finished", turnId: turn.turnId, detail: turn.finished.outcome });
      }
    }
    return out;
  }

  recordedEventStream(): Array<{ kind: string; turnId: string; detail: string }> {
    return this.eventLog.map((event) => {
      const payload = event.payload as Record<string, unknown>;
      let detail = "";
      if (event.kind === "turn_started") detail = payload["user_message"] as string;
      else if (event.kind === "tool_call") detail = (payload["call"] as ToolCallRecord).name;
      else if (event.kind === "approval_required") detail = payload["diff_hash"] as string;
      else if (event.kind === "turn_finished") detail = (payload["turn"] as AgentTurn)?.outcome ?? "";
      return { kind: event.kind, turnId: payload["turn_id"] as string, detail };
    });
  }
}
