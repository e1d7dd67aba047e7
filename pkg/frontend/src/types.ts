// Wire types mirroring the control API's JSON payloads (lower_snake_case).

export interface CellConfig {
  band: number;
  earfcn_dl: number;
  bandwidth_mhz: number;
  pci: number;
  tx_power_dbm: number;
  plmn: string;
  tac: number;
  cell_identity: number;
  neighbor_pcis: number[];
}

export interface StationSnapshot {
  lifecycle: string;
  active_config: CellConfig | null;
  active_fault: string | null;
  sim_time_s: number;
}

export interface KpiSample {
  sim_time_s: number;
  lifecycle: string;
  connected_ues: number;
  attach_attempts: number;
  attach_successes: number;
  avg_rsrp_dbm: number;
  dl_throughput_mbps: number;
}

export interface ToolCallRecord {
  name: string;
  args: Record<string, unknown>;
  result: { value?: unknown; error?: { code: string; message: string } };
  latency_ms: number;
}

export interface AgentTurn {
  turn_id: string;
  user_message: string;
  iterations: ToolCallRecord[];
  retrieved_citations: string[];
  proposed_diff: { old: CellConfig | null; new: CellConfig } | null;
  approval: string;
  final_answer: string;
  outcome: string;
}

export interface DiffChange {
  field: string;
  old_value: unknown;
  new_value: unknown;
}

export interface ApprovalRequiredPayload {
  turn_id: string;
  old: CellConfig | null;
  new: CellConfig;
  changes: DiffChange[];
  diff_hash: string;
}

export type TurnEventKind = "turn_started" | "tool_call" | "approval_required" | "turn_finished";

export interface TurnEvent {
  kind: TurnEventKind;
  payload: Record<string, unknown>;
}

export interface SearchResult {
  chunk_id: string;
  score: number;
  heading_path: string[];
  text: string;
}
