// Browser wiring: renders the store into the DOM, polls station/KPIs at
// 1 Hz, streams turns, and runs the blocking approval modal.

import { ApiClient, ApiError } from "./api.js";
import { ConsoleStore } from "./store.js";
import type { KpiPoint } from "./store.js";

const POLL_INTERVAL_MS = 1000;
const RETRY_BACKOFF_MS = [1000, 2000, 4000, 8000];

export function startConsole(endpoint: string): void {
  const store = new ConsoleStore();
  const api = new ApiClient(endpoint);
  let sessionId: string | null = null;
  let streaming = false;
  let pollFailures = 0;

  const el = (id: string) => document.getElementById(id)!;
  store.subscribe(() => render(store, el));

  async function ensureSession(): Promise<string> {
    if (!sessionId) sessionId = await api.createSession();
    return sessionId;
  }

  async function poll(): Promise<void> {
    try {
      store.noteStation(await api.getStation());
      store.noteKpis(await api.getKpis(300));
      pollFailures = 0;
      store.noteConnection("connected");
    } catch {
      pollFailures += 1;
      store.noteConnection(pollFailures > 4 ? "lost" : "degraded");
      const backoff = RETRY_BACKOFF_MS[Math.min(pollFailures - 1, RETRY_BACKOFF_MS.length - 1)]!;
      await new Promise((resolve) => setTimeout(resolve, backoff));
    }
  }

  async function send(text: string): Promise<void> {
    if (streaming) {
      store.setNotice("a turn is already in flight");
      return;
    }
    streaming = true;
    store.setNotice(null);
    try {
      const sid = await ensureSession();
      await api.streamMessage(sid, text, (event) => store.applyEvent(event));
    } catch (err) {
      if (err instanceof ApiError && err.code === "busy-session") {
        store.setNotice("session is busy; wait for the current turn");
      } else {
        store.setNotice(`stream failed: ${(err as Error).message}`);
        store.noteConnection("degraded");
      }
    } finally {
      streaming = false;
    }
  }

  async function resolveDiff(decision: "approved" | "rejected"): Promise<void> {
    const pending = store.state.pendingApproval;
    if (!pending || !sessionId) return;
    if (decision === "approved" && !store.canApprove()) return; // stale diff
    try {
      await api.resolveApproval(sessionId, pending.turnId, decision);
    } catch (err) {
      store.setNotice(`approval failed: ${(err as Error).message}`);
    }
  }

  (el("send-form") as HTMLFormElement).addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = el("message-input") as HTMLInputElement;
    const text = input.value.trim();
    if (text) {
      input.value = "";
      void send(text);
    }
  });
  el("approve-btn").addEventListener("click", () => void resolveDiff("approved"));
  el("reject-btn").addEventListener("click", () => void resolveDiff("rejected"));

  const tick = async () => {
    await poll();
    setTimeout(tick, POLL_INTERVAL_MS);
  };
  void tick();
  render(store, el);
}

function render(store: ConsoleStore, el: (id: string) => HTMLElement): void {
  const { connection, transcript, stationPanel, kpiSeries, pendingApproval, notice } = store.state;

  const badge = el("connection-badge");
  badge.textContent = connection;
  badge.className = `badge ${connection}`;

  el("notice").textContent = notice ?? "";

  const lifecycle = stationPanel?.lifecycle ?? "unknown";
  const lifecycleBadge = el("lifecycle-badge");
  lifecycleBadge.textContent = stationPanel ? `${lifecycle}${stationPanel.active_fault ? " / " + stationPanel.active_fault : ""}` : "—";
  lifecycleBadge.className = `badge state-${lifecycle.toLowerCase()}`;

  const configTable = el("config-table");
  if (stationPanel?.active_config) {
    configTable.innerHTML = Object.entries(stationPanel.active_config)
      .map(([key, value]) => `<tr><td>${key}</td><td>${escapeHtml(JSON.stringify(value))}</td></tr>`)
      .join("");
  } else {
    configTable.innerHTML = `<tr><td colspan="2">no configuration applied</td></tr>`;
  }

  el("transcript").innerHTML = transcript
    .map((turn) => {
      const rows = turn.rows
        .map((row) => {
          if (row.type === "tool_call") {
            const ok = row.call.result.error === undefined;
            const status = ok ? "ok" : row.call.result.error!.code;
            return `<div class="tool ${ok ? "ok" : "err"}">⚙ ${row.call.name} → ${escapeHtml(status)}</div>`;
          }
          return `<div class="approval-row">⏸ approval requested (${row.approval.changes.length} changes)</div>`;
        })
        .join("");
      const answer = turn.finished
        ? `<div class="answer ${turn.finished.outcome}">[${turn.finished.outcome}] ${escapeHtml(turn.finished.final_answer)}
           ${turn.finished.retrieved_citations.length ? `<div class="cites">cites: ${turn.finished.retrieved_citations.join(", ")}</div>` : ""}</div>`
        : `<div class="answer pending">…</div>`;
      return `<div class="turn"><div class="user">▶ ${escapeHtml(turn.userMessage)}</div>${rows}${answer}</div>`;
    })
    .join("");

  const modal = el("approval-modal");
  if (pendingApproval) {
    modal.style.display = "flex";
    el("diff-table").innerHTML = pendingApproval.changes
      .map(
        (change) =>
          `<tr><td>${change.field}</td><td>${escapeHtml(JSON.stringify(change.old_value))}</td>` +
          `<td>${escapeHtml(JSON.stringify(change.new_value))}</td></tr>`,
      )
      .join("");
    (el("approve-btn") as HTMLButtonElement).disabled = !store.canApprove();
    el("diff-hash-state").textContent = store.canApprove()
      ? "diff verified against server hash"
      : "verifying diff…";
  } else {
    modal.style.display = "none";
  }

  drawSeries(el("chart-attach") as HTMLCanvasElement, kpiSeries, (p) => p.attachRate, 0, 1);
  drawSeries(el("chart-rsrp") as HTMLCanvasElement, kpiSeries, (p) => p.avgRsrpDbm, -140, -40);
  drawSeries(el("chart-tp") as HTMLCanvasElement, kpiSeries, (p) => p.throughputMbps, 0, 50);
}

function drawSeries(
  canvas: HTMLCanvasElement,
  series: KpiPoint[],
  pick: (p: KpiPoint) => number,
  min: number,
  max: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#4da3ff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  series.forEach((point, i) => {
    const x = series.length > 1 ? (i / (series.length - 1)) * width : width / 2;
    const clamped = Math.min(Math.max(pick(point), min), max);
    const y = height - ((clamped - min) / (max - min)) * height;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

declare global {
  interface Window {
    startConsole: typeof startConsole;
  }
}

if (typeof window !== "undefined") {
  window.startConsole = startConsole;
}
