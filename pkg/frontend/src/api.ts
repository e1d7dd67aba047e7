// Typed client for the control API. Exactly the HTTP/JSON + SSE surface the
// service exposes; no other backend calls.

import { readSseStream } from "./sse.js";
import type { KpiSample, SearchResult, StationSnapshot, TurnEvent, TurnEventKind } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function throwFor(response: Response): Promise<never> {
  let code = "http-error";
  let message = `${response.status}`;
  try {
    const body = await response.json();
    code = body?.detail?.error ?? code;
    message = body?.detail?.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async createSession(policy: Record<string, unknown> = {}): Promise<string> {
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ policy }),
    });
    if (!response.ok) await throwFor(response);
    const body = await response.json();
    return body.session_id as string;
  }

  /** POST a user message and deliver each turn event in stream order. */
  async streamMessage(
    sessionId: string,
    text: string,
    onEvent: (event: TurnEvent) => void | Promise<void>,
  ): Promise<void> {
    const response = await fetch(this.url(`/sessions/${sessionId}/message`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
    if (!response.ok || !response.body) await throwFor(response);
    await readSseStream(response.body!, async (raw) => {
      await onEvent({ kind: raw.event as TurnEventKind, payload: JSON.parse(raw.data) });
    });
  }

  async resolveApproval(sessionId: string, turnId: string, decision: "approved" | "rejected"): Promise<void> {
    const response = await fetch(this.url(`/sessions/${sessionId}/turns/${turnId}/approval`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ decision }),
    });
    if (!response.ok) await throwFor(response);
  }

  async getStation(): Promise<StationSnapshot> {
    const response = await fetch(this.url("/station"));
    if (!response.ok) await throwFor(response);
    return response.json();
  }

  async getKpis(windowS: number): Promise<KpiSample[]> {
    const response = await fetch(this.url(`/station/kpis?window_s=${windowS}`));
    if (!response.ok) await throwFor(response);
    return (await response.json()).samples;
  }

  async searchKb(query: string, k = 3): Promise<SearchResult[]> {
    const response = await fetch(this.url(`/kb/search?q=${encodeURIComponent(query)}&k=${k}`));
    if (!response.ok) await throwFor(response);
    return (await response.json()).results;
  }

  async getAudit(after = -1): Promise<Record<string, unknown>[]> {
    const response = await fetch(this.url(`/audit?after=${after}`));
    if (!response.ok) await throwFor(response);
    return (await response.json()).records;
  }
}
