import type {
  GapRecord,
  GatewayRecord,
  PendingDecision,
  Snapshot,
  Verdict,
} from "./types.js";

export interface VerdictResponse {
  status: number;
  body: Record<string, unknown>;
}

/** Thin typed wrapper over the gateway's four endpoints. */
export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async state(): Promise<Snapshot> {
    const resp = await fetch(this.url("/state"));
    if (!resp.ok) throw new Error(`/state returned ${resp.status}`);
    return (await resp.json()) as Snapshot;
  }

  async decisions(): Promise<PendingDecision[]> {
    const resp = await fetch(this.url("/decisions"));
    if (!resp.ok) throw new Error(`/decisions returned ${resp.status}`);
    return (await resp.json()) as PendingDecision[];
  }

  async postVerdict(id: string, verdict: Verdict): Promise<VerdictResponse> {
    const resp = await fetch(this.url(`/decisions/${id}`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ verdict }),
    });
    const body = (await resp.json().catch(() => ({}))) as Record<
      string,
      unknown
    >;
    return { status: resp.status, body };
  }

  /**
   * Stream NDJSON records with seq > since, yielding each parsed line.
   * Completes when the gateway closes the stream (simulation stopped);
   * throws on network failure so the caller can reconnect with its cursor.
   */
  async *events(
    since: number,
    signal?: AbortSignal,
  ): AsyncGenerator<GatewayRecord | GapRecord> {
    const resp = await fetch(this.url(`/events?since=${since}`), { signal });
    if (!resp.ok || resp.body === null) {
      throw new Error(`/events returned ${resp.status}`);
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffered = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffered += decoder.decode(value, { stream: true });
      let newline;
      while ((newline = buffered.indexOf("\n")) >= 0) {
        const line = buffered.slice(0, newline).trim();
        buffered = buffered.slice(newline + 1);
        if (line) yield JSON.parse(line) as GatewayRecord | GapRecord;
      }
    }
  }
}
