import type { GatewayClient } from "./client.js";
import type { PendingDecision, Verdict } from "./types.js";

export type RowState = "pending" | "sending" | "sent" | "error";

export interface InboxRow {
  decision: PendingDecision;
  state: RowState;
  errorCode?: number;
}

/**
 * Pending-decision inbox. Mirrors GET /decisions after each sync, with an
 * idempotency guard: once a verdict is in flight for a row, further clicks
 * are ignored, so each human verdict maps to exactly one POST.
 */
export class DecisionInbox {
  private rows = new Map<string, InboxRow>();

  list(): InboxRow[] {
    return [...this.rows.values()];
  }

  get(id: string): InboxRow | undefined {
    return this.rows.get(id);
  }

  /** Replace pending rows with the gateway's view, keeping in-flight state. */
  sync(decisions: PendingDecision[]): void {
    const fresh = new Map(decisions.map((d) => [d.id, d]));
    for (const [id, row] of this.rows) {
      if (!fresh.has(id) && row.state === "pending") this.rows.delete(id);
    }
    for (const [id, decision] of fresh) {
      const row = this.rows.get(id);
      if (row === undefined) {
        this.rows.set(id, { decision, state: "pending" });
      } else {
        row.decision = decision;
      }
    }
  }

  /**
   * Send a verdict. Resolves to the HTTP status, or null when the click was
   * swallowed by the idempotency guard (row unknown or already in flight).
   * 200 removes the row optimistically; any error restores it with a badge.
   */
  async decide(
    client: GatewayClient,
    id: string,
    verdict: Verdict,
  ): Promise<number | null> {
    const row = this.rows.get(id);
    if (row === undefined || row.state !== "pending") return null;
    row.state = "sending";
    let status: number;
    try {
      ({ status } = await client.postVerdict(id, verdict));
    } catch {
      row.state = "error";
      row.errorCode = 0; // network failure, not a gateway status
      return 0;
    }
    if (status === 200) {
      row.state = "sent";
      this.rows.delete(id);
    } else {
      row.state = "error";
      row.errorCode = status;
    }
    return status;
  }
}
