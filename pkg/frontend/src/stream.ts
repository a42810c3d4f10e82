import type { GatewayClient } from "./client.js";
import type { EventFeed } from "./feed.js";
import type { GapRecord, GatewayRecord } from "./types.js";

export type ConnectionStatus = "connecting" | "live" | "disconnected" | "ended";

export interface StreamOptions {
  retryMs?: number;
  onRecord?: (rec: GatewayRecord) => void;
  onStatus?: (status: ConnectionStatus) => void;
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

/**
 * Keeps an /events stream alive. On drop it reconnects with the feed's
 * since-cursor, so the resumed stream continues at the exact seq where the
 * old one died. A clean end-of-stream means the simulation finished.
 */
export class EventStreamController {
  status: ConnectionStatus = "connecting";
  private stopped = false;
  private abort: AbortController | null = null;
  private readonly retryMs: number;

  constructor(
    private readonly client: GatewayClient,
    private readonly feed: EventFeed,
    private readonly opts: StreamOptions = {},
  ) {
    this.retryMs = opts.retryMs ?? 1000;
  }

  private setStatus(status: ConnectionStatus): void {
    if (this.status !== status) {
      this.status = status;
      this.opts.onStatus?.(status);
    }
  }

  async run(): Promise<void> {
    while (!this.stopped) {
      this.abort = new AbortController();
      try {
        const stream = this.client.events(this.feed.lastSeq, this.abort.signal);
        for await (const rec of stream) {
          this.setStatus("live");
          if (this.feed.push(rec)) {
            this.opts.onRecord?.(rec as GatewayRecord);
          }
        }
        if (!this.stopped) this.setStatus("ended");
        return;
      } catch {
        if (this.stopped) return;
        this.setStatus("disconnected");
        await sleep(this.retryMs);
      }
    }
  }

  stop(): void {
    this.stopped = true;
    this.abort?.abort();
  }
}

export { type GapRecord };
