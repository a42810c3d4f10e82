import { isGap } from "./types.js";
import type { GapRecord, GatewayRecord } from "./types.js";

/**
 * Ordered, de-duplicated event feed. `lastSeq` doubles as the since-cursor
 * for stream reconnects, so a resumed stream can never replay a rendered
 * record or skip past an unrendered one.
 */
export class EventFeed {
  readonly records: GatewayRecord[] = [];
  readonly gaps: GapRecord[] = [];
  lastSeq = -1;

  constructor(readonly maxRendered = 500) {}

  /** Returns true when the record was new and appended. */
  push(rec: GatewayRecord | GapRecord): boolean {
    if (isGap(rec)) {
      this.gaps.push(rec);
      this.lastSeq = Math.max(this.lastSeq, rec.to - 1);
      return false;
    }
    if (rec.seq <= this.lastSeq) return false; // duplicate or stale replay
    this.lastSeq = rec.seq;
    this.records.push(rec);
    if (this.records.length > this.maxRendered) {
      this.records.splice(0, this.records.length - this.maxRendered);
    }
    return true;
  }
}
