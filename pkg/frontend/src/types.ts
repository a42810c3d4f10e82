/** Wire types for the operator gateway HTTP API. */

/** One NDJSON line from GET /events: a bus message or an engine record. */
export interface GatewayRecord {
  seq: number;
  t: number;
  kind?: string;
  record?: string;
  src?: string;
  dst?: string;
  payload?: Record<string, unknown>;
  [key: string]: unknown;
}

/** Marker emitted when the requested cursor fell out of the stream buffer. */
export interface GapRecord {
  record: "gap";
  from: number;
  to: number;
}

export interface FleetRow {
  id: string;
  phase: string;
  battery_frac: number;
  position: { x: number; y: number };
  current_stop: string | null;
  stops_remaining: number;
}

export interface Snapshot {
  version: number;
  t_s: number;
  stopped: boolean;
  fleet: FleetRow[];
  jobs: Record<string, string>;
  pending_decisions: number;
}

export interface PendingDecision {
  id: string;
  kind: string;
  craft: string;
  stop: string;
  deadline_t_s: number;
  [key: string]: unknown;
}

export type Verdict = "approve" | "reject";

export function isGap(rec: GatewayRecord | GapRecord): rec is GapRecord {
  return rec.record === "gap";
}
