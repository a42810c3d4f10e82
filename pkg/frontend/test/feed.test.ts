import { describe, expect, it } from "vitest";

import { EventFeed } from "../src/feed.js";

const rec = (seq: number) => ({ seq, t: seq * 0.5, kind: "EnRouteNotice" });

describe("EventFeed", () => {
  it("appends records in seq order and advances the cursor", () => {
    const feed = new EventFeed();
    for (let i = 0; i < 5; i++) expect(feed.push(rec(i))).toBe(true);
    expect(feed.records.map((r) => r.seq)).toEqual([0, 1, 2, 3, 4]);
    expect(feed.lastSeq).toBe(4);
  });

  it("drops duplicates and stale replays", () => {
    const feed = new EventFeed();
    feed.push(rec(0));
    feed.push(rec(1));
    expect(feed.push(rec(1))).toBe(false);
    expect(feed.push(rec(0))).toBe(false);
    expect(feed.records.map((r) => r.seq)).toEqual([0, 1]);
  });

  it("a gap marker advances the cursor to the resume point", () => {
    const feed = new EventFeed();
    expect(feed.push({ record: "gap", from: 0, to: 6 })).toBe(false);
    expect(feed.lastSeq).toBe(5);
    expect(feed.push(rec(6))).toBe(true);
    expect(feed.gaps).toEqual([{ record: "gap", from: 0, to: 6 }]);
  });

  it("caps rendered records at maxRendered", () => {
    const feed = new EventFeed(3);
    for (let i = 0; i < 10; i++) feed.push(rec(i));
    expect(feed.records.map((r) => r.seq)).toEqual([7, 8, 9]);
    expect(feed.lastSeq).toBe(9);
  });
});
