import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { GatewayClient } from "../src/client.js";
import { DecisionInbox } from "../src/inbox.js";
import type { PendingDecision } from "../src/types.js";
import { StubGateway } from "./stub.js";

const decision = (id: string): PendingDecision => ({
  id,
  kind: "signature_escalation",
  craft: "uav1",
  stop: "A1",
  deadline_t_s: 120,
});

let stub: StubGateway;
let client: GatewayClient;

beforeEach(async () => {
  stub = new StubGateway();
  await stub.start();
  client = new GatewayClient(stub.url);
});

afterEach(async () => {
  await stub.stop();
});

describe("DecisionInbox", () => {
  it("mirrors the gateway decision list after each sync", () => {
    const inbox = new DecisionInbox();
    inbox.sync([decision("d1"), decision("d2")]);
    expect(inbox.list().map((r) => r.decision.id)).toEqual(["d1", "d2"]);
    inbox.sync([decision("d2")]);
    expect(inbox.list().map((r) => r.decision.id)).toEqual(["d2"]);
  });

  it("a verdict posts exactly once and resolves the row", async () => {
    const inbox = new DecisionInbox();
    inbox.sync([decision("d1")]);
    const status = await inbox.decide(client, "d1", "approve");
    expect(status).toBe(200);
    expect(stub.posts).toEqual([{ id: "d1", verdict: "approve" }]);
    expect(inbox.get("d1")).toBeUndefined();
  });

  it("a double-click sends a single POST", async () => {
    const inbox = new DecisionInbox();
    inbox.sync([decision("d1")]);
    const [first, second] = await Promise.all([
      inbox.decide(client, "d1", "approve"),
      inbox.decide(client, "d1", "approve"),
    ]);
    expect(first).toBe(200);
    expect(second).toBeNull();
    expect(stub.posts).toHaveLength(1);
  });

  it("verdicts on unknown rows are swallowed without a POST", async () => {
    const inbox = new DecisionInbox();
    expect(await inbox.decide(client, "ghost", "reject")).toBeNull();
    expect(stub.posts).toHaveLength(0);
  });

  it("an expired row is restored with the gateway status code", async () => {
    stub.postStatus = 410;
    const inbox = new DecisionInbox();
    inbox.sync([decision("d1")]);
    expect(await inbox.decide(client, "d1", "approve")).toBe(410);
    const row = inbox.get("d1");
    expect(row?.state).toBe("error");
    expect(row?.errorCode).toBe(410);
  });

  it("error rows survive a sync that no longer lists them", async () => {
    stub.postStatus = 409;
    const inbox = new DecisionInbox();
    inbox.sync([decision("d1")]);
    await inbox.decide(client, "d1", "reject");
    inbox.sync([]);
    expect(inbox.get("d1")?.state).toBe("error");
  });
});
