import { GatewayClient } from "./client.js";
import { DecisionInbox } from "./inbox.js";
import { EventFeed } from "./feed.js";
import { EventStreamController } from "./stream.js";
import { ConsoleView } from "./view.js";

const POLL_MS = 1000;

export function start(root: HTMLElement): void {
  const params = new URLSearchParams(window.location.search);
  const gateway = params.get("gateway") ?? "http://127.0.0.1:8787";
  const client = new GatewayClient(gateway);
  const feed = new EventFeed();
  const inbox = new DecisionInbox();
  let lastClock = 0;

  const view = new ConsoleView(root, {
    onVerdict: (id, verdict) => {
      void inbox.decide(client, id, verdict).then(() => {
        view.renderInbox(inbox, lastClock);
      });
    },
  });

  const controller = new EventStreamController(client, feed, {
    onRecord: (rec) => view.appendRecord(rec, feed),
    onStatus: (status) => view.setStatus(status),
  });
  void controller.run();

  const poll = async (): Promise<void> => {
    try {
      const [snapshot, decisions] = await Promise.all([
        client.state(),
        client.decisions(),
      ]);
      lastClock = snapshot.t_s;
      view.renderSnapshot(snapshot);
      inbox.sync(decisions);
    } catch {
      // the stream controller owns the disconnected banner
    }
    view.renderInbox(inbox, lastClock);
  };
  void poll();
  window.setInterval(() => void poll(), POLL_MS);
}

if (typeof document !== "undefined" && document.getElementById("console")) {
  start(document.getElementById("console") as HTMLElement);
}
