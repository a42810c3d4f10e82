import type { DecisionInbox } from "./inbox.js";
import type { EventFeed } from "./feed.js";
import type { ConnectionStatus } from "./stream.js";
import type { GatewayRecord, Snapshot, Verdict } from "./types.js";

export interface ViewHandlers {
  onVerdict: (id: string, verdict: Verdict) => void;
}

function el(tag: string, className: string, text = ""): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text) node.textContent = text;
  return node;
}

function describe(rec: GatewayRecord): string {
  if (rec.record !== undefined) {
    const extras = Object.entries(rec)
      .filter(([k]) => !["seq", "t", "record"].includes(k))
      .map(([k, v]) => `${k}=${JSON.stringify(v)}`)
      .join(" ");
    return `${rec.record} ${extras}`;
  }
  return `${rec.kind} ${rec.src}→${rec.dst} ${JSON.stringify(rec.payload)}`;
}

/** Builds the whole console DOM under `root` and repaints on demand. */
export class ConsoleView {
  private readonly banner: HTMLElement;
  private readonly clock: HTMLElement;
  private readonly fleetBody: HTMLElement;
  private readonly inboxList: HTMLElement;
  private readonly feedList: HTMLElement;

  constructor(
    root: HTMLElement,
    private readonly handlers: ViewHandlers,
  ) {
    this.banner = el("div", "banner", "connecting…");
    this.clock = el("div", "clock");
    const fleet = el("section", "fleet");
    fleet.append(el("h2", "", "Fleet"));
    const table = el("table", "fleet-table");
    const head = el("tr", "");
    for (const col of ["aircraft", "phase", "battery", "next stop", "left"]) {
      head.append(el("th", "", col));
    }
    this.fleetBody = el("tbody", "");
    const thead = el("thead", "");
    thead.append(head);
    table.append(thead, this.fleetBody);
    fleet.append(table);

    const inbox = el("section", "inbox");
    inbox.append(el("h2", "", "Pending decisions"));
    this.inboxList = el("ul", "inbox-list");
    inbox.append(this.inboxList);

    const feed = el("section", "feed");
    feed.append(el("h2", "", "Event feed"));
    this.feedList = el("ul", "feed-list");
    feed.append(this.feedList);

    root.append(this.banner, this.clock, fleet, inbox, feed);
  }

  setStatus(status: ConnectionStatus): void {
    this.banner.textContent =
      status === "disconnected" ? "DISCONNECTED — retrying" : status;
    this.banner.dataset.status = status;
  }

  renderSnapshot(snapshot: Snapshot): void {
    this.clock.textContent = `t = ${snapshot.t_s.toFixed(1)} s`;
    this.fleetBody.replaceChildren();
    for (const craft of snapshot.fleet) {
      const row = el("tr", "");
      row.append(
        el("td", "", craft.id),
        el("td", "", craft.phase),
        el("td", "", `${Math.round(craft.battery_frac * 100)}%`),
        el("td", "", craft.current_stop ?? "—"),
        el("td", "", String(craft.stops_remaining)),
      );
      this.fleetBody.append(row);
    }
  }

  renderInbox(inbox: DecisionInbox, now_s: number): void {
    this.inboxList.replaceChildren();
    for (const row of inbox.list()) {
      const item = el("li", `decision decision-${row.state}`);
      const d = row.decision;
      const remain = Math.max(0, d.deadline_t_s - now_s);
      item.append(
        el("span", "decision-label",
           `${d.kind} ${d.craft ?? ""} @ ${d.stop ?? ""} (${remain.toFixed(0)} s left)`),
      );
      if (row.state === "error") {
        item.append(el("span", "badge", `error ${row.errorCode}`));
      }
      for (const verdict of ["approve", "reject"] as const) {
        const button = el("button", `verdict-${verdict}`, verdict);
        (button as HTMLButtonElement).disabled = row.state !== "pending";
        button.addEventListener("click", () => {
          (button as HTMLButtonElement).disabled = true;
          this.handlers.onVerdict(d.id, verdict);
        });
        item.append(button);
      }
      this.inboxList.append(item);
    }
  }

  appendRecord(rec: GatewayRecord, feed: EventFeed): void {
    const item = el("li", "event", `#${rec.seq} t=${rec.t} ${describe(rec)}`);
    this.feedList.append(item);
    while (this.feedList.childElementCount > feed.maxRendered) {
      this.feedList.firstElementChild?.remove();
    }
  }
}
