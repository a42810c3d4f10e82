/** Scripted in-process gateway stub for contract tests. */

import http from "node:http";
import type { AddressInfo, Socket } from "node:net";

export interface RecordedPost {
  id: string;
  verdict: string;
}

export class StubGateway {
  lines: string[] = [];
  decisions: unknown[] = [];
  snapshot: unknown = {
    version: 1,
    t_s: 12.5,
    stopped: false,
    fleet: [],
    jobs: {},
    pending_decisions: 0,
  };
  posts: RecordedPost[] = [];
  postStatus = 200;
  sinceParams: number[] = [];
  /** Lines to serve per connection before abruptly killing the socket. */
  streamLimit = Infinity;
  /** When true, streams end cleanly once all lines are served. */
  ended = false;

  private server: http.Server | null = null;
  private sockets = new Set<Socket>();
  port = 0;

  pushLine(rec: Record<string, unknown>): void {
    this.lines.push(JSON.stringify(rec));
  }

  start(): Promise<void> {
    this.server = http.createServer((req, res) => this.handle(req, res));
    this.server.on("connection", (socket) => {
      this.sockets.add(socket);
      socket.on("close", () => this.sockets.delete(socket));
    });
    return new Promise((resolve) => {
      this.server!.listen(0, "127.0.0.1", () => {
        this.port = (this.server!.address() as AddressInfo).port;
        resolve();
      });
    });
  }

  get url(): string {
    return `http://127.0.0.1:${this.port}`;
  }

  stop(): Promise<void> {
    for (const socket of this.sockets) socket.destroy();
    return new Promise((resolve) => this.server?.close(() => resolve()));
  }

  private handle(req: http.IncomingMessage, res: http.ServerResponse): void {
    const url = new URL(req.url ?? "/", this.url);
    if (req.method === "POST") {
      const match = /^\/decisions\/([^/]+)$/.exec(url.pathname);
      if (!match) {
        this.json(res, 404, { error: "not found" });
        return;
      }
      let body = "";
      req.on("data", (chunk) => (body += chunk));
      req.on("end", () => {
        const verdict = (JSON.parse(body || "{}") as { verdict?: string })
          .verdict;
        this.posts.push({ id: match[1], verdict: verdict ?? "" });
        this.json(res, this.postStatus,
                  this.postStatus === 200
                    ? { id: match[1], verdict, status: "accepted" }
                    : { error: `status ${this.postStatus}` });
      });
      return;
    }
    if (url.pathname === "/state") {
      this.json(res, 200, this.snapshot);
    } else if (url.pathname === "/decisions") {
      this.json(res, 200, this.decisions);
    } else if (url.pathname === "/events") {
      this.stream(res, Number(url.searchParams.get("since") ?? "-1"));
    } else {
      this.json(res, 404, { error: "not found" });
    }
  }

  private json(res: http.ServerResponse, code: number, body: unknown): void {
    const data = JSON.stringify(body);
    res.writeHead(code, { "Content-Type": "application/json" });
    res.end(data);
  }

  private stream(res: http.ServerResponse, since: number): void {
    this.sinceParams.push(since);
    res.writeHead(200, { "Content-Type": "application/x-ndjson" });
    let cursor = since + 1;
    let served = 0;
    const tick = setInterval(() => {
      if (served >= this.streamLimit) {
        // hang up one tick after the last write so it actually flushes
        clearInterval(tick);
        res.destroy();
        return;
      }
      while (cursor < this.lines.length && served < this.streamLimit) {
        res.write(this.lines[cursor] + "\n");
        cursor += 1;
        served += 1;
      }
      if (this.ended && cursor >= this.lines.length) {
        clearInterval(tick);
        res.end();
      }
    }, 5);
    res.on("close", () => clearInterval(tick));
  }
}
