import { EventEnvelope } from "./types";

export type ConnectionState = "connecting" | "live" | "degraded";

export interface StreamHandlers {
  onEnvelope: (env: EventEnvelope) => void;
  onState: (state: ConnectionState) => void;
}

/** Incremental parser for a text/event-stream body. */
export class SSEParser {
  private buffer = "";
  private dataLines: string[] = [];

  /** Feed a chunk; returns the data payloads of any completed events. */
  push(chunk: string): string[] {
    this.buffer += chunk;
    const out: string[] = [];
    let index: number;
    while ((index = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, index).replace(/\r$/, "");
      this.buffer = this.buffer.slice(index + 1);
      if (line.startsWith("data:")) {
        this.dataLines.push(line.slice(5).trimStart());
      } else if (line === "") {
        if (this.dataLines.length) {
          out.push(this.dataLines.join("\n"));
          this.dataLines = [];
        }
      }
      // comments (":...") and id:/event: lines need no handling here; the
      // envelope repeats seq and kind in its JSON body
    }
    return out;
  }
}

/**
 * fetch-streaming SSE client (works in browsers and node) with backoff
 * reconnect. Connection loss flips the state to "degraded" until the
 * stream is re-established.
 */
export class EventStream {
  private controller: AbortController | null = null;
  private stopped = false;
  private backoffMs = 500;

  constructor(
    private url: string,
    private handlers: StreamHandlers,
    private fetchFn: typeof fetch = fetch,
  ) {}

  start(): void {
    this.stopped = false;
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        this.handlers.onState("connecting");
        const response = await this.fetchFn(this.url, {
          signal: this.controller.signal,
          headers: { Accept: "text/event-stream" },
        });
        if (!response.ok || !response.body) {
          throw new Error(`stream returned ${response.status}`);
        }
        this.handlers.onState("live");
        this.backoffMs = 500;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SSEParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const payload of parser.push(decoder.decode(value, { stream: true }))) {
            this.handlers.onEnvelope(JSON.parse(payload) as EventEnvelope);
          }
        }
      } catch {
        // fall through to reconnect
      }
      if (this.stopped) return;
      this.handlers.onState("degraded");
      await new Promise((resolve) => setTimeout(resolve, this.backoffMs));
      this.backoffMs = Math.min(this.backoffMs * 2, 8000);
    }
  }
}
