import { ConnectionState } from "./sse";
import {
  BenchmarkDoc,
  ConfigDoc,
  DecisionDoc,
  EventEnvelope,
  SeriesPoint,
  TopologyDoc,
  TrendDoc,
  linkKey,
} from "./types";

export interface Toast {
  kind: "error" | "info";
  text: string;
}

export interface ViewModel {
  topology: TopologyDoc | null;
  config: ConfigDoc | null;
  benchmarks: Record<string, BenchmarkDoc>;
  utilization: Record<string, SeriesPoint[]>; // live series per link, from /series
  trends: TrendDoc[];
  decisions: DecisionDoc[];
  connection: ConnectionState;
  virtualNowMs: number | null;
  toasts: Toast[];
}

export type ApplyResult = "applied" | "duplicate" | "gap";

/**
 * The console's single source of truth. Every number in it came from an API
 * response or an SSE payload; the reducer never derives statistics itself.
 */
export class Store {
  vm: ViewModel = {
    topology: null,
    config: null,
    benchmarks: {},
    utilization: {},
    trends: [],
    decisions: [],
    connection: "connecting",
    virtualNowMs: null,
    toasts: [],
  };
  lastSeq: number | null = null;
  dirtyLinks = new Set<string>();
  private listeners: (() => void)[] = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Full-refetch results replace the event-sourced collections wholesale. */
  replaceAll(state: {
    topology: TopologyDoc;
    config: ConfigDoc;
    benchmarks: BenchmarkDoc[];
    trends: TrendDoc[];
    decisions: DecisionDoc[];
  }): void {
    this.vm.topology = state.topology;
    this.vm.config = state.config;
    this.vm.benchmarks = {};
    for (const doc of state.benchmarks) {
      this.vm.benchmarks[linkKey(doc.link.host_ip, doc.link.interface)] = doc;
    }
    this.vm.trends = [...state.trends];
    this.vm.decisions = [...state.decisions];
    this.notify();
  }

  setConfig(doc: ConfigDoc): void {
    this.vm.config = doc;
    this.notify();
  }

  setUtilization(key: string, points: SeriesPoint[]): void {
    this.vm.utilization[key] = points;
    this.notify();
  }

  setConnection(state: ConnectionState): void {
    this.vm.connection = state;
    this.notify();
  }

  toast(kind: Toast["kind"], text: string): void {
    this.vm.toasts.push({ kind, text });
    if (this.vm.toasts.length > 5) this.vm.toasts.shift();
    this.notify();
  }

  /**
   * Apply one SSE envelope. Duplicates (seq at or below the last applied)
   * are ignored; a forward jump means missed events, and the caller must
   * refetch everything.
   */
  applyEnvelope(env: EventEnvelope): ApplyResult {
    if (this.lastSeq !== null) {
      if (env.seq <= this.lastSeq) return "duplicate";
      if (env.seq !== this.lastSeq + 1) {
        this.lastSeq = env.seq;
        return "gap";
      }
    }
    this.lastSeq = env.seq;
    this.vm.virtualNowMs = env.ts_ms;
    switch (env.kind) {
      case "sample": {
        const key = linkKey(env.payload.host_ip, env.payload.type_instance);
        this.dirtyLinks.add(key);
        break;
      }
      case "benchmark": {
        const doc = env.payload as BenchmarkDoc;
        this.vm.benchmarks[linkKey(doc.link.host_ip, doc.link.interface)] = doc;
        break;
      }
      case "trend": {
        const doc = env.payload as TrendDoc;
        const index = this.vm.trends.findIndex((t) => t.id === doc.id);
        if (index >= 0) this.vm.trends[index] = doc;
        else this.vm.trends.push(doc);
        break;
      }
      case "decision": {
        const doc = env.payload as DecisionDoc;
        const index = this.vm.decisions.findIndex((d) => d.id === doc.id);
        if (index >= 0) this.vm.decisions[index] = doc;
        else this.vm.decisions.push(doc);
        break;
      }
    }
    this.notify();
    return "applied";
  }

  monitoredLinkKeys(): string[] {
    return (this.vm.topology?.monitored_links ?? []).map((m) =>
      linkKey(m.host_ip, m.interface),
    );
  }

  trendWindowsFor(key: string): { start: number; end: number | null }[] {
    return this.vm.trends
      .filter((t) => linkKey(t.link.host_ip, t.link.interface) === key)
      .map((t) => ({ start: t.started_at_ms, end: t.ended_at_ms }));
  }
}
