// Documents exactly as the service serves them under /api/v1.

export interface MonitoredLink {
  device: string;
  host_ip: string;
  interface: string;
  src: string;
  capacity_bps: number;
}

export interface TopologyDoc {
  devices: {
    id: string;
    kind: string;
    mgmt_ip: string;
    interfaces: {
      name: string;
      capacity_bps: number;
      peer: { device: string; interface: string } | null;
      subnet: string | null;
    }[];
  }[];
  subnets: Record<string, { device: string; interface: string }>;
  monitored_links: MonitoredLink[];
}

export interface BenchmarkHourRow {
  h: number;
  mean: number;
  sigma: number;
}

export interface BenchmarkDoc {
  id: string;
  link: { host_ip: string; interface: string };
  created_at: number;
  capacity_bps: number;
  threshold: number;
  hours: BenchmarkHourRow[];
}

export interface TrendDoc {
  id: string;
  link: { host_ip: string; interface: string };
  started_at_ms: number;
  confirmed_at_ms: number;
  ended_at_ms: number | null;
  peak_utilization: number;
  benchmark_id: string;
}

export interface DecisionDoc {
  id: string;
  trend_event_id: string;
  domain: string;
  affected_prefix: string;
  congested: { device: string; interface: string } | null;
  alternate: { device: string; interface: string } | null;
  rendered: Record<string, unknown>[];
  duration_ms: number;
  created_at_ms: number;
  applied_at_ms: number | null;
  reverted_at_ms: number | null;
  status: "planned" | "applied" | "reverted" | "failed";
  failure_cause: string | null;
  src_prefix: string | null;
}

export interface SeriesPoint {
  ts: number;
  value: number;
}

export interface SeriesDoc {
  key: { metric: string; host_ip: string; interface: string; src: string };
  points: SeriesPoint[];
}

export type ConfigDoc = Record<string, any>;

export type EventKind = "sample" | "benchmark" | "trend" | "decision";

export interface EventEnvelope {
  seq: number;
  kind: EventKind;
  ts_ms: number;
  payload: any;
}

export function linkKey(host_ip: string, iface: string): string {
  return `${host_ip}|${iface}`;
}
