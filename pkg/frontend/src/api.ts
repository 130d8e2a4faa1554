import {
  BenchmarkDoc,
  ConfigDoc,
  DecisionDoc,
  SeriesDoc,
  TopologyDoc,
  TrendDoc,
} from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: any,
  ) {
    super(typeof body?.error === "string" ? body.error : `HTTP ${status}`);
  }
}

type FetchLike = typeof fetch;

/** Thin typed client over /api/v1; every mutation is exactly one request. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = fetch,
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const response = await this.fetchFn(`${this.baseUrl}/api/v1${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const doc = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw new ApiError(response.status, doc);
    }
    return doc;
  }

  getTopology(): Promise<TopologyDoc> {
    return this.request("GET", "/topology");
  }

  getConfig(): Promise<ConfigDoc> {
    return this.request("GET", "/config");
  }

  getBenchmarks(): Promise<BenchmarkDoc[]> {
    return this.request("GET", "/benchmarks");
  }

  getTrends(): Promise<TrendDoc[]> {
    return this.request("GET", "/trends");
  }

  getDecisions(): Promise<DecisionDoc[]> {
    return this.request("GET", "/decisions");
  }

  getSeries(params: {
    metric: string;
    host_ip: string;
    interface: string;
    src: string;
    from?: number;
    to?: number;
    bucket_ms?: number;
    fn?: string;
  }): Promise<SeriesDoc> {
    const query = new URLSearchParams();
    for (const [key, value] of Object.entries(params)) {
      if (value !== undefined) query.set(key, String(value));
    }
    return this.request("GET", `/series?${query.toString()}`);
  }

  runBenchmark(days: number): Promise<{ benchmarks: BenchmarkDoc[] }> {
    return this.request("POST", "/benchmark/run", { days });
  }

  approveDecision(id: string): Promise<DecisionDoc> {
    return this.request("POST", `/decisions/${id}/approve`);
  }

  revertDecision(id: string): Promise<DecisionDoc> {
    return this.request("POST", `/decisions/${id}/revert`);
  }

  putConfig(patch: ConfigDoc): Promise<ConfigDoc> {
    return this.request("PUT", "/config", patch);
  }

  injectScenario(inject: {
    src_prefix: string;
    dst_prefix: string;
    factor: number;
    hours: number;
  }): Promise<any> {
    return this.request("POST", "/sim/scenario", { inject });
  }

  advance(hours: number): Promise<{ now_ms: number }> {
    return this.request("POST", "/sim/advance", { hours });
  }
}
