import { ApiClient, ApiError } from "./api";
import { EventStream } from "./sse";
import { Store } from "./store";
import { linkKey } from "./types";
import { populateForms, renderShell, update } from "./views";

export type Intent =
  | { kind: "approve"; id: string }
  | { kind: "revert"; id: string }
  | { kind: "config"; patch: Record<string, any> }
  | { kind: "inject"; src_prefix: string; dst_prefix: string; factor: number; hours: number }
  | { kind: "benchmark"; days: number }
  | { kind: "advance"; hours: number };

/**
 * Wires the store, the API client and the event stream to the DOM. State
 * changes only ever come from API responses and SSE events; act() performs
 * exactly one request per intent and applies nothing optimistically.
 */
export class ConsoleController {
  store = new Store();
  api: ApiClient;
  private stream: EventStream;
  private seriesTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private root: HTMLElement,
    baseUrl: string,
    fetchFn: typeof fetch = fetch.bind(globalThis),
    private seriesDebounceMs = 150,
  ) {
    this.api = new ApiClient(baseUrl, fetchFn);
    this.stream = new EventStream(`${baseUrl}/api/v1/events`, {
      onEnvelope: (env) => this.onEnvelope(env),
      onState: (state) => {
        const reconnected = state === "live" && this.store.vm.connection === "degraded";
        this.store.setConnection(state);
        if (reconnected) void this.refetchAll();
      },
    }, fetchFn);
  }

  async start(): Promise<void> {
    renderShell(this.root);
    this.root.addEventListener("click", (event) => this.onClick(event));
    this.root.addEventListener("submit", (event) => this.onSubmit(event));
    this.store.onChange(() => update(this.root, this.store));
    this.stream.start();
    await this.refetchAll();
    populateForms(this.root, this.store);
    await this.refreshUtilization();
  }

  stop(): void {
    this.stream.stop();
    if (this.seriesTimer !== null) clearTimeout(this.seriesTimer);
  }

  async refetchAll(): Promise<void> {
    const [topology, config, benchmarks, trends, decisions] = await Promise.all([
      this.api.getTopology(),
      this.api.getConfig(),
      this.api.getBenchmarks(),
      this.api.getTrends(),
      this.api.getDecisions(),
    ]);
    this.store.replaceAll({ topology, config, benchmarks, trends, decisions });
  }

  /** Live chart overlays come from bucket-able /series responses. */
  async refreshUtilization(onlyDirty = false): Promise<void> {
    const links = this.store.vm.topology?.monitored_links ?? [];
    const dirty = new Set(this.store.dirtyLinks);
    this.store.dirtyLinks.clear();
    const now = this.store.vm.virtualNowMs;
    for (const link of links) {
      const key = linkKey(link.host_ip, link.interface);
      if (onlyDirty && !dirty.has(key)) continue;
      const series = await this.api.getSeries({
        metric: "utilization",
        host_ip: link.host_ip,
        interface: link.interface,
        src: link.src,
        from: now === null ? 0 : now - 24 * 3_600_000,
      });
      this.store.setUtilization(key, series.points);
    }
  }

  private onEnvelope(env: any): void {
    const result = this.store.applyEnvelope(env);
    if (result === "gap") {
      void this.refetchAll().then(() => this.refreshUtilization());
      return;
    }
    if (result === "applied" && env.kind === "sample") {
      if (this.seriesTimer !== null) clearTimeout(this.seriesTimer);
      this.seriesTimer = setTimeout(() => {
        this.seriesTimer = null;
        void this.refreshUtilization(true);
      }, this.seriesDebounceMs);
    }
  }

  /** One API request per intent; the UI changes only via response/events. */
  async act(intent: Intent): Promise<void> {
    try {
      switch (intent.kind) {
        case "approve":
          await this.api.approveDecision(intent.id);
          break;
        case "revert":
          await this.api.revertDecision(intent.id);
          break;
        case "config": {
          const config = await this.api.putConfig(intent.patch);
          this.store.setConfig(config); // no SSE kind for config; response is authoritative
          this.store.toast("info", "config updated");
          break;
        }
        case "inject":
          await this.api.injectScenario({
            src_prefix: intent.src_prefix,
            dst_prefix: intent.dst_prefix,
            factor: intent.factor,
            hours: intent.hours,
          });
          this.store.toast("info", `injection armed: x${intent.factor} for ${intent.hours}h`);
          break;
        case "benchmark":
          await this.api.runBenchmark(intent.days);
          break;
        case "advance":
          await this.api.advance(intent.hours);
          break;
      }
    } catch (error) {
      if (error instanceof ApiError) {
        this.store.toast("error", JSON.stringify(error.body));
      } else {
        this.store.toast("error", String(error));
      }
    }
  }

  private onClick(event: Event): void {
    const target = event.target as HTMLElement;
    const action = target.getAttribute?.("data-action");
    const id = target.getAttribute?.("data-id");
    if (action === "approve" && id) void this.act({ kind: "approve", id });
    if (action === "revert" && id) void this.act({ kind: "revert", id });
  }

  private onSubmit(event: Event): void {
    const form = event.target as HTMLFormElement;
    const kind = form.getAttribute("data-action-form");
    if (!kind) return;
    event.preventDefault();
    const data = new FormData(form);
    const num = (name: string) => Number(data.get(name));
    if (kind === "benchmark") void this.act({ kind: "benchmark", days: num("days") });
    if (kind === "advance") void this.act({ kind: "advance", hours: num("hours") });
    if (kind === "inject") {
      void this.act({
        kind: "inject",
        src_prefix: String(data.get("src_prefix")),
        dst_prefix: String(data.get("dst_prefix")),
        factor: num("factor"),
        hours: num("hours"),
      });
    }
    if (kind === "config") {
      void this.act({
        kind: "config",
        patch: {
          analytics: {
            threshold_fraction: num("threshold_fraction"),
            deviation_multiplier: num("deviation_multiplier"),
            confirm_window: num("confirm_window"),
            sigma_floor: num("sigma_floor"),
          },
        },
      });
    }
  }
}

declare global {
  interface Window {
    trendnetConsole?: ConsoleController;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const controller = new ConsoleController(
    document.getElementById("app") as HTMLElement,
    window.location.origin,
  );
  window.trendnetConsole = controller;
  void controller.start();
}
