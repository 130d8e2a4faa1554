import { renderBenchmarkChart } from "./chart";
import { Store } from "./store";
import { DecisionDoc, TrendDoc, linkKey } from "./types";

function h(tag: string, attrs: Record<string, string> = {}, text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmtVirtual(ts: number | null): string {
  if (ts === null) return "—";
  return new Date(ts).toISOString().replace("T", " ").replace(".000Z", "Z");
}

function fmtUtil(value: number): string {
  return `${(value * 100).toFixed(1)}%`;
}

/** Static scaffold: containers for reactive regions plus the operator forms. */
export function renderShell(root: HTMLElement): void {
  root.innerHTML = `
    <header>
      <h1>trendnet console</h1>
      <span id="virtual-clock" class="clock"></span>
      <span id="connection" class="badge"></span>
    </header>
    <div id="degraded-banner" class="banner degraded" hidden>
      connection lost — retrying with backoff; data may be stale
    </div>
    <div id="toasts"></div>
    <main>
      <section id="links" class="panel"><h2>monitored links</h2><div class="links-grid"></div></section>
      <section id="trends" class="panel"><h2>trend feed</h2><div class="feed"></div></section>
      <section id="decisions" class="panel"><h2>decisions</h2><div class="table"></div></section>
      <aside id="controls" class="panel">
        <h2>operate</h2>
        <form id="benchmark-form" data-action-form="benchmark">
          <h3>benchmark</h3>
          <label>days <input name="days" type="number" value="3" min="1"></label>
          <button type="submit">run benchmark</button>
        </form>
        <form id="advance-form" data-action-form="advance">
          <h3>advance virtual time</h3>
          <label>hours <input name="hours" type="number" value="1" min="0.1" step="0.1"></label>
          <button type="submit">advance</button>
        </form>
        <form id="inject-form" data-action-form="inject">
          <h3>what-if injection</h3>
          <label>src <select name="src_prefix" id="inject-src"></select></label>
          <label>dst <select name="dst_prefix" id="inject-dst"></select></label>
          <label>factor <input name="factor" type="number" value="3" step="0.1"></label>
          <label>hours <input name="hours" type="number" value="6" step="0.5"></label>
          <button type="submit">inject</button>
        </form>
        <form id="config-form" data-action-form="config">
          <h3>analytics config</h3>
          <label>threshold <input name="threshold_fraction" type="number" step="0.01"></label>
          <label>k (deviation) <input name="deviation_multiplier" type="number" step="0.1"></label>
          <label>confirm window <input name="confirm_window" type="number" step="1"></label>
          <label>sigma floor <input name="sigma_floor" type="number" step="0.001"></label>
          <button type="submit">apply config</button>
        </form>
      </aside>
    </main>
  `;
}

export function populateForms(root: HTMLElement, store: Store): void {
  const config = store.vm.config;
  if (config) {
    const form = root.querySelector<HTMLFormElement>("#config-form");
    if (form) {
      for (const name of [
        "threshold_fraction",
        "deviation_multiplier",
        "confirm_window",
        "sigma_floor",
      ]) {
        const input = form.querySelector<HTMLInputElement>(`[name="${name}"]`);
        if (input && input.value === "") input.value = String(config.analytics[name]);
      }
    }
  }
  const subnets = Object.keys(store.vm.topology?.subnets ?? {});
  for (const id of ["inject-src", "inject-dst"]) {
    const select = root.querySelector<HTMLSelectElement>(`#${id}`);
    if (select && select.options.length === 0) {
      for (const prefix of subnets) {
        select.appendChild(h("option", { value: prefix }, prefix));
      }
      if (id === "inject-dst" && subnets.length > 1) select.selectedIndex = 1;
    }
  }
}

function trendLine(trend: TrendDoc): HTMLElement {
  const active = trend.ended_at_ms === null;
  const row = h("div", { class: active ? "trend active" : "trend ended", "data-trend-id": trend.id });
  row.appendChild(h("span", { class: "mono" }, trend.id));
  row.appendChild(h("span", {}, `${trend.link.host_ip}/${trend.link.interface}`));
  row.appendChild(h("span", {}, `peak ${fmtUtil(trend.peak_utilization)}`));
  row.appendChild(
    h("span", { class: "mono" }, active ? `since ${fmtVirtual(trend.confirmed_at_ms)}` : "ended"),
  );
  return row;
}

function decisionRow(decision: DecisionDoc): HTMLElement {
  const row = h("div", { class: "decision-row", "data-decision-id": decision.id });
  row.appendChild(h("span", { class: "mono" }, decision.id));
  row.appendChild(h("span", {}, decision.domain));
  row.appendChild(h("span", { class: "mono" }, decision.affected_prefix));
  const hop = (pair: { device: string; interface: string } | null) =>
    pair ? `${pair.device}/${pair.interface}` : "—";
  row.appendChild(h("span", {}, `${hop(decision.congested)} → ${hop(decision.alternate)}`));
  row.appendChild(h("span", { class: `status status-${decision.status}` }, decision.status));
  if (decision.status === "planned") {
    row.appendChild(
      h("button", { "data-action": "approve", "data-id": decision.id }, "approve"),
    );
  }
  if (decision.status === "applied") {
    row.appendChild(h("button", { "data-action": "revert", "data-id": decision.id }, "revert"));
  }
  if (decision.failure_cause) {
    row.appendChild(h("span", { class: "cause" }, decision.failure_cause));
  }
  return row;
}

/** Re-render the reactive regions from the view model. */
export function update(root: HTMLElement, store: Store): void {
  const vm = store.vm;

  const clock = root.querySelector("#virtual-clock");
  if (clock) clock.textContent = `virtual ${fmtVirtual(vm.virtualNowMs)}`;
  const connection = root.querySelector("#connection");
  if (connection) {
    connection.textContent = vm.connection;
    connection.className = `badge badge-${vm.connection}`;
  }
  const banner = root.querySelector<HTMLElement>("#degraded-banner");
  if (banner) banner.hidden = vm.connection !== "degraded";

  const toasts = root.querySelector("#toasts");
  if (toasts) {
    toasts.innerHTML = "";
    for (const toast of vm.toasts) {
      toasts.appendChild(h("div", { class: `toast toast-${toast.kind}` }, toast.text));
    }
  }

  const grid = root.querySelector("#links .links-grid");
  if (grid) {
    grid.innerHTML = "";
    for (const link of vm.topology?.monitored_links ?? []) {
      const key = linkKey(link.host_ip, link.interface);
      const card = h("article", { class: "link-card", "data-link": key });
      card.appendChild(
        h("h3", {}, `${link.device} ${link.interface} (${link.host_ip}, ${link.src})`),
      );
      const benchmark = vm.benchmarks[key] ?? null;
      card.appendChild(
        renderBenchmarkChart({
          benchmark,
          samples: vm.utilization[key] ?? [],
          deviationMultiplier: vm.config?.analytics?.deviation_multiplier ?? 2.0,
          trendWindows: store.trendWindowsFor(key),
        }),
      );
      if (benchmark) {
        card.appendChild(
          h("p", { class: "meta" }, `benchmark ${benchmark.id}, threshold ${benchmark.threshold}`),
        );
      }
      grid.appendChild(card);
    }
  }

  const feed = root.querySelector("#trends .feed");
  if (feed) {
    feed.innerHTML = "";
    const trends = [...vm.trends].reverse();
    if (!trends.length) feed.appendChild(h("p", { class: "empty" }, "no trends yet"));
    for (const trend of trends) feed.appendChild(trendLine(trend));
  }

  const table = root.querySelector("#decisions .table");
  if (table) {
    table.innerHTML = "";
    const decisions = [...vm.decisions].reverse();
    if (!decisions.length) table.appendChild(h("p", { class: "empty" }, "no decisions yet"));
    for (const decision of decisions) table.appendChild(decisionRow(decision));
  }
}
