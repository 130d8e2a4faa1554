import { BenchmarkDoc, SeriesPoint } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 640;
const HEIGHT = 240;
const MARGIN = { top: 12, right: 16, bottom: 28, left: 44 };
const MS_PER_HOUR = 3_600_000;
const Y_MAX = 1.05;

const plotW = WIDTH - MARGIN.left - MARGIN.right;
const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;

function x(hour: number): number {
  return MARGIN.left + (hour / 23) * plotW;
}

function y(value: number): number {
  const clamped = Math.min(Math.max(value, 0), Y_MAX);
  return MARGIN.top + plotH - (clamped / Y_MAX) * plotH;
}

function el(name: string, attrs: Record<string, string | number>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  return node;
}

export interface ChartInput {
  benchmark: BenchmarkDoc | null;
  samples: SeriesPoint[]; // utilization points straight from /series
  deviationMultiplier: number; // k, from the served config
  trendWindows: { start: number; end: number | null }[]; // server-flagged spans
}

/**
 * Hour-of-day utilization chart: benchmark mean line with a +/- k*sigma
 * band and the threshold rule, live samples as points. Samples are marked
 * "flagged" only when they fall inside a server-reported trend window;
 * the client never re-derives flags.
 */
export function renderBenchmarkChart(input: ChartInput): SVGSVGElement {
  const svg = el("svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    class: "benchmark-chart",
    width: WIDTH,
    height: HEIGHT,
  }) as SVGSVGElement;

  svg.appendChild(
    el("rect", {
      x: MARGIN.left, y: MARGIN.top, width: plotW, height: plotH, class: "plot-bg",
    }),
  );

  for (let hour = 0; hour < 24; hour++) {
    svg.appendChild(
      el("line", {
        x1: x(hour), x2: x(hour),
        y1: MARGIN.top + plotH, y2: MARGIN.top + plotH + 5,
        class: "hour-tick",
      }),
    );
    if (hour % 3 === 0) {
      const label = el("text", {
        x: x(hour), y: HEIGHT - 8, class: "tick-label", "text-anchor": "middle",
      });
      label.textContent = String(hour);
      svg.appendChild(label);
    }
  }
  for (const frac of [0, 0.25, 0.5, 0.75, 1.0]) {
    const label = el("text", {
      x: MARGIN.left - 6, y: y(frac) + 4, class: "tick-label", "text-anchor": "end",
    });
    label.textContent = frac.toFixed(2);
    svg.appendChild(label);
    svg.appendChild(
      el("line", {
        x1: MARGIN.left, x2: MARGIN.left + plotW, y1: y(frac), y2: y(frac), class: "grid-line",
      }),
    );
  }

  const bm = input.benchmark;
  if (bm !== null) {
    const k = input.deviationMultiplier;
    const upper = bm.hours.map((row) => `${x(row.h)},${y(row.mean + k * row.sigma)}`);
    const lower = [...bm.hours]
      .reverse()
      .map((row) => `${x(row.h)},${y(row.mean - k * row.sigma)}`);
    svg.appendChild(
      el("polygon", { points: [...upper, ...lower].join(" "), class: "sigma-band" }),
    );
    svg.appendChild(
      el("polyline", {
        points: bm.hours.map((row) => `${x(row.h)},${y(row.mean)}`).join(" "),
        class: "mean-line",
        fill: "none",
      }),
    );
    svg.appendChild(
      el("line", {
        x1: MARGIN.left, x2: MARGIN.left + plotW,
        y1: y(bm.threshold), y2: y(bm.threshold),
        class: "threshold-rule",
        "data-threshold": bm.threshold,
      }),
    );
  } else {
    const note = el("text", {
      x: MARGIN.left + plotW / 2, y: MARGIN.top + 16,
      class: "no-benchmark", "text-anchor": "middle",
    });
    note.textContent = "no benchmark";
    svg.appendChild(note);
  }

  for (const point of input.samples) {
    const hourOfDay = (point.ts % (24 * MS_PER_HOUR)) / MS_PER_HOUR;
    const flagged = input.trendWindows.some(
      (w) => point.ts >= w.start && (w.end === null || point.ts < w.end),
    );
    svg.appendChild(
      el("circle", {
        cx: x(hourOfDay), cy: y(point.value), r: 3,
        class: flagged ? "live-sample flagged" : "live-sample",
        "data-ts": point.ts,
      }),
    );
  }

  return svg;
}
