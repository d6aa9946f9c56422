// Stacked per-endpoint bandwidth chart drawn as plain SVG. No canvas, no
// chart library: the bundle stays dependency-free and the markup is
// inspectable by tests and screen readers alike.

import type { BandwidthResponse } from "./api.js";
import { formatBytes, formatClock } from "./format.js";
import { stackSeries } from "./stack.js";

const SVG_NS = "http://www.w3.org/2000/svg";

const WIDTH = 640;
const HEIGHT = 220;
const PAD = { left: 58, right: 12, top: 10, bottom: 24 };

const PALETTE = [
  "#2563eb", "#d97706", "#059669", "#dc2626",
  "#7c3aed", "#0891b2", "#be185d", "#65a30d",
];

export function renderBandwidthChart(container: HTMLElement, data: BandwidthResponse): void {
  container.textContent = "";
  if (!data.series.length) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No flows recorded for this device yet.";
    container.append(empty);
    return;
  }

  const stacked = stackSeries(data.series, data.window);
  const plotW = WIDTH - PAD.left - PAD.right;
  const plotH = HEIGHT - PAD.top - PAD.bottom;
  const peak = stacked.peak || 1;
  const lastIdx = Math.max(1, stacked.buckets.length - 1);
  const x = (i: number) =>
    stacked.buckets.length === 1 ? PAD.left + plotW / 2 : PAD.left + (i / lastIdx) * plotW;
  const y = (v: number) => PAD.top + plotH - (v / peak) * plotH;

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "bandwidth-chart");
  svg.setAttribute("role", "img");
  svg.setAttribute("data-window", String(data.window));
  svg.setAttribute("data-buckets", String(stacked.buckets.length));

  // areas first, highest layer drawn last so it sits on top
  stacked.layers.forEach((layer, i) => {
    const forward = layer.upper.map((v, j) => `${x(j).toFixed(1)},${y(v).toFixed(1)}`);
    const back = layer.lower
      .map((v, j) => `${x(j).toFixed(1)},${y(v).toFixed(1)}`)
      .reverse();
    const path = document.createElementNS(SVG_NS, "path");
    path.setAttribute("d", `M ${forward.join(" L ")} L ${back.join(" L ")} Z`);
    path.setAttribute("class", "series");
    path.setAttribute("data-endpoint", layer.endpoint);
    path.setAttribute("fill", PALETTE[i % PALETTE.length]);
    path.setAttribute("fill-opacity", "0.75");
    svg.append(path);
  });

  const axis = document.createElementNS(SVG_NS, "path");
  axis.setAttribute(
    "d",
    `M ${PAD.left} ${PAD.top} V ${PAD.top + plotH} H ${PAD.left + plotW}`,
  );
  axis.setAttribute("class", "axis");
  axis.setAttribute("fill", "none");
  svg.append(axis);

  const yLabel = document.createElementNS(SVG_NS, "text");
  yLabel.setAttribute("x", "4");
  yLabel.setAttribute("y", String(PAD.top + 10));
  yLabel.setAttribute("class", "tick");
  yLabel.textContent = formatBytes(stacked.peak);
  svg.append(yLabel);

  const first = stacked.buckets[0];
  const last = stacked.buckets[stacked.buckets.length - 1];
  for (const [bucket, anchor, xPos] of [
    [first, "start", PAD.left],
    [last, "end", PAD.left + plotW],
  ] as const) {
    const tick = document.createElementNS(SVG_NS, "text");
    tick.setAttribute("x", String(xPos));
    tick.setAttribute("y", String(HEIGHT - 6));
    tick.setAttribute("text-anchor", anchor);
    tick.setAttribute("class", "tick");
    tick.textContent = formatClock(bucket);
    svg.append(tick);
  }

  container.append(svg);

  const legend = document.createElement("ul");
  legend.className = "chart-legend";
  data.series.forEach((s, i) => {
    const item = document.createElement("li");
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = PALETTE[i % PALETTE.length];
    const name = document.createElement("span");
    name.textContent = `${s.endpoint} (${formatBytes(s.total_bytes)})`;
    item.append(swatch, name);
    legend.append(item);
  });
  container.append(legend);
}
