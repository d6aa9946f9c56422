import type { EndpointSeries } from "./api.js";

export interface StackedLayer {
  endpoint: string;
  lower: number[];
  upper: number[];
}

export interface Stacked {
  buckets: number[];
  layers: StackedLayer[];
  peak: number;
}

// Align every series onto one contiguous bucket grid and accumulate layer
// offsets so areas can be drawn bottom-up without overdraw. Buckets the
// server never reported count as zero, which keeps the time axis honest
// across gaps.
export function stackSeries(series: EndpointSeries[], window: number): Stacked {
  const starts: number[] = [];
  for (const s of series) {
    for (const p of s.points) {
      starts.push(p.window_start);
    }
  }
  if (!starts.length) {
    return { buckets: [], layers: [], peak: 0 };
  }
  const lo = Math.min(...starts);
  const hi = Math.max(...starts);
  const buckets: number[] = [];
  for (let b = lo; b <= hi; b += window) {
    buckets.push(b);
  }

  const accum = new Array<number>(buckets.length).fill(0);
  const layers: StackedLayer[] = [];
  for (const s of series) {
    const lower = accum.slice();
    for (const p of s.points) {
      const idx = Math.floor((p.window_start - lo) / window);
      if (idx >= 0 && idx < accum.length) {
        accum[idx] += p.bytes_sent + p.bytes_received;
      }
    }
    layers.push({ endpoint: s.endpoint, lower, upper: accum.slice() });
  }
  return { buckets, layers, peak: Math.max(0, ...accum) };
}
