// SVG path construction from curve payloads: pure data-to-string mapping
// so it can be tested without a DOM.

import { CurvePayload } from "./api.js";

export interface PathSpec {
  compartment: string;
  d: string;
  dashed: boolean;
}

const PALETTE = ["#2a6f97", "#d1495b", "#3a7d44", "#8d6a9f", "#c77d1f"];

export function compartmentColor(index: number): string {
  return PALETTE[index % PALETTE.length];
}

export function curvePaths(
  payload: CurvePayload,
  visible: Set<string>,
  width: number,
  height: number,
  yMax: number,
  dashed = false,
): PathSpec[] {
  const tMax = payload.times[payload.times.length - 1] || 1;
  const paths: PathSpec[] = [];
  payload.compartments.forEach((name, row) => {
    if (!visible.has(name)) return;
    const pts = payload.times.map((t, k) => {
      const x = (t / tMax) * width;
      const y = height - (payload.values[row][k] / yMax) * height;
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    });
    paths.push({ compartment: name, d: `M${pts.join(" L")}`, dashed });
  });
  return paths;
}

export function niceMax(payload: CurvePayload | null): number {
  if (!payload) return 1;
  let m = 0;
  for (const row of payload.values) for (const v of row) m = Math.max(m, v);
  return m <= 0 ? 1 : Math.min(1.05, m * 1.1);
}
