// Client-side quadratic cost preview.
//
// Intentionally the same quadrature as the server objective (trapezoid on
// the shared grid), so the panel can refresh between debounced predicts
// and still agree with server-reported objectives to round-off.

export interface CostBreakdown {
  infection: number;
  control: number;
  total: number;
}

export function trapezoid(values: number[], dt: number): number {
  let acc = 0;
  for (let k = 1; k < values.length; k++) {
    acc += ((values[k - 1] + values[k]) / 2) * dt;
  }
  return acc;
}

export function quadCost(
  infectious: number[],
  controlSamples: number[],
  cI: number,
  cU: number,
  dt: number,
): CostBreakdown {
  if (infectious.length !== controlSamples.length) {
    throw new RangeError("infectious and control sample lengths differ");
  }
  const infection = cI * trapezoid(infectious.map((v) => v * v), dt);
  const control = cU * trapezoid(controlSamples.map((v) => v * v), dt);
  return { infection, control, total: infection + control };
}
