// Piecewise-constant NPI schedule: the decision variables the user edits.

export interface ScheduleModel {
  levels: number[];
  tStar: number;
  uUb: number;
  modelId: string | null;
}

export const LEVEL_SNAP = 0.01;

export function snapLevel(value: number, uUb: number): number {
  const snapped = Math.round(value / LEVEL_SNAP) * LEVEL_SNAP;
  // keep the stored level an exact multiple of 0.01 despite fp noise
  const clean = Number(snapped.toFixed(2));
  return Math.min(Math.max(clean, 0), uUb);
}

export function withLevel(schedule: ScheduleModel, phase: number, value: number): ScheduleModel {
  if (phase < 0 || phase >= schedule.levels.length) {
    throw new RangeError(`phase ${phase} out of range`);
  }
  const levels = schedule.levels.slice();
  levels[phase] = snapLevel(value, schedule.uUb);
  return { ...schedule, levels };
}

export function withPhaseCount(schedule: ScheduleModel, nPhases: number): ScheduleModel {
  // resample the current shape onto the new slab layout
  const levels = new Array<number>(nPhases);
  const old = schedule.levels;
  for (let i = 0; i < nPhases; i++) {
    const center = (i + 0.5) / nPhases;
    const j = Math.min(old.length - 1, Math.floor(center * old.length));
    levels[i] = old[j];
  }
  return { ...schedule, levels };
}

/** Sample the schedule at grid times; value i applies on [t_{i-1}, t_i),
 * the last slab closed at tStar.  Matches the server's convention. */
export function sampleSchedule(levels: number[], tStar: number, times: number[]): number[] {
  const n = levels.length;
  const slab = tStar / n;
  return times.map((t) => {
    const idx = Math.min(Math.floor((t + 1e-9 * slab) / slab), n - 1);
    return levels[idx];
  });
}
