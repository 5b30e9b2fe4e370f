// Scenario-explorer state machine.
//
// Every curve shown to the user is a server response; the store never
// integrates dynamics itself.  Schedule edits debounce into a single
// trailing predict request, and a sequence number enforces latest-wins:
// an in-flight response for a superseded schedule is dropped (and its
// request aborted), so the rendered curves always correspond to the most
// recently issued request.

import { Client, CurvePayload, ModelMeta, OptimizeResult } from "./api.js";
import { quadCost, CostBreakdown } from "./cost.js";
import { ScheduleModel, sampleSchedule, withLevel } from "./schedule.js";

export interface ViewState {
  visibleCompartments: Set<string>;
  overlayTruth: boolean;
  cI: number;
  cU: number;
  prediction: CurvePayload | null;
  truth: CurvePayload | null;
  pending: boolean;
  error: string | null;
  lastOptimize: OptimizeResult | null;
}

export interface ExplorerOptions {
  debounceMs?: number;
  setTimeoutImpl?: typeof setTimeout;
  clearTimeoutImpl?: typeof clearTimeout;
}

export class ExplorerStore {
  schedule: ScheduleModel;
  view: ViewState;
  meta: ModelMeta | null = null;

  private client: Client;
  private debounceMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private seq = 0;
  private applied = 0;
  private controller: AbortController | null = null;
  private listeners: Array<() => void> = [];
  private setT: typeof setTimeout;
  private clearT: typeof clearTimeout;

  constructor(client: Client, opts: ExplorerOptions = {}) {
    this.client = client;
    this.debounceMs = opts.debounceMs ?? 150;
    this.setT = opts.setTimeoutImpl ?? setTimeout;
    this.clearT = opts.clearTimeoutImpl ?? clearTimeout;
    this.schedule = { levels: [], tStar: 0, uUb: 0.7, modelId: null };
    this.view = {
      visibleCompartments: new Set(),
      overlayTruth: false,
      cI: 1.0,
      cU: 0.1,
      prediction: null,
      truth: null,
      pending: false,
      error: null,
      lastOptimize: null,
    };
  }

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify() {
    for (const listener of this.listeners) listener();
  }

  async selectModel(id: string, nPhases: number): Promise<void> {
    const meta = await this.client.getModel(id);
    this.meta = meta;
    this.schedule = {
      levels: new Array(nPhases).fill(0),
      tStar: meta.grid.t_star,
      uUb: Math.min(0.7, Math.max(0, meta.u_train_range[1])),
      modelId: id,
    };
    this.view.visibleCompartments = new Set(meta.compartments);
    this.view.prediction = null;
    this.view.truth = null;
    this.notify();
    await this.refresh();
  }

  /** Drag/keyboard edit of one phase handle; fires a trailing predict. */
  editSchedule(phase: number, level: number): void {
    this.schedule = withLevel(this.schedule, phase, level);
    this.notify();
    if (this.timer !== null) this.clearT(this.timer);
    this.timer = this.setT(() => {
      this.timer = null;
      void this.refresh();
    }, this.debounceMs);
  }

  /** Issue predict (and simulate when the overlay is on) for the current
   * schedule; stale responses are dropped. */
  async refresh(): Promise<void> {
    if (!this.schedule.modelId || !this.meta) return;
    const ticket = ++this.seq;
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    this.view.pending = true;
    this.notify();
    try {
      const prediction = await this.client.predictSchedule(
        this.schedule.modelId, this.schedule.levels, this.schedule.tStar, controller.signal);
      let truth: CurvePayload | null = this.view.truth;
      if (this.view.overlayTruth) {
        truth = await this.client.simulate(
          this.meta.scenario, this.schedule.levels, this.schedule.tStar, controller.signal);
      }
      if (ticket < this.applied || ticket < this.seq) return; // superseded
      this.applied = ticket;
      this.view.prediction = prediction;
      if (this.view.overlayTruth) this.view.truth = truth;
      this.view.pending = false;
      this.view.error = null;
    } catch (err) {
      if ((err as Error).name === "AbortError") return;
      if (ticket < this.seq) return;
      // keep the last good curves, surface the failure
      this.view.pending = false;
      this.view.error = (err as Error).message;
    }
    this.notify();
  }

  /** Toggle the ground-truth overlay; enabling fetches the curve, disabling
   * only hides it (no re-fetch of predictions). */
  async setOverlay(on: boolean): Promise<void> {
    this.view.overlayTruth = on;
    if (!on) {
      this.view.truth = null;
      this.notify();
      return;
    }
    if (this.schedule.modelId && this.meta) {
      const ticket = ++this.seq;
      try {
        const truth = await this.client.simulate(
          this.meta.scenario, this.schedule.levels, this.schedule.tStar);
        if (ticket < this.seq) return;
        this.applied = ticket;
        this.view.truth = truth;
        this.view.error = null;
      } catch (err) {
        this.view.error = (err as Error).message;
      }
    }
    this.notify();
  }

  setWeights(cI: number, cU: number): void {
    this.view.cI = cI;
    this.view.cU = cU;
    this.notify();
  }

  toggleCompartment(name: string): void {
    if (this.view.visibleCompartments.has(name)) {
      this.view.visibleCompartments.delete(name);
    } else {
      this.view.visibleCompartments.add(name);
    }
    this.notify();
  }

  /** Cost panel from the latest prediction and the current schedule. */
  costs(): CostBreakdown | null {
    const pred = this.view.prediction;
    if (!pred || !this.meta) return null;
    const infectious = pred.values[this.meta.infectious_index];
    const u = sampleSchedule(this.schedule.levels, this.schedule.tStar, pred.times);
    return quadCost(infectious, u, this.view.cI, this.view.cU, pred.grid.dt);
  }

  /** Replace the schedule with the server optimizer's answer, then refresh. */
  async seedFromOptimizer(): Promise<OptimizeResult | null> {
    if (!this.schedule.modelId) return null;
    const result = await this.client.optimize(
      this.schedule.modelId, this.view.cI, this.view.cU,
      this.schedule.levels.length, this.schedule.uUb);
    this.view.lastOptimize = result;
    this.schedule = {
      ...this.schedule,
      levels: result.levels.map((v) => Math.min(Math.max(v, 0), this.schedule.uUb)),
    };
    this.notify();
    await this.refresh();
    return result;
  }

  /** Full-precision export of the current session state. */
  exportState(): string {
    return JSON.stringify({
      schedule: { levels: this.schedule.levels, t_star: this.schedule.tStar },
      weights: { c_i: this.view.cI, c_u: this.view.cU },
      prediction: this.view.prediction,
      truth: this.view.truth,
    });
  }
}
