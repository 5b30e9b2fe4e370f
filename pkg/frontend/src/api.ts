// Typed client for the kolepi HTTP service.

export interface GridInfo {
  t_star: number;
  dt: number;
  n: number;
}

export interface ModelMeta {
  id: string;
  mode: string;
  kernel: Record<string, unknown>;
  ridge: number;
  positivity: boolean;
  grid: GridInfo;
  compartments: string[];
  infectious_index: number;
  scenario: Record<string, unknown>;
  train_size: number;
  u_train_range: [number, number];
  training_p_err: number;
}

export interface CurvePayload {
  grid: GridInfo;
  times: number[];
  compartments: string[];
  values: number[][];
  derivative: number[][] | null;
}

export interface OptimizeResult {
  levels: number[];
  objective: number;
  iterations: number;
  n_evals: number;
  provider: string;
  converged: boolean;
  objective_true: number | null;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  // 409 carries a usable (non-converged) optimizer result
  if (!resp.ok && resp.status !== 409) {
    throw new ApiError(resp.status, body.code ?? "unknown", body.message ?? resp.statusText);
  }
  return body as T;
}

export class Client {
  constructor(
    private base: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    return unwrap<T>(resp);
  }

  async health(): Promise<{ status: string }> {
    return unwrap(await this.fetchImpl(`${this.base}/health`));
  }

  async listModels(): Promise<ModelMeta[]> {
    const doc = await unwrap<{ models: ModelMeta[] }>(await this.fetchImpl(`${this.base}/models`));
    return doc.models;
  }

  async getModel(id: string): Promise<ModelMeta> {
    return unwrap(await this.fetchImpl(`${this.base}/models/${id}`));
  }

  async trainModel(body: Record<string, unknown>): Promise<{ id: string }> {
    return this.post("/models", body);
  }

  async predictSchedule(id: string, levels: number[], tStar: number, signal?: AbortSignal): Promise<CurvePayload> {
    return this.post(
      `/models/${id}/predict`,
      { control: { family: "piecewise_constant", params: { levels, t_star: tStar } } },
      signal,
    );
  }

  async simulate(scenario: Record<string, unknown>, levels: number[], tStar: number, signal?: AbortSignal): Promise<CurvePayload> {
    return this.post(
      "/simulate",
      { scenario, control: { family: "piecewise_constant", params: { levels, t_star: tStar } } },
      signal,
    );
  }

  async optimize(id: string, cI: number, cU: number, nPhases: number, uUb: number, seed = 0): Promise<OptimizeResult> {
    return this.post(`/models/${id}/optimize`, {
      quad: { c_i: cI, c_u: cU, n_phases: nPhases, u_ub: uUb, seed },
      cross_evaluate: false,
    });
  }
}
