// Typed client for the recommendation service. Responses carry a sequence
// number so the UI can drop answers that were superseded while in flight.

export interface FeatureInfo {
  name: string;
  role: 'direct' | 'indirect' | 'unchangeable';
  min: number;
  max: number;
  mean: number;
  cost_up?: number;
  cost_down?: number;
  lower?: number;
  upper?: number;
}

export interface SchemaResponse {
  features: FeatureInfo[];
  policy: string;
  support_k: number;
  model_type: string;
  budget_hint: number;
}

export interface RecommendationReport {
  instance_id: string;
  budget: number;
  deltas: Record<string, number>;
  deltas_raw: Record<string, number>;
  effective_lower: Record<string, number>;
  effective_upper: Record<string, number>;
  cost_spent: number;
  probability_before: number;
  probability_after: number;
  estimated_indirect: Record<string, number>;
  trace: { iterations: number; termination: string; g_history?: number[] };
  support: {
    epsilon: number;
    gamma: number;
    k: number;
    radius: number;
    baseline_gamma: number;
  } | null;
}

export interface SweepResponse {
  budgets: number[];
  reports: RecommendationReport[];
}

export interface CostOverrides {
  [feature: string]: { up?: number; down?: number };
}

export interface RecommendBody {
  values: Record<string, number>;
  budget: number;
  optimizer?: string;
  policy?: string;
  cost_overrides?: CostOverrides;
}

export class ServiceError extends Error {
  status: number;
  fields: Record<string, string>;

  constructor(status: number, message: string, fields: Record<string, string> = {}) {
    super(message);
    this.status = status;
    this.fields = fields;
  }
}

async function parseError(res: Response): Promise<ServiceError> {
  let message = `service error ${res.status}`;
  const fields: Record<string, string> = {};
  try {
    const doc = await res.json();
    if (Array.isArray(doc.errors)) {
      for (const err of doc.errors) {
        if (err.field) fields[String(err.field)] = String(err.message);
        message = String(err.message ?? message);
      }
    }
  } catch {
    // body was not JSON; keep the generic message
  }
  return new ServiceError(res.status, message, fields);
}

export class ApiClient {
  base: string;
  private seq = 0;
  private applied = { recommend: 0, sweep: 0 };

  constructor(base: string) {
    this.base = base.replace(/\/$/, '');
  }

  async getSchema(): Promise<SchemaResponse> {
    const res = await fetch(`${this.base}/schema`);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as SchemaResponse;
  }

  // Returns null when a newer request of the same kind finished first.
  async recommend(body: RecommendBody): Promise<RecommendationReport | null> {
    const ticket = ++this.seq;
    const res = await fetch(`${this.base}/recommend`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    const doc = (await res.json()) as RecommendationReport;
    if (ticket <= this.applied.recommend) return null;
    this.applied.recommend = ticket;
    return doc;
  }

  async sweep(body: { values: Record<string, number>; budgets: number[] } & Partial<RecommendBody>):
      Promise<SweepResponse | null> {
    const ticket = ++this.seq;
    const res = await fetch(`${this.base}/sweep`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    const doc = (await res.json()) as SweepResponse;
    if (ticket <= this.applied.sweep) return null;
    this.applied.sweep = ticket;
    return doc;
  }
}
