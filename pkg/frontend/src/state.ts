// Session state and the debounced exploration loop.

import {
  ApiClient,
  CostOverrides,
  RecommendationReport,
  SchemaResponse,
  ServiceError,
  SweepResponse,
} from './api.js';

export interface SessionState {
  schema: SchemaResponse | null;
  schemaError: string | null;
  values: Record<string, number>;
  budget: number;
  maxBudget: number;
  costOverrides: CostOverrides;
  optimizer: 'pgd' | 'sensitivity';
  report: RecommendationReport | null;
  sweep: SweepResponse | null;
  fieldErrors: Record<string, string>;
  toast: string | null;
  busy: boolean;
}

export function initialState(): SessionState {
  return {
    schema: null,
    schemaError: null,
    values: {},
    budget: 0,
    maxBudget: 20,
    costOverrides: {},
    optimizer: 'pgd',
    report: null,
    sweep: null,
    fieldErrors: {},
    toast: null,
    busy: false,
  };
}

export function defaultValues(schema: SchemaResponse): Record<string, number> {
  const values: Record<string, number> = {};
  for (const f of schema.features) {
    if (f.role !== 'indirect') values[f.name] = f.mean;
  }
  return values;
}

// Cache key covering everything that changes the sweep curve.
export function sweepKey(state: SessionState): string {
  return JSON.stringify([state.values, state.costOverrides, state.optimizer]);
}

export function sweepBudgets(maxBudget: number, points = 21): number[] {
  const out: number[] = [];
  const step = maxBudget / (points - 1);
  for (let i = 0; i < points; i++) out.push(Number((i * step).toFixed(6)));
  return out;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn(...args);
    }, waitMs);
  };
}

export class Session {
  state: SessionState;
  private api: ApiClient;
  private onChange: (state: SessionState) => void;
  private sweepCache = new Map<string, SweepResponse>();
  private requestRecommend: () => void;

  constructor(api: ApiClient, onChange: (state: SessionState) => void, debounceMs = 250) {
    this.api = api;
    this.onChange = onChange;
    this.state = initialState();
    this.requestRecommend = debounce(() => void this.refresh(), debounceMs);
  }

  private emit() {
    this.onChange(this.state);
  }

  async loadSchema(): Promise<void> {
    try {
      const schema = await this.api.getSchema();
      this.state.schema = schema;
      this.state.schemaError = null;
      this.state.values = defaultValues(schema);
      this.state.maxBudget = Math.max(1, Math.round(schema.budget_hint));
      this.state.budget = 0;
    } catch (err) {
      this.state.schemaError = err instanceof Error ? err.message : String(err);
    }
    this.emit();
    if (this.state.schema) await this.refresh();
  }

  setBudget(budget: number) {
    this.state.budget = budget;
    this.emit();
    this.requestRecommend();
  }

  setValue(feature: string, value: number) {
    this.state.values[feature] = value;
    this.state.sweep = null;
    this.emit();
    this.requestRecommend();
  }

  setCostOverride(feature: string, side: 'up' | 'down', value: number | null) {
    const entry = { ...(this.state.costOverrides[feature] ?? {}) };
    if (value === null) delete entry[side];
    else entry[side] = value;
    if (Object.keys(entry).length === 0) delete this.state.costOverrides[feature];
    else this.state.costOverrides[feature] = entry;
    this.state.sweep = null;
    this.emit();
    this.requestRecommend();
  }

  setOptimizer(optimizer: 'pgd' | 'sensitivity') {
    this.state.optimizer = optimizer;
    this.state.sweep = null;
    this.emit();
    this.requestRecommend();
  }

  // One round trip: recommendation at the current budget plus the sweep
  // curve (served from cache when only the budget moved).
  async refresh(): Promise<void> {
    if (!this.state.schema) return;
    this.state.busy = true;
    this.emit();
    const body = {
      values: this.state.values,
      budget: this.state.budget,
      optimizer: this.state.optimizer,
      cost_overrides: Object.keys(this.state.costOverrides).length
        ? this.state.costOverrides
        : undefined,
    };
    try {
      const report = await this.api.recommend(body);
      if (report !== null) {
        this.state.report = report;
        this.state.fieldErrors = {};
        this.state.toast = null;
      }
      const key = sweepKey(this.state);
      const cached = this.sweepCache.get(key);
      if (cached) {
        this.state.sweep = cached;
      } else {
        const sweep = await this.api.sweep({
          values: this.state.values,
          budgets: sweepBudgets(this.state.maxBudget),
          optimizer: this.state.optimizer,
          cost_overrides: body.cost_overrides,
        });
        if (sweep !== null) {
          this.sweepCache.set(key, sweep);
          this.state.sweep = sweep;
        }
      }
    } catch (err) {
      if (err instanceof ServiceError && err.status < 500) {
        this.state.fieldErrors = err.fields;
        if (Object.keys(err.fields).length === 0) {
          this.state.fieldErrors = { _: err.message };
        }
      } else {
        // keep the last good view, surface a toast
        this.state.toast = err instanceof Error ? err.message : String(err);
      }
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }
}
