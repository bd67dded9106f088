// @vitest-environment jsdom
import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import { ApiClient } from '../src/api.js';
import { debounce, Session, sweepBudgets } from '../src/state.js';

const SCHEMA_BODY = {
  features: [
    { name: 'a', role: 'direct', min: 0, max: 1, mean: 0.5, cost_up: 1, cost_down: 1, lower: 0, upper: 1 },
    { name: 'u', role: 'unchangeable', min: 0, max: 1, mean: 0.2 },
  ],
  policy: 'hardline',
  support_k: 5,
  model_type: 'logistic',
  budget_hint: 2,
};

function reportFor(budget: number, after = 0.5) {
  return {
    instance_id: 'adhoc', budget, deltas: { a: 0 }, deltas_raw: { a: 0 },
    effective_lower: { a: -0.5 }, effective_upper: { a: 0.5 },
    cost_spent: 0, probability_before: 0.7, probability_after: after,
    estimated_indirect: {}, trace: { iterations: 1, termination: 'tolerance' },
    support: null,
  };
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

describe('debounce', () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it('collapses a burst into one trailing call after 250 ms', () => {
    const calls: number[] = [];
    const fn = debounce((x: number) => calls.push(x), 250);
    fn(1); fn(2); fn(3);
    vi.advanceTimersByTime(249);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([3]);
  });
});

describe('session', () => {
  afterEach(() => vi.unstubAllGlobals());

  it('loads the schema and issues the initial recommendation', async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL) => {
      const path = String(url);
      if (path.endsWith('/schema')) return jsonResponse(SCHEMA_BODY);
      if (path.endsWith('/recommend')) return jsonResponse(reportFor(0));
      return jsonResponse({ budgets: [0], reports: [reportFor(0)] });
    });
    vi.stubGlobal('fetch', fetchMock);
    const states: string[] = [];
    const session = new Session(new ApiClient('http://svc'), (s) => {
      states.push(s.busy ? 'busy' : 'idle');
    }, 0);
    await session.loadSchema();
    expect(session.state.schema).not.toBeNull();
    expect(session.state.report).not.toBeNull();
    expect(session.state.values).toEqual({ a: 0.5, u: 0.2 });
  });

  it('drops stale in-flight responses by sequence number', async () => {
    const api = new ApiClient('http://svc');
    let release: (() => void) | null = null;
    const slowFirst = new Promise<void>((resolve) => { release = resolve; });
    let call = 0;
    vi.stubGlobal('fetch', vi.fn(async (url: RequestInfo | URL) => {
      if (String(url).endsWith('/recommend')) {
        call += 1;
        if (call === 1) {
          await slowFirst;   // first request finishes last
          return jsonResponse(reportFor(1, 0.61));
        }
        return jsonResponse(reportFor(2, 0.42));
      }
      return jsonResponse({ budgets: [0], reports: [reportFor(0)] });
    }));
    const first = api.recommend({ values: { a: 0.5 }, budget: 1 });
    const second = api.recommend({ values: { a: 0.5 }, budget: 2 });
    const fresh = await second;
    expect(fresh!.probability_after).toBe(0.42);
    release!();
    const stale = await first;
    expect(stale).toBeNull();   // superseded answer is dropped
  });

  it('serves repeat sweeps from the cache', async () => {
    let sweepCalls = 0;
    vi.stubGlobal('fetch', vi.fn(async (url: RequestInfo | URL) => {
      const path = String(url);
      if (path.endsWith('/schema')) return jsonResponse(SCHEMA_BODY);
      if (path.endsWith('/recommend')) return jsonResponse(reportFor(0));
      sweepCalls += 1;
      return jsonResponse({ budgets: [0, 1], reports: [reportFor(0), reportFor(1)] });
    }));
    const session = new Session(new ApiClient('http://svc'), () => {}, 0);
    await session.loadSchema();
    await session.refresh();    // same instance and overrides: cached curve
    expect(sweepCalls).toBe(1);
    session.state.values.a = 0.9;
    await session.refresh();    // instance changed: new curve
    expect(sweepCalls).toBe(2);
  });

  it('keeps the last good view and raises a toast on a 5xx', async () => {
    let fail = false;
    vi.stubGlobal('fetch', vi.fn(async (url: RequestInfo | URL) => {
      const path = String(url);
      if (path.endsWith('/schema')) return jsonResponse(SCHEMA_BODY);
      if (fail) return jsonResponse({ detail: 'boom' }, 500);
      if (path.endsWith('/recommend')) return jsonResponse(reportFor(0, 0.55));
      return jsonResponse({ budgets: [0], reports: [reportFor(0)] });
    }));
    const session = new Session(new ApiClient('http://svc'), () => {}, 0);
    await session.loadSchema();
    const good = session.state.report;
    expect(good).not.toBeNull();
    fail = true;
    await session.refresh();
    expect(session.state.report).toBe(good);
    expect(session.state.toast).not.toBeNull();
  });

  it('maps a 400 onto field errors without a toast', async () => {
    vi.stubGlobal('fetch', vi.fn(async (url: RequestInfo | URL) => {
      const path = String(url);
      if (path.endsWith('/schema')) return jsonResponse(SCHEMA_BODY);
      return jsonResponse(
        { errors: [{ field: 'body.values.a', message: 'not a number' }] }, 400,
      );
    }));
    const session = new Session(new ApiClient('http://svc'), () => {}, 0);
    await session.loadSchema();
    expect(session.state.fieldErrors['body.values.a']).toBe('not a number');
    expect(session.state.toast).toBeNull();
  });

  it('surfaces a schema failure as a blocking error', async () => {
    vi.stubGlobal('fetch', vi.fn(async () => jsonResponse({ detail: 'down' }, 503)));
    const session = new Session(new ApiClient('http://svc'), () => {}, 0);
    await session.loadSchema();
    expect(session.state.schemaError).not.toBeNull();
    expect(session.state.schema).toBeNull();
  });
});

describe('sweep budgets', () => {
  it('builds an inclusive evenly spaced grid', () => {
    expect(sweepBudgets(2, 5)).toEqual([0, 0.5, 1, 1.5, 2]);
  });
});
