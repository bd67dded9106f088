// Pure rendering: state in, HTML out. Every number shown on screen is read
// straight from a service response field (formatting only, no arithmetic on
// probabilities, deltas or costs).

import { FeatureInfo, RecommendationReport, SweepResponse } from './api.js';
import { SessionState } from './state.js';

function esc(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function prob(p: number): string {
  return (p * 100).toFixed(1) + '%';
}

export function renderErrorPanel(message: string): string {
  return `
  <div class="error-panel" data-test="schema-error">
    <h2>Could not load the model schema</h2>
    <p>${esc(message)}</p>
    <button id="retry-schema">Retry</button>
  </div>`;
}

function featureRow(f: FeatureInfo, state: SessionState): string {
  const err = state.fieldErrors[`body.values.${f.name}`] ?? '';
  const errHtml = err ? `<span class="field-error">${esc(err)}</span>` : '';
  if (f.role === 'direct') {
    const value = state.values[f.name];
    const ov = state.costOverrides[f.name] ?? {};
    return `
    <tr class="feature direct" data-feature="${esc(f.name)}">
      <td>${esc(f.name)}</td>
      <td><input type="number" step="any" class="value-input" data-feature="${esc(f.name)}"
           min="${f.min}" max="${f.max}" value="${value}"></td>
      <td class="costs">
        <label>+ <input type="number" step="any" min="0" class="cost-input" data-feature="${esc(f.name)}"
               data-side="up" value="${ov.up ?? f.cost_up}"></label>
        <label>&minus; <input type="number" step="any" min="0" class="cost-input" data-feature="${esc(f.name)}"
               data-side="down" value="${ov.down ?? f.cost_down}"></label>
      </td>
      <td><button class="lock-stub" disabled title="feature locking is not available yet">lock</button></td>
      <td>${errHtml}</td>
    </tr>`;
  }
  if (f.role === 'indirect') {
    const estimated = state.report?.estimated_indirect[f.name];
    const shown = estimated !== undefined ? estimated.toFixed(4) : '';
    return `
    <tr class="feature indirect" data-feature="${esc(f.name)}">
      <td>${esc(f.name)} <span class="badge" data-test="estimated-badge">estimated</span></td>
      <td><input type="text" class="readonly" data-feature="${esc(f.name)}" value="${shown}" readonly></td>
      <td class="costs"></td><td></td><td></td>
    </tr>`;
  }
  const value = state.values[f.name];
  return `
  <tr class="feature unchangeable" data-feature="${esc(f.name)}">
    <td>${esc(f.name)}</td>
    <td><input type="number" step="any" class="value-input" data-feature="${esc(f.name)}"
         value="${value}"></td>
    <td class="costs"></td><td></td><td>${errHtml}</td>
  </tr>`;
}

export function renderSchemaForm(state: SessionState): string {
  const schema = state.schema!;
  const rows = schema.features.map((f) => featureRow(f, state)).join('');
  return `
  <table class="features" data-test="feature-form">
    <thead><tr><th>feature</th><th>value</th><th>unit costs</th><th></th><th></th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

function deltaBars(report: RecommendationReport): string {
  const rows = Object.entries(report.deltas_raw).map(([name, raw]) => {
    const lo = report.effective_lower[name];
    const hi = report.effective_upper[name];
    const span = Math.max(hi - lo, 1e-12);
    const delta = report.deltas[name];
    const widthPct = Math.min(100, (Math.abs(delta) / span) * 100);
    const dir = delta > 0 ? 'increase' : delta < 0 ? 'decrease' : 'none';
    const normTip = `normalized delta ${delta}`;
    return `
    <div class="delta-row" data-feature="${esc(name)}" data-direction="${dir}">
      <span class="delta-name">${esc(name)}</span>
      <span class="delta-bar ${dir}" style="width: ${widthPct.toFixed(2)}%"></span>
      <span class="delta-value" title="${esc(normTip)}" data-test="delta">${raw.toFixed(4)}</span>
    </div>`;
  }).join('');
  return `<div class="deltas" data-test="delta-bars">${rows}</div>`;
}

function gauge(report: RecommendationReport): string {
  const pct = report.budget > 0
    ? Math.min(100, (report.cost_spent / report.budget) * 100)
    : 0;
  return `
  <div class="gauge" data-test="cost-gauge">
    <span class="gauge-fill" style="width: ${pct.toFixed(2)}%"></span>
    <span class="gauge-text">cost <b data-test="cost-spent">${report.cost_spent.toFixed(3)}</b>
      of budget <b data-test="budget">${report.budget}</b></span>
  </div>`;
}

export function renderSweepChart(sweep: SweepResponse, currentBudget: number): string {
  // geometry only: x positions by budget, y by the service's probabilities
  const w = 360;
  const h = 120;
  const pad = 10;
  const maxB = Math.max(...sweep.budgets, 1e-9);
  const pts = sweep.reports.map((r, i) => {
    const x = pad + (sweep.budgets[i] / maxB) * (w - 2 * pad);
    const y = h - pad - r.probability_after * (h - 2 * pad);
    return `${x.toFixed(1)},${y.toFixed(1)}`;
  });
  let marker = '';
  const idx = sweep.budgets.findIndex((b) => Math.abs(b - currentBudget) < 1e-9);
  if (idx >= 0) {
    const [mx, my] = pts[idx].split(',');
    const label = prob(sweep.reports[idx].probability_after);
    marker = `<circle cx="${mx}" cy="${my}" r="4" class="marker"></circle>` +
      `<text x="${mx}" y="${Number(my) - 8}" class="marker-label" data-test="marker-label">${label}</text>`;
  }
  return `
  <svg viewBox="0 0 ${w} ${h}" class="sweep" data-test="sweep-chart" data-points="${pts.length}">
    <polyline points="${pts.join(' ')}" fill="none" class="sweep-line"></polyline>
    ${marker}
  </svg>`;
}

function resultPanel(state: SessionState): string {
  const report = state.report;
  if (!report) return '<div class="result" data-test="result">no recommendation yet</div>';
  return `
  <div class="result" data-test="result">
    <div class="probabilities">
      <span>before <b data-test="prob-before">${prob(report.probability_before)}</b></span>
      <span>after <b data-test="prob-after">${prob(report.probability_after)}</b></span>
    </div>
    ${deltaBars(report)}
    ${gauge(report)}
    <div class="trace">iterations <b>${report.trace.iterations}</b>
      (${esc(report.trace.termination)})</div>
    ${state.sweep ? renderSweepChart(state.sweep, state.budget) : '<div class="sweep-placeholder">sweep loading</div>'}
  </div>`;
}

export function render(state: SessionState): string {
  if (state.schemaError !== null) return renderErrorPanel(state.schemaError);
  if (!state.schema) return '<div class="loading">loading schema</div>';
  const globalError = state.fieldErrors['_']
    ? `<div class="field-error global">${esc(state.fieldErrors['_'])}</div>` : '';
  const toast = state.toast
    ? `<div class="toast" data-test="toast">${esc(state.toast)}</div>` : '';
  return `
  ${toast}
  <header>
    <h1>What-if explorer</h1>
    <span class="model-tag">${esc(state.schema.model_type)} &middot; ${esc(state.schema.policy)}</span>
  </header>
  <section class="controls">
    <label>budget
      <input type="range" id="budget-slider" min="0" max="${state.maxBudget}" step="0.5"
             value="${state.budget}">
      <b data-test="budget-display">${state.budget}</b>
    </label>
    <label>optimizer
      <select id="optimizer-select">
        <option value="pgd"${state.optimizer === 'pgd' ? ' selected' : ''}>gradient</option>
        <option value="sensitivity"${state.optimizer === 'sensitivity' ? ' selected' : ''}>perturbation</option>
      </select>
    </label>
    ${state.busy ? '<span class="busy">working</span>' : ''}
  </section>
  ${globalError}
  <section class="layout">
    <div class="left">${renderSchemaForm(state)}</div>
    <div class="right">${resultPanel(state)}</div>
  </section>`;
}
