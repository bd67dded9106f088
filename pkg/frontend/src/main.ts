// Bootstrap: wire the session to the DOM. All interaction handlers funnel
// through Session methods; rendering is a full innerHTML swap per change.

import { ApiClient } from './api.js';
import { Session } from './state.js';
import { render } from './view.js';

const API_BASE = (window as { RECOURSE_API?: string }).RECOURSE_API
  ?? 'http://127.0.0.1:8000';

export function mount(root: HTMLElement, base: string = API_BASE): Session {
  const api = new ApiClient(base);
  const session = new Session(api, (state) => {
    const active = document.activeElement as HTMLElement | null;
    const restore = active?.dataset
      ? { feature: active.dataset.feature, side: active.dataset.side, id: active.id }
      : null;
    root.innerHTML = render(state);
    if (restore) {
      let el: HTMLElement | null = null;
      if (restore.id) el = root.querySelector(`#${restore.id}`);
      else if (restore.feature && restore.side) {
        el = root.querySelector(
          `.cost-input[data-feature="${restore.feature}"][data-side="${restore.side}"]`,
        );
      } else if (restore.feature) {
        el = root.querySelector(`.value-input[data-feature="${restore.feature}"]`);
      }
      el?.focus();
    }
  });

  root.addEventListener('input', (ev) => {
    const el = ev.target as HTMLInputElement;
    if (el.id === 'budget-slider') {
      session.setBudget(Number(el.value));
    } else if (el.classList.contains('value-input')) {
      const value = Number(el.value);
      if (Number.isFinite(value)) session.setValue(el.dataset.feature!, value);
    } else if (el.classList.contains('cost-input')) {
      const value = Number(el.value);
      if (Number.isFinite(value) && value >= 0) {
        session.setCostOverride(
          el.dataset.feature!, el.dataset.side as 'up' | 'down', value,
        );
      }
    }
  });
  root.addEventListener('change', (ev) => {
    const el = ev.target as HTMLSelectElement;
    if (el.id === 'optimizer-select') {
      session.setOptimizer(el.value as 'pgd' | 'sensitivity');
    }
  });
  root.addEventListener('click', (ev) => {
    const el = ev.target as HTMLElement;
    if (el.id === 'retry-schema') void session.loadSchema();
  });

  void session.loadSchema();
  return session;
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  mount(document.getElementById('app')!);
}
