// DOM wiring only; every decision lives in core.ts or on the server.

import {
  GridCell,
  GridStore,
  displayedFormat,
  formulaClipboardText,
  httpSuggest,
  parseColumnFile,
} from './core.js';

const SERVICE_URL =
  new URLSearchParams(location.search).get('service') ?? 'http://127.0.0.1:8000';

const PALETTE: Record<number, string> = {
  1: '#ffd54d',
  2: '#7fd18c',
  3: '#7fb8f0',
  4: '#f08f8f',
};

const store = new GridStore({ suggest: httpSuggest(SERVICE_URL) });
let brush = 1; // selected palette format; 0 erases

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function renderGrid(): void {
  const table = byId('grid');
  table.textContent = '';
  store.getState().cells.forEach((cell, i) => {
    const row = el('tr');
    row.appendChild(el('td', 'idx', String(i + 1)));
    const valueCell = el('td', 'val', String(cell.value));
    const fmt = displayedFormat(cell);
    if (fmt !== 0) valueCell.style.background = PALETTE[fmt] ?? '#ddd';
    if (cell.painted !== 0) valueCell.classList.add('painted');
    else if (cell.preview !== 0) valueCell.classList.add('previewed');
    valueCell.addEventListener('click', () => {
      // clicking an already-brushed cell erases it
      const next = cell.painted === brush ? 0 : brush;
      store.paint(i, next);
    });
    row.appendChild(valueCell);
    row.appendChild(el('td', `badge badge-${cell.type}`, cell.type));
    table.appendChild(row);
  });
}

function renderPalette(): void {
  const host = byId('palette');
  host.textContent = '';
  for (const id of [1, 2, 3, 4, 0]) {
    const btn = el('button', 'swatch', id === 0 ? 'erase' : `format ${id}`);
    if (id !== 0) btn.style.background = PALETTE[id] ?? '#ddd';
    if (id === brush) btn.classList.add('active');
    btn.addEventListener('click', () => {
      brush = id;
      renderPalette();
    });
    host.appendChild(btn);
  }
}

function renderSuggestions(): void {
  const state = store.getState();
  const host = byId('suggestions');
  host.textContent = '';
  byId('spinner').style.display = state.pending ? 'inline' : 'none';
  if (state.suggestions.length === 0) {
    host.appendChild(
      el('p', 'hint', 'Paint some cells to get rule suggestions.'),
    );
    return;
  }
  state.suggestions.forEach((sug, i) => {
    const card = el('div', 'card' + (state.selected === i ? ' selected' : ''));
    card.appendChild(el('pre', 'rule', sug.rule_text.trim()));
    card.appendChild(el('span', 'score', sug.score.toFixed(3)));
    const previewBtn = el(
      'button',
      '',
      state.selected === i ? 'hide preview' : 'preview',
    );
    previewBtn.addEventListener('click', () => {
      if (state.selected === i) store.clearPreview();
      else store.previewSuggestion(i);
    });
    card.appendChild(previewBtn);
    const acceptBtn = el('button', 'accept', 'accept');
    acceptBtn.addEventListener('click', () => store.acceptSuggestion(i));
    card.appendChild(acceptBtn);
    host.appendChild(card);
  });
}

function renderApplied(): void {
  const state = store.getState();
  const host = byId('applied');
  host.textContent = '';
  if (!state.applied) return;
  const card = el('div', 'card applied-card');
  card.appendChild(el('h3', '', 'Applied rule'));
  card.appendChild(el('pre', 'rule', state.applied.rule_text.trim()));
  card.appendChild(el('pre', 'formula', state.applied.excel_formula));
  const copy = el('button', '', 'copy formula');
  const formula = formulaClipboardText(state.applied.excel_formula);
  copy.addEventListener('click', () => {
    void navigator.clipboard.writeText(formula).then(() => {
      copy.textContent = 'copied';
      setTimeout(() => (copy.textContent = 'copy formula'), 1200);
    });
  });
  card.appendChild(copy);
  host.appendChild(card);
}

function renderBanner(): void {
  const banner = byId('banner');
  const text = store.getState().banner;
  banner.style.display = text ? 'block' : 'none';
  banner.textContent = text ?? '';
}

function renderAll(): void {
  renderGrid();
  renderSuggestions();
  renderApplied();
  renderBanner();
}

function toast(message: string): void {
  const node = byId('toast');
  node.textContent = message;
  node.style.display = 'block';
  setTimeout(() => (node.style.display = 'none'), 3000);
}

function demoCells(): GridCell[] {
  // a plausible revenue column: most values mid-range, a few spikes
  const cells: GridCell[] = [];
  for (let i = 0; i < 60; i++) {
    const spike = i % 9 === 4;
    const value = spike ? 900 + ((i * 37) % 90) : 40 + ((i * 13) % 220);
    cells.push({ value, type: 'number', painted: 0, preview: 0 });
  }
  return cells;
}

function wireChrome(): void {
  renderPalette();
  byId('demo').addEventListener('click', () => store.loadCells(demoCells()));
  const fileInput = byId('file') as HTMLInputElement;
  fileInput.addEventListener('change', () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    file.text().then(
      (text) => {
        try {
          store.loadCells(parseColumnFile(text));
        } catch (err) {
          toast(`could not load ${file.name}: ${(err as Error).message}`);
          store.loadCells([]);
        }
      },
      () => toast(`could not read ${file.name}`),
    );
  });
}

store.subscribe(renderAll);
wireChrome();
store.loadCells(demoCells());
