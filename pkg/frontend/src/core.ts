// Grid state and service client, DOM-free so the whole loop is testable
// in Node. The service is the only rule evaluator: previews render its
// per_cell_formats verbatim, the client never re-executes a rule.

export type CellTypeName = 'number' | 'text' | 'date';

export interface GridCell {
  value: number | string;
  type: CellTypeName;
  /** User-painted format id, 0 for none. Never touched by previews. */
  painted: number;
  /** Overlay from the selected suggestion, 0 for none. */
  preview: number;
}

export interface Suggestion {
  rule_text: string;
  excel_formula: string;
  score: number;
  per_cell_formats: number[];
}

export interface AppliedRule {
  rule_text: string;
  excel_formula: string;
}

export interface SuggestRequest {
  column: { value: number | string; type: CellTypeName; format: number }[];
  observed: number[];
  top_k?: number;
}

export interface SuggestResponse {
  rules: Suggestion[];
  diagnostic: string | null;
}

export type SuggestFn = (body: SuggestRequest) => Promise<SuggestResponse>;
export type ScheduleFn = (fn: () => void, ms: number) => unknown;
export type CancelFn = (handle: unknown) => void;

export interface GridState {
  cells: GridCell[];
  suggestions: Suggestion[];
  /** Index into suggestions currently previewed, -1 for none. */
  selected: number;
  applied: AppliedRule | null;
  /** Last service error, or null. Errors never clear grid state. */
  banner: string | null;
  /** True while a suggest round is debouncing or in flight. */
  pending: boolean;
}

export interface StoreOptions {
  suggest: SuggestFn;
  debounceMs?: number;
  schedule?: ScheduleFn;
  cancel?: CancelFn;
  topK?: number;
}

/** What a cell should be drawn as: paint beats overlay. */
export function displayedFormat(cell: GridCell): number {
  return cell.painted !== 0 ? cell.painted : cell.preview;
}

/** The bare `=...` lines of a service formula, prefix labels stripped. */
export function formulaClipboardText(excelFormula: string): string {
  return excelFormula
    .split('\n')
    .map((line) => line.replace(/^format \d+: /, ''))
    .join('\n');
}

export class GridStore {
  private state: GridState = {
    cells: [],
    suggestions: [],
    selected: -1,
    applied: null,
    banner: null,
    pending: false,
  };
  private readonly suggest: SuggestFn;
  private readonly debounceMs: number;
  private readonly schedule: ScheduleFn;
  private readonly cancel: CancelFn;
  private readonly topK: number | undefined;
  private listeners: (() => void)[] = [];
  private idleWaiters: (() => void)[] = [];
  private timer: unknown = null;
  private seq = 0; // id of the newest request sent; stale responses lose

  constructor(opts: StoreOptions) {
    this.suggest = opts.suggest;
    this.debounceMs = opts.debounceMs ?? 300;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.cancel = opts.cancel ?? ((h) => clearTimeout(h as number));
    this.topK = opts.topK;
  }

  getState(): GridState {
    return this.state;
  }

  subscribe(fn: () => void): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((f) => f !== fn);
    };
  }

  /** Resolves once nothing is debouncing or in flight. */
  waitIdle(): Promise<void> {
    if (!this.state.pending && this.timer === null) return Promise.resolve();
    return new Promise((resolve) => this.idleWaiters.push(resolve));
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
    if (!this.state.pending && this.timer === null) {
      const waiters = this.idleWaiters;
      this.idleWaiters = [];
      for (const fn of waiters) fn();
    }
  }

  loadCells(cells: GridCell[]): void {
    if (this.timer !== null) {
      this.cancel(this.timer);
      this.timer = null;
    }
    this.seq += 1; // orphan any in-flight response
    this.state = {
      cells,
      suggestions: [],
      selected: -1,
      applied: null,
      banner: null,
      pending: false,
    };
    this.emit();
  }

  observedIndices(): number[] {
    const out: number[] = [];
    this.state.cells.forEach((c, i) => {
      if (c.painted !== 0) out.push(i);
    });
    return out;
  }

  paint(index: number, formatId: number): void {
    const cell = this.state.cells[index];
    if (!cell) throw new Error(`no cell at index ${index}`);
    cell.painted = formatId;
    this.clearPreviewCells();
    this.state.selected = -1;
    this.scheduleSuggest();
    this.emit();
  }

  private clearPreviewCells(): void {
    for (const c of this.state.cells) c.preview = 0;
  }

  private scheduleSuggest(): void {
    if (this.timer !== null) this.cancel(this.timer);
    if (this.observedIndices().length === 0) {
      // nothing painted: clear the panel locally, never call out
      this.timer = null;
      this.seq += 1;
      this.state.suggestions = [];
      this.state.selected = -1;
      this.state.pending = false;
      return;
    }
    this.state.pending = true;
    this.timer = this.schedule(() => {
      this.timer = null;
      void this.send();
    }, this.debounceMs);
  }

  private async send(): Promise<void> {
    this.seq += 1;
    const mySeq = this.seq;
    const body: SuggestRequest = {
      column: this.state.cells.map((c) => ({
        value: c.value,
        type: c.type,
        format: c.painted,
      })),
      observed: this.observedIndices(),
    };
    if (this.topK !== undefined) body.top_k = this.topK;
    try {
      const res = await this.suggest(body);
      if (mySeq !== this.seq) return; // superseded while in flight
      this.state.suggestions = res.rules;
      this.state.selected = -1;
      this.clearPreviewCells();
      this.state.banner = null;
      this.state.pending = false;
      this.emit();
    } catch (err) {
      if (mySeq !== this.seq) return;
      this.state.banner = err instanceof Error ? err.message : String(err);
      this.state.pending = false;
      this.emit();
    }
  }

  previewSuggestion(i: number): void {
    const sug = this.state.suggestions[i];
    if (!sug) throw new Error(`no suggestion ${i}`);
    this.state.selected = i;
    sug.per_cell_formats.forEach((f, j) => {
      const cell = this.state.cells[j];
      if (cell) cell.preview = f;
    });
    this.emit();
  }

  clearPreview(): void {
    this.state.selected = -1;
    this.clearPreviewCells();
    this.emit();
  }

  acceptSuggestion(i: number): void {
    const sug = this.state.suggestions[i];
    if (!sug) throw new Error(`no suggestion ${i}`);
    sug.per_cell_formats.forEach((f, j) => {
      const cell = this.state.cells[j];
      if (cell) cell.painted = f;
    });
    this.clearPreviewCells();
    this.state.selected = -1;
    this.state.applied = {
      rule_text: sug.rule_text,
      excel_formula: sug.excel_formula,
    };
    this.emit();
  }
}

/** POST JSON against the service; non-2xx becomes an Error with detail. */
export function httpSuggest(
  baseUrl: string,
  fetchFn: typeof fetch = fetch,
): SuggestFn {
  return async (body) => {
    let res: Response;
    try {
      res = await fetchFn(`${baseUrl}/v1/suggest`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new Error(`service unreachable: ${String(err)}`);
    }
    if (!res.ok) {
      let detail = `${res.status}`;
      try {
        const obj = (await res.json()) as { detail?: string };
        if (obj.detail) detail = `${res.status}: ${obj.detail}`;
      } catch {
        /* keep bare status */
      }
      throw new Error(`suggest failed (${detail})`);
    }
    return (await res.json()) as SuggestResponse;
  };
}

// ---------------------------------------------------------------------------
// column loading

const NUMBER_RE = /^-?\d+(\.\d+)?([eE][+-]?\d+)?$/;
const DATE_RE = /^\d{4}-\d{2}-\d{2}$/;

function inferCell(raw: string): GridCell {
  const text = raw.trim();
  if (NUMBER_RE.test(text)) {
    return { value: parseFloat(text), type: 'number', painted: 0, preview: 0 };
  }
  if (DATE_RE.test(text)) {
    return { value: text, type: 'date', painted: 0, preview: 0 };
  }
  return { value: text, type: 'text', painted: 0, preview: 0 };
}

/** One value per line; only the first comma-separated field is used. */
export function parseCsv(text: string): GridCell[] {
  const cells = text
    .split(/\r?\n/)
    .map((line) => line.split(',')[0] ?? '')
    .filter((field) => field.trim() !== '')
    .map(inferCell);
  if (cells.length === 0) throw new Error('no values found');
  return cells;
}

const TYPE_NAMES: CellTypeName[] = ['number', 'text', 'date'];

/**
 * Task-file JSON: {column: [{value, type, format}], observed?: [int]}.
 * Only cells in the observed set come back pre-painted; other formats in
 * the file are withheld so the loop starts from what a user would see.
 */
export function parseTaskJson(text: string): GridCell[] {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    throw new Error('not valid JSON');
  }
  const record = obj as { column?: unknown; observed?: unknown };
  if (!Array.isArray(record.column) || record.column.length === 0) {
    throw new Error("missing 'column' array");
  }
  const observed = new Set<number>(
    Array.isArray(record.observed) ? record.observed.map(Number) : [],
  );
  return record.column.map((raw, i) => {
    const c = raw as { value?: unknown; type?: unknown; format?: unknown };
    const type = c.type as CellTypeName;
    if (!TYPE_NAMES.includes(type)) {
      throw new Error(`cell ${i}: bad type ${JSON.stringify(c.type)}`);
    }
    if (typeof c.value !== 'number' && typeof c.value !== 'string') {
      throw new Error(`cell ${i}: bad value`);
    }
    const format = typeof c.format === 'number' ? c.format : 0;
    return {
      value: c.value,
      type,
      painted: observed.has(i) ? format : 0,
      preview: 0,
    };
  });
}

/** Dispatch on content: JSON object -> task file, anything else -> CSV. */
export function parseColumnFile(text: string): GridCell[] {
  if (text.trimStart().startsWith('{')) return parseTaskJson(text);
  return parseCsv(text);
}
