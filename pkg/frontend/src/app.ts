// DOM wiring for the chat pane. One in-flight query at a time; every
// submission is an independent request against the selected phase corpus.

import { ApiClient, ApiError } from './api.js';
import { highlightSql } from './highlight.js';
import { ChatTurn } from './turns.js';
import type { OutcomeCategory, Phase, QueryResponse } from './types.js';
import { PHASES } from './types.js';

const PHASE_TITLES: Record<Phase, string> = {
  schema_only: 'DB Schema Only',
  schema_plus_context: 'DB Schema and Business Context',
  narrowed_schema: 'Narrowed Schema',
};

export class ChatApp {
  private readonly client: ApiClient;
  private readonly turnsPane: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly sendButton: HTMLButtonElement;
  private readonly phaseSelect: HTMLSelectElement;
  private readonly labelerInput: HTMLInputElement;
  private readonly healthLine: HTMLElement;
  private inFlight = false;

  constructor(apiBaseUrl: string, doc: Document = document) {
    this.client = new ApiClient(apiBaseUrl);
    this.turnsPane = doc.getElementById('turns')!;
    this.input = doc.getElementById('nlq-input') as HTMLInputElement;
    this.sendButton = doc.getElementById('send-button') as HTMLButtonElement;
    this.phaseSelect = doc.getElementById('phase-select') as HTMLSelectElement;
    this.labelerInput = doc.getElementById('labeler-input') as HTMLInputElement;
    this.healthLine = doc.getElementById('health-line')!;

    for (const phase of PHASES) {
      const option = doc.createElement('option');
      option.value = phase;
      option.textContent = PHASE_TITLES[phase];
      this.phaseSelect.appendChild(option);
    }
    this.sendButton.addEventListener('click', () => void this.submit());
    this.input.addEventListener('keydown', (event) => {
      if (event.key === 'Enter') void this.submit();
    });
    void this.showHealth();
  }

  private async showHealth(): Promise<void> {
    try {
      const health = await this.client.health();
      const chunks = Object.values(health.phases)
        .map((p) => p.chunks)
        .join('/');
      this.healthLine.textContent =
        `service ${health.status}, provider ${health.provider}, ` +
        `corpus chunks ${chunks}, ${health.feedback_count} labels stored`;
    } catch {
      this.healthLine.textContent = 'service unreachable';
    }
  }

  async submit(): Promise<void> {
    const nlq = this.input.value.trim();
    if (!nlq || this.inFlight) return;
    const phase = this.phaseSelect.value as Phase;
    const turn = new ChatTurn(nlq, phase);
    this.input.value = '';
    await this.runTurn(turn);
  }

  /** Execute (or re-execute after an error) one turn and render it. */
  private async runTurn(turn: ChatTurn): Promise<void> {
    this.inFlight = true;
    this.sendButton.disabled = true;
    const bubble = this.renderPending(turn);
    try {
      const result = await this.client.query({
        nlq: turn.nlq,
        phase: turn.phase,
        time_to_create: turn.timeToCreate,
      });
      turn.complete(result);
      this.renderResult(turn, bubble, result);
    } catch (error) {
      turn.fail(error instanceof Error ? error.message : String(error));
      this.renderError(turn, bubble);
    } finally {
      this.inFlight = false;
      this.sendButton.disabled = false;
    }
  }

  private renderPending(turn: ChatTurn): HTMLElement {
    const doc = this.turnsPane.ownerDocument;
    const bubble = doc.createElement('div');
    bubble.className = 'turn';
    const header = doc.createElement('div');
    header.className = 'turn-header';
    header.textContent = `${turn.nlq} [${PHASE_TITLES[turn.phase]}]`;
    const body = doc.createElement('div');
    body.className = 'turn-body';
    body.textContent = 'waiting for the service...';
    bubble.append(header, body);
    this.turnsPane.appendChild(bubble);
    return bubble;
  }

  private renderResult(
    turn: ChatTurn,
    bubble: HTMLElement,
    result: QueryResponse,
  ): void {
    const doc = bubble.ownerDocument;
    const body = bubble.querySelector('.turn-body')!;
    body.textContent = '';

    if (turn.isRefusal) {
      const notice = doc.createElement('div');
      notice.className = 'refusal-notice';
      notice.textContent = result.extraction.refusal_text ??
        'The model declined to produce SQL for this question.';
      body.appendChild(notice);
    } else if (turn.sqlText !== null) {
      const pre = doc.createElement('pre');
      pre.className = 'sql-block';
      const code = doc.createElement('code');
      code.innerHTML = highlightSql(turn.sqlText);
      pre.appendChild(code);
      body.appendChild(pre);
    } else {
      const notice = doc.createElement('div');
      notice.className = 'unparseable-notice';
      notice.textContent = 'The response contained no recognizable SQL.';
      body.appendChild(notice);
    }

    if (result.score !== null) {
      const badge = doc.createElement('span');
      badge.className = 'score-badge';
      badge.textContent = `complexity ${result.score}`;
      body.appendChild(badge);
    }

    if (result.validation && !result.validation.ok) {
      const warning = doc.createElement('div');
      warning.className = 'validation-warning';
      const tables = result.validation.unknown_tables.join(', ');
      const columns = result.validation.unknown_columns
        .map(([table, column]) => `${table}.${column}`)
        .join(', ');
      warning.textContent = 'not in the schema: ' +
        [tables, columns].filter(Boolean).join('; ');
      body.appendChild(warning);
    }

    if (result.retrieved.length > 0) {
      const panel = doc.createElement('details');
      panel.className = 'provenance';
      const summary = doc.createElement('summary');
      summary.textContent = `retrieved context (${result.retrieved.length})`;
      panel.appendChild(summary);
      for (const ref of result.retrieved) {
        const line = doc.createElement('div');
        line.className = 'chunk-ref';
        line.textContent =
          `${ref.chunk_id} (${ref.similarity.toFixed(3)}): ${ref.preview}`;
        panel.appendChild(line);
      }
      body.appendChild(panel);
    }

    this.renderLabelBar(turn, bubble);
  }

  private renderLabelBar(turn: ChatTurn, bubble: HTMLElement): void {
    const doc = bubble.ownerDocument;
    const existing = bubble.querySelector('.label-bar');
    if (existing) existing.remove();

    const bar = doc.createElement('div');
    bar.className = 'label-bar';
    if (turn.label) {
      const stored = doc.createElement('span');
      stored.className = `label-badge label-${turn.label.outcome}`;
      stored.textContent = `${turn.label.outcome} by ${turn.label.labeler}`;
      bar.appendChild(stored);
    }
    const allowed = turn.allowedOutcomes();
    for (const outcome of ['pass', 'fail', 'partial_pass'] as const) {
      const button = doc.createElement('button');
      button.textContent = outcome;
      button.disabled = !allowed.includes(outcome);
      button.addEventListener('click', () =>
        void this.recordOutcome(turn, bubble, outcome));
      bar.appendChild(button);
    }
    bubble.appendChild(bar);
  }

  private async recordOutcome(
    turn: ChatTurn,
    bubble: HTMLElement,
    outcome: OutcomeCategory,
  ): Promise<void> {
    const labeler = this.labelerInput.value.trim() || 'ui-user';
    try {
      const stored = await this.client.feedback({
        nlq: turn.nlq,
        phase: turn.phase,
        outcome,
        labeler,
      });
      turn.applyLabel({ outcome, labeler, seq: stored.seq });
      this.renderLabelBar(turn, bubble);
      void this.showHealth();
    } catch (error) {
      const note = bubble.ownerDocument.createElement('div');
      note.className = 'label-error';
      note.textContent = error instanceof ApiError
        ? `label rejected: ${error.detail}`
        : 'label failed: service unreachable';
      bubble.appendChild(note);
    }
  }

  private renderError(turn: ChatTurn, bubble: HTMLElement): void {
    const doc = bubble.ownerDocument;
    const body = bubble.querySelector('.turn-body')!;
    body.textContent = '';
    const notice = doc.createElement('div');
    notice.className = 'error-notice';
    notice.textContent = `request failed: ${turn.errorMessage}`;
    const retryButton = doc.createElement('button');
    retryButton.textContent = 'retry';
    retryButton.addEventListener('click', () => {
      turn.retry();
      bubble.remove();
      void this.runTurn(turn);
    });
    notice.appendChild(retryButton);
    body.appendChild(notice);
  }
}

declare global {
  interface Window {
    CTXSQL_API_BASE?: string;
  }
}

if (typeof document !== 'undefined' && document.getElementById('turns')) {
  new ChatApp(window.CTXSQL_API_BASE ?? 'http://127.0.0.1:8000');
}
