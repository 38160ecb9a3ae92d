// Chat turn state. Each turn is one independent request/response pair; the
// conversation display is purely visual and no context carries over.

import type {
  OutcomeCategory,
  Phase,
  QueryResponse,
} from './types.js';

export type TurnStatus = 'pending' | 'complete' | 'error';

export interface StoredLabel {
  outcome: OutcomeCategory;
  labeler: string;
  seq: number;
}

export class ChatTurn {
  status: TurnStatus = 'pending';
  result: QueryResponse | null = null;
  errorMessage: string | null = null;
  label: StoredLabel | null = null;

  constructor(
    readonly nlq: string,
    readonly phase: Phase,
    readonly timeToCreate: number = 0,
  ) {
    if (!nlq.trim()) throw new Error('nlq must be non-empty');
  }

  complete(result: QueryResponse): void {
    if (this.status !== 'pending') {
      throw new Error(`cannot complete a ${this.status} turn`);
    }
    this.status = 'complete';
    this.result = result;
  }

  fail(message: string): void {
    if (this.status !== 'pending') {
      throw new Error(`cannot fail a ${this.status} turn`);
    }
    this.status = 'error';
    this.errorMessage = message;
  }

  /** Reset an errored turn so the same request can be retried. */
  retry(): void {
    if (this.status !== 'error') throw new Error('only errored turns retry');
    this.status = 'pending';
    this.errorMessage = null;
  }

  /** Raw SQL exactly as the service returned it, or null. */
  get sqlText(): string | null {
    return this.result?.extraction.sql_text ?? null;
  }

  get isRefusal(): boolean {
    return this.result?.extraction.kind === 'refusal';
  }

  /**
   * Outcomes the user may assign. Nothing before completion; a refusal is
   * by definition not an executable query, so it can never be a pass.
   */
  allowedOutcomes(): OutcomeCategory[] {
    if (this.status !== 'complete') return [];
    if (this.isRefusal) return ['fail', 'partial_pass'];
    return ['pass', 'fail', 'partial_pass'];
  }

  /** Record the stored label; the newest label always wins the display. */
  applyLabel(label: StoredLabel): void {
    if (this.status !== 'complete') {
      throw new Error('outcome assignable only after a complete result');
    }
    if (!this.allowedOutcomes().includes(label.outcome)) {
      throw new Error(`outcome ${label.outcome} not allowed for this turn`);
    }
    this.label = label;
  }
}
