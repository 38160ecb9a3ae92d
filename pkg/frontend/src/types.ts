// Payload shapes of the ctxsql HTTP service. The client never reshapes
// these; in particular extraction.sql_text is kept byte-identical so that
// reviewers label exactly the artifact the service produced.

export type Phase = 'schema_only' | 'schema_plus_context' | 'narrowed_schema';

export const PHASES: readonly Phase[] = [
  'schema_only',
  'schema_plus_context',
  'narrowed_schema',
];

export type OutcomeCategory = 'pass' | 'fail' | 'partial_pass';

export interface QueryRequest {
  nlq: string;
  phase: Phase;
  time_to_create?: number;
  nlq_id?: string;
}

export interface Extraction {
  kind: 'sql' | 'refusal' | 'unparseable';
  sql_text?: string | null;
  refusal_text?: string | null;
}

export interface RetrievedRef {
  chunk_id: string;
  similarity: number;
  preview: string;
}

export interface ValidationReport {
  ok: boolean;
  unknown_tables: string[];
  unknown_columns: [string, string][];
  notes: string[];
}

export interface SqlFeatures {
  number_of_tables: number;
  number_of_joins: number;
  number_of_where_clauses: number;
  has_group_by: boolean;
  has_order: boolean;
  has_aggregation: boolean;
}

export interface QueryResponse {
  extraction: Extraction;
  retrieved: RetrievedRef[];
  validation: ValidationReport | null;
  features: SqlFeatures | null;
  score: number | null;
  run_metadata: Record<string, unknown>;
}

export interface FeedbackRequest {
  id?: string;
  nlq?: string;
  phase: Phase;
  outcome: OutcomeCategory;
  labeler: string;
  rationale?: string;
}

export interface FeedbackResponse {
  stored_id: string;
  seq: number;
}

export interface PhaseHealth {
  corpus_hash: string;
  chunks: number;
}

export interface HealthResponse {
  status: string;
  provider: string;
  phases: Record<Phase, PhaseHealth>;
  feedback_count: number;
}
