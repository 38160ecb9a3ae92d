"""ctxsql: an NLQ-to-SQL workbench with retrieval-augmented prompting,
SQL complexity scoring, schema validation, and a three-phase evaluation
harness with exact categorical statistics."""

from .catalog import (CatalogError, ColumnDef, ForeignKey, NarrowResult,
                      SchemaCatalog, SchemaParseError, TableDef, dump_catalog,
                      load_catalog, load_catalog_file, narrow,
                      render_schema_text)
from .contextstore import (Chunk, LocalTrigramEmbedder, RemoteEmbedder,
                           VectorIndex, build_index, split_text)
from .evalharness import (EvalReport, NlqCase, Outcome, apply_labels,
                          compute_banding, evaluate, export_boxplot_data,
                          load_dataset, load_labels, render_report_csv,
                          render_report_text, run_phase, summarize)
from .gateway import (DEFAULT_PERSONA, ExtractionResult, LlmResponse,
                      PromptBundle, RemoteChatProvider, ReplayProvider,
                      assemble_prompt, detect_refusal, extract_sql)
from .pipeline import (PHASES, PhaseEnvironment, QueryRequest, QueryResult,
                       answer_nlq, build_environments_from_files,
                       build_phase_environment)
from .sqlanalysis import (SqlFeatures, ValidationReport, categorize_scores,
                          complexity_score, extract_features,
                          five_number_summary, nearest_rank,
                          validate_against_schema)
from .stats import FisherResult, fisher_exact_2x2, fisher_exact_rxc

__version__ = "0.1.0"
