"""Paths to the packaged sample artifacts (schema, context document,
dataset, replay corpus, labels, keep list, refusal patterns)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

SAMPLE_SCHEMA = "sample_schema.yaml"
SAMPLE_CONTEXT = "business_context.md"
SAMPLE_DATASET = "sample_dataset.json"
SAMPLE_REPLAY = "sample_replay.jsonl"
SAMPLE_LABELS = "sample_labels.json"
NARROW_KEEP = "narrow_keep.txt"
REFUSAL_PATTERNS = "refusal_patterns.txt"


def data_path(name: str) -> Path:
    """Filesystem path of a packaged data file."""
    path = Path(str(resources.files("ctxsql").joinpath("data", name)))
    if not path.exists():
        raise FileNotFoundError(f"packaged data file {name!r} not found")
    return path
