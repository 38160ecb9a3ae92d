"""Shared fixtures built over the packaged sample artifacts."""

import pytest

from ctxsql import (
    ReplayProvider,
    build_environments_from_files,
    evaluate,
    load_dataset,
    load_labels,
)
from ctxsql.resources import (
    NARROW_KEEP,
    SAMPLE_CONTEXT,
    SAMPLE_DATASET,
    SAMPLE_LABELS,
    SAMPLE_REPLAY,
    SAMPLE_SCHEMA,
    data_path,
)


@pytest.fixture(scope="session")
def replay_provider():
    return ReplayProvider.from_file(data_path(SAMPLE_REPLAY))


@pytest.fixture(scope="session")
def environments(replay_provider):
    # One shared embedder across phases; building the index is the slow part.
    return build_environments_from_files(
        replay_provider,
        data_path(SAMPLE_SCHEMA),
        context_path=data_path(SAMPLE_CONTEXT),
        keep_path=data_path(NARROW_KEEP),
    )


@pytest.fixture(scope="session")
def dataset():
    return load_dataset(data_path(SAMPLE_DATASET))


@pytest.fixture(scope="session")
def expert_labels():
    return load_labels(data_path(SAMPLE_LABELS))


@pytest.fixture(scope="session")
def sample_report(dataset, environments, expert_labels):
    return evaluate(dataset, environments, seed=7, labels=expert_labels)
