from __future__ import annotations

import pytest

from refground.corpus import ingest_corpus
from refground.fixtures import write_mini_corpus
from refground.landmarks import LexicalVariantRegistry, build_indexes


@pytest.fixture(scope="session")
def mini_source_dir(tmp_path_factory):
    target = tmp_path_factory.mktemp("mini_corpus")
    write_mini_corpus(target)
    return target


@pytest.fixture(scope="session")
def mini_corpus(mini_source_dir):
    return ingest_corpus(mini_source_dir)


@pytest.fixture(scope="session")
def mini_registry(mini_source_dir):
    return LexicalVariantRegistry.from_jsonl(mini_source_dir / "registry.jsonl")


@pytest.fixture(scope="session")
def mini_indexes(mini_corpus, mini_registry):
    return build_indexes(mini_corpus, registry=mini_registry)
