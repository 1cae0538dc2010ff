from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphsynth.corpus import Chunk, ChunkStore
from graphsynth.extraction import EntityRecord


class FakeEmbedder:
    """Embedding backend with hand-set vectors, keyed by text."""

    def __init__(self, vectors: dict[str, tuple[float, ...]], dim: int | None = None):
        self.vectors = {k: tuple(float(x) for x in v) for k, v in vectors.items()}
        self.dim = dim or (len(next(iter(vectors.values()))) if vectors else 0)
        self.backend_id = "fake"

    def embed(self, text: str) -> tuple[float, ...]:
        return self.vectors[text]


def make_store(chunk_texts: dict[str, str], docs: dict[str, str] | None = None) -> ChunkStore:
    """chunk_id -> text; doc id inferred from the part before '#'."""
    chunks = []
    ordinals: dict[str, int] = {}
    for chunk_id, text in chunk_texts.items():
        doc_id = chunk_id.split("#")[0]
        ordinal = ordinals.get(doc_id, 0)
        ordinals[doc_id] = ordinal + 1
        chunks.append(Chunk(chunk_id=chunk_id, doc_id=doc_id, ordinal=ordinal, text=text))
    return ChunkStore(chunks, docs or {})


def make_entity_map(spec: dict[str, list[str]]) -> list[EntityRecord]:
    """entity_id -> chunk ids; canonical name equals the id."""
    return [
        EntityRecord(entity_id=e, canonical_name=e, aliases={e}, chunk_ids=list(chunks))
        for e, chunks in spec.items()
    ]


@pytest.fixture
def fake_embedder_factory():
    return FakeEmbedder


@pytest.fixture
def store_factory():
    return make_store


@pytest.fixture
def entity_map_factory():
    return make_entity_map
