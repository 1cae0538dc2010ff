"""Cross-document path sampling over the context graph.

Every entity serves as a root. For each root we pick up to S starting
paragraphs, embed each as the fixed query, and expand breadth-first: at
each step the candidate pool is every (neighbor entity, paragraph) pair
not yet on the path, scored by dot-product similarity against the root
paragraph, and the top W candidates are kept. Leaves of the retained beam
become paths.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import ChunkStore
from .embedding import EmbeddingBackend, EmbeddingCache, Vector, embed_text, similarity
from .errors import BackendError
from .extraction import EntityRecord
from .graph import ContextGraph
from .jsonl import iter_jsonl, write_jsonl

HOP_POLICIES = ("one_hop", "two_hop", "mixed")


@dataclass
class Path:
    steps: list[tuple[str, str]]
    scores: list[float] = field(default_factory=list)
    path_id: str | None = None

    @property
    def root_entity(self) -> str:
        return self.steps[0][0]

    @property
    def root_chunk(self) -> str:
        return self.steps[0][1]

    @property
    def hop_count(self) -> int:
        return len(self.steps) - 1

    def entities(self) -> list[str]:
        return [e for e, _ in self.steps]

    def chunks(self) -> list[str]:
        return [c for _, c in self.steps]


@dataclass
class PathSet:
    paths: list[Path] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.paths)

    def by_root(self) -> dict[str, list[Path]]:
        grouped: dict[str, list[Path]] = {}
        for p in self.paths:
            grouped.setdefault(p.root_entity, []).append(p)
        return grouped


@dataclass(frozen=True)
class TraversalConfig:
    max_start_paragraphs: int = 3
    depth: int = 2
    beam_width: int = 2
    hop_policy: str = "one_hop"
    mixed_ratio: float = 0.5
    same_document_only: bool = False
    rng_seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if self.max_start_paragraphs < 1:
            problems.append("max_start_paragraphs must be >= 1")
        if self.depth < 1:
            problems.append("depth must be >= 1")
        if self.beam_width < 1:
            problems.append("beam_width must be >= 1")
        if self.hop_policy not in HOP_POLICIES:
            problems.append(f"hop_policy must be one of {HOP_POLICIES}")
        if self.hop_policy in ("two_hop", "mixed") and self.depth < 2:
            problems.append(f"hop_policy {self.hop_policy} requires depth >= 2")
        if self.hop_policy == "mixed" and not (0.0 < self.mixed_ratio < 1.0):
            problems.append("mixed_ratio must be in (0, 1)")
        return problems

    def expansion_depth(self) -> int:
        if self.hop_policy == "one_hop":
            return 1
        if self.hop_policy == "two_hop":
            return 2
        return self.depth

    def hop_for_budget(self) -> float:
        """Average hop length implied by the policy, for auto sizing."""
        if self.hop_policy == "one_hop":
            return 1.0
        if self.hop_policy == "two_hop":
            return 2.0
        return self.mixed_ratio * 1.0 + (1.0 - self.mixed_ratio) * self.depth


def select_start_paragraphs(
    root: EntityRecord, cfg: TraversalConfig, rng: random.Random
) -> list[str]:
    """All of the root's chunks if few, else a uniform sample of S."""
    if len(root.chunk_ids) <= cfg.max_start_paragraphs:
        return list(root.chunk_ids)
    return rng.sample(root.chunk_ids, cfg.max_start_paragraphs)


@dataclass
class _BeamNode:
    steps: list[tuple[str, str]]
    scores: list[float]
    visited: set[str]
    chunks_on_path: set[str]


class PathSampler:
    def __init__(
        self,
        graph: ContextGraph,
        entity_map: Sequence[EntityRecord],
        chunk_store: ChunkStore,
        cfg: TraversalConfig,
        backend: EmbeddingBackend,
        cache: EmbeddingCache | None = None,
    ):
        self.graph = graph
        self.entity_map = list(entity_map)
        self.entity_chunks = {rec.entity_id: list(rec.chunk_ids) for rec in entity_map}
        self.chunk_store = chunk_store
        self.cfg = cfg
        self.backend = backend
        self.cache = cache if cache is not None else EmbeddingCache()

    def _embed_chunk(self, chunk_id: str) -> Vector:
        return embed_text(self.chunk_store.get(chunk_id).text, self.backend, self.cache)

    def expand_step(
        self,
        current: tuple[str, str],
        root_vec: Vector,
        visited: set[str],
        chunks_on_path: set[str],
        doc_id: str | None = None,
        score_memo: dict[str, float] | None = None,
    ) -> list[tuple[str, str, float]]:
        """Top-W (entity, chunk, score) candidates for one beam node.

        The pool spans all unvisited neighbors' paragraphs; ties are broken
        by (entity_id, chunk_id) ascending. ``score_memo`` may be shared by
        every expansion under one (root, start): scores depend only on the
        start paragraph and the candidate chunk.
        """
        entity, _ = current
        pool: list[tuple[str, str, float]] = []
        for nb in self.graph.adjacency.get(entity, []):
            if nb in visited:
                continue
            for chunk_id in self.entity_chunks.get(nb, []):
                if chunk_id in chunks_on_path:
                    continue
                if doc_id is not None and self.chunk_store.get(chunk_id).doc_id != doc_id:
                    continue
                if score_memo is not None and chunk_id in score_memo:
                    score = score_memo[chunk_id]
                else:
                    score = similarity(root_vec, self._embed_chunk(chunk_id))
                    if score_memo is not None:
                        score_memo[chunk_id] = score
                pool.append((nb, chunk_id, score))
        pool.sort(key=lambda cand: (-cand[2], cand[0], cand[1]))
        return pool[: self.cfg.beam_width]

    def _expand_root(self, root: EntityRecord, start_chunk: str) -> list[Path]:
        cfg = self.cfg
        root_vec = self._embed_chunk(start_chunk)
        doc_id = self.chunk_store.get(start_chunk).doc_id if cfg.same_document_only else None
        depth = cfg.expansion_depth()
        emit_prefixes = cfg.hop_policy == "mixed"
        score_memo: dict[str, float] = {}

        emitted: list[Path] = []
        frontier = [
            _BeamNode(
                steps=[(root.entity_id, start_chunk)],
                scores=[],
                visited={root.entity_id},
                chunks_on_path={start_chunk},
            )
        ]
        for level in range(1, depth + 1):
            next_frontier: list[_BeamNode] = []
            for node in frontier:
                candidates = self.expand_step(
                    node.steps[-1], root_vec, node.visited, node.chunks_on_path, doc_id,
                    score_memo,
                )
                if not candidates:
                    # Dead end: the node is a leaf of the retained beam.
                    if len(node.steps) > 1:
                        emitted.append(Path(steps=list(node.steps), scores=list(node.scores)))
                    continue
                if emit_prefixes and len(node.steps) > 1:
                    emitted.append(Path(steps=list(node.steps), scores=list(node.scores)))
                for ent, chunk, score in candidates:
                    next_frontier.append(
                        _BeamNode(
                            steps=node.steps + [(ent, chunk)],
                            scores=node.scores + [score],
                            visited=node.visited | {ent},
                            chunks_on_path=node.chunks_on_path | {chunk},
                        )
                    )
            frontier = next_frontier
        for node in frontier:
            if len(node.steps) > 1:
                emitted.append(Path(steps=list(node.steps), scores=list(node.scores)))
        emitted.sort(key=lambda p: tuple(p.steps))
        return emitted

    def sample(self) -> PathSet:
        paths: list[Path] = []
        for root in sorted(self.entity_map, key=lambda r: r.entity_id):
            if not root.chunk_ids:
                continue
            # Per-root rng keeps results independent of root scheduling.
            rng = random.Random(f"{self.cfg.rng_seed}:{root.entity_id}")
            try:
                for start_chunk in sorted(select_start_paragraphs(root, self.cfg, rng)):
                    paths.extend(self._expand_root(root, start_chunk))
            except BackendError as e:
                raise BackendError(
                    f"while sampling root {root.entity_id}: {e}", retryable=e.retryable
                ) from e
        for i, p in enumerate(paths):
            p.path_id = f"p{i:06d}"
        return PathSet(paths=paths)


def sample_paths(
    graph: ContextGraph,
    entity_map: Sequence[EntityRecord],
    chunk_store: ChunkStore,
    cfg: TraversalConfig,
    backend: EmbeddingBackend,
    cache: EmbeddingCache | None = None,
) -> PathSet:
    return PathSampler(graph, entity_map, chunk_store, cfg, backend, cache).sample()


def save_paths(path, path_set: PathSet | Iterable[Path]) -> int:
    paths = path_set.paths if isinstance(path_set, PathSet) else list(path_set)
    return write_jsonl(
        path,
        (
            {
                "path_id": p.path_id,
                "root_entity": p.root_entity,
                "root_chunk": p.root_chunk,
                "steps": [list(s) for s in p.steps],
                "scores": p.scores,
                "hop_count": p.hop_count,
            }
            for p in paths
        ),
    )


def load_paths(path) -> PathSet:
    paths = [
        Path(
            steps=[tuple(s) for s in rec["steps"]],
            scores=[float(x) for x in rec.get("scores", [])],
            path_id=rec.get("path_id"),
        )
        for rec in iter_jsonl(path)
    ]
    return PathSet(paths=paths)
