"""Secondary sampling with utilization-aware ordering and CC pairing.

The path set is partitioned into subsets. Within a subset, paths are
selected least-utilized-first (sum of the ledger counts of the entities on
the path) until chunk coverage reaches the target r or the subset hits the
standard length l. On an l-length stop with coverage short of r, the
relative shortfall dr = (r - r') / r sizes both the cut (paths beyond
floor((1 - dr) * l) return to the pool and their ledger contributions are
reversed) and the sparse-entity draw k = floor(dr * l), whose members are
randomly paired without replacement for contrastive generation, each side
carrying one randomly sampled chunk.

Entity utilization counts carry across subsets; chunk coverage resets per
subset. The selection loop here uses a lazy min-heap, but its output is
pinned, transcript-for-transcript, to a naive sort-and-pop reference
implementation in the test suite.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError
from .jsonl import iter_jsonl, write_jsonl
from .traversal import Path, PathSet


class UtilizationLedger:
    """Per-entity usage counts plus per-subset chunk-coverage state.

    Coverage uses a witness counter (chunk -> number of retained items
    containing it) so reversing a returned path removes a chunk from the
    covered set only when its last witness leaves.
    """

    def __init__(self, total_chunks: int):
        if total_chunks < 0:
            raise ValueError("total_chunks must be >= 0")
        self.total_chunks = total_chunks
        self.counts: Counter[str] = Counter()
        self._witness: Counter[str] = Counter()

    @property
    def covered_chunks(self) -> set[str]:
        return {c for c, n in self._witness.items() if n > 0}

    @property
    def coverage(self) -> float:
        if self.total_chunks == 0:
            return 0.0
        return len(self.covered_chunks) / self.total_chunks

    def reset_coverage(self) -> None:
        self._witness.clear()

    def add_steps(self, steps: Sequence[tuple[str, str]]) -> None:
        for entity, _ in steps:
            self.counts[entity] += 1
        for chunk in dict.fromkeys(c for _, c in steps):
            self._witness[chunk] += 1

    def remove_steps(self, steps: Sequence[tuple[str, str]]) -> None:
        for entity, _ in steps:
            self.counts[entity] -= 1
        for chunk in dict.fromkeys(c for _, c in steps):
            self._witness[chunk] -= 1


@dataclass(frozen=True)
class BalanceConfig:
    target_coverage: float = 1.0
    standard_length: int | str = "auto"
    rng_seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if not (0.0 < self.target_coverage <= 1.0):
            problems.append("target_coverage must be in (0, 1]")
        if self.standard_length != "auto":
            if not isinstance(self.standard_length, int) or self.standard_length < 1:
                problems.append("standard_length must be a positive integer or 'auto'")
        return problems


def auto_standard_length(total_chunks: int, hop: float) -> int:
    """floor(total_chunks / (hop + 1)); the default subset budget."""
    return math.floor(total_chunks / (hop + 1))


def resolve_standard_length(cfg: BalanceConfig, total_chunks: int, hop: float) -> int:
    if cfg.standard_length == "auto":
        return max(1, auto_standard_length(total_chunks, hop))
    return int(cfg.standard_length)


def path_utilization(path: Path, ledger: UtilizationLedger) -> int:
    """Sum of the ledger counts of every entity on the path."""
    return sum(ledger.counts[e] for e, _ in path.steps)


def cc_trigger_check(sample_count: int, cfg: BalanceConfig, ledger: UtilizationLedger) -> bool:
    """True iff the subset hit the standard length with coverage short of r."""
    if cfg.standard_length == "auto":
        raise ConfigurationError("standard_length must be resolved before trigger checks")
    return sample_count >= int(cfg.standard_length) and ledger.coverage < cfg.target_coverage


@dataclass
class CCPair:
    pair_id: str
    left: tuple[str, str]
    right: tuple[str, str]

    def steps(self) -> list[tuple[str, str]]:
        return [self.left, self.right]


@dataclass
class BalanceTrace:
    selection_order: list[str] = field(default_factory=list)
    returned: list[str] = field(default_factory=list)
    delta_r: float | None = None
    k: int | None = None
    cut: int | None = None
    sparse_entities: list[str] = field(default_factory=list)


@dataclass
class SubsetAllocation:
    subset_index: int
    cot_paths: list[Path]
    cc_pairs: list[CCPair]
    achieved_coverage: float
    trace: BalanceTrace | None = None


def _stable_order(paths: Sequence[Path]) -> dict[str, int]:
    order: dict[str, int] = {}
    for i, p in enumerate(paths):
        if p.path_id is None:
            raise ValueError("paths must carry a path_id before balancing")
        if p.path_id in order:
            raise ValueError(f"duplicate path_id '{p.path_id}'")
        order[p.path_id] = i
    return order


def balanced_sampling(
    remaining: Sequence[Path],
    cfg: BalanceConfig,
    ledger: UtilizationLedger,
    rng: random.Random,
    *,
    entity_to_chunks: Mapping[str, Sequence[str]],
    subset_index: int = 0,
    order: Mapping[str, int] | None = None,
) -> tuple[SubsetAllocation, list[Path], UtilizationLedger]:
    """Build one subset; returns (allocation, remaining', ledger).

    ``order`` fixes the stable tie-break rank of each path (its position in
    the original path set); by default the rank is the position in
    ``remaining``. The ledger is mutated in place and also returned.
    """
    remaining = list(remaining)
    if not remaining:
        raise ValueError("remaining path set is empty")
    if order is None:
        order = _stable_order(remaining)
    if cfg.standard_length == "auto":
        hop = max(p.hop_count for p in remaining)
        length = resolve_standard_length(cfg, ledger.total_chunks, hop)
    else:
        length = int(cfg.standard_length)
    target = cfg.target_coverage

    ledger.reset_coverage()
    trace = BalanceTrace()
    cot: list[Path] = []
    cc_pairs: list[CCPair] = []

    # Lazy min-heap on (utilization, original rank): counts only grow during
    # selection, so a stale entry re-enters with its refreshed key.
    heap: list[tuple[int, int, Path]] = [
        (path_utilization(p, ledger), order[p.path_id], p) for p in remaining
    ]
    heapq.heapify(heap)

    while heap:
        stored, rank, candidate = heapq.heappop(heap)
        current = path_utilization(candidate, ledger)
        if current != stored:
            heapq.heappush(heap, (current, rank, candidate))
            continue
        cot.append(candidate)
        trace.selection_order.append(candidate.path_id)
        ledger.add_steps(candidate.steps)
        if ledger.coverage >= target:
            break
        if len(cot) >= length:
            if length < 2:
                raise ConfigurationError(
                    "standard_length must be >= 2 when the CC branch triggers"
                )
            delta_r = (target - ledger.coverage) / target
            # The sparse-entity ranking snapshot precedes the cut reversal.
            ranking = sorted(entity_to_chunks, key=lambda e: (ledger.counts[e], e))
            k = math.floor(delta_r * length)
            cut = math.floor((1.0 - delta_r) * length)
            # cut == 0 would return every selected path and stall the outer
            # loop; keep at least one.
            cut = max(cut, 1)
            returned = cot[cut:]
            cot = cot[:cut]
            for p in returned:
                ledger.remove_steps(p.steps)
            trace.returned = [p.path_id for p in returned]
            trace.delta_r = delta_r
            trace.k = k
            trace.cut = cut
            sparse = ranking[:k]
            trace.sparse_entities = list(sparse)

            shuffled = list(sparse)
            rng.shuffle(shuffled)
            for i in range(0, len(shuffled) - 1, 2):
                ex, ey = shuffled[i], shuffled[i + 1]
                cx = rng.choice(list(entity_to_chunks[ex]))
                cy = rng.choice(list(entity_to_chunks[ey]))
                cc_pairs.append(
                    CCPair(
                        pair_id=f"cc-{subset_index}-{len(cc_pairs)}",
                        left=(ex, cx),
                        right=(ey, cy),
                    )
                )
            for pair in cc_pairs:
                ledger.add_steps(pair.steps())
            break

    retained_ids = {p.path_id for p in cot}
    remaining_after = [p for p in remaining if p.path_id not in retained_ids]
    allocation = SubsetAllocation(
        subset_index=subset_index,
        cot_paths=cot,
        cc_pairs=cc_pairs,
        achieved_coverage=ledger.coverage,
        trace=trace,
    )
    return allocation, remaining_after, ledger


def secondary_sampling(
    path_set: PathSet | Sequence[Path],
    cfg: BalanceConfig,
    *,
    entity_to_chunks: Mapping[str, Sequence[str]],
    total_chunks: int,
    rng: random.Random | None = None,
) -> list[SubsetAllocation]:
    """Partition the whole path set into subsets, carrying the ledger."""
    paths = list(path_set.paths if isinstance(path_set, PathSet) else path_set)
    if not paths:
        raise ValueError("path set is empty")
    for i, p in enumerate(paths):
        if p.path_id is None:
            p.path_id = f"p{i:06d}"
    order = _stable_order(paths)
    if cfg.standard_length == "auto":
        hop = max(p.hop_count for p in paths)
        cfg = BalanceConfig(
            target_coverage=cfg.target_coverage,
            standard_length=resolve_standard_length(cfg, total_chunks, hop),
            rng_seed=cfg.rng_seed,
        )
    rng = rng if rng is not None else random.Random(cfg.rng_seed)
    ledger = UtilizationLedger(total_chunks)

    subsets: list[SubsetAllocation] = []
    remaining = paths
    while remaining:
        allocation, remaining, ledger = balanced_sampling(
            remaining,
            cfg,
            ledger,
            rng,
            entity_to_chunks=entity_to_chunks,
            subset_index=len(subsets),
            order=order,
        )
        subsets.append(allocation)
    return subsets


def save_subsets(path, subsets: Iterable[SubsetAllocation]) -> int:
    return write_jsonl(
        path,
        (
            {
                "subset_index": s.subset_index,
                "cot_path_ids": [p.path_id for p in s.cot_paths],
                "cc_pairs": [
                    {"pair_id": pair.pair_id, "left": list(pair.left), "right": list(pair.right)}
                    for pair in s.cc_pairs
                ],
                "achieved_coverage": s.achieved_coverage,
            }
            for s in subsets
        ),
    )


def load_subsets(path, path_set: PathSet) -> list[SubsetAllocation]:
    by_id = {p.path_id: p for p in path_set.paths}
    subsets = []
    for rec in iter_jsonl(path):
        subsets.append(
            SubsetAllocation(
                subset_index=int(rec["subset_index"]),
                cot_paths=[by_id[pid] for pid in rec["cot_path_ids"]],
                cc_pairs=[
                    CCPair(
                        pair_id=p["pair_id"],
                        left=tuple(p["left"]),
                        right=tuple(p["right"]),
                    )
                    for p in rec["cc_pairs"]
                ],
                achieved_coverage=float(rec["achieved_coverage"]),
            )
        )
    return subsets
