"""Candidate link discovery between two KBs by name similarity.

Entity names are compared by normalized Levenshtein distance; matched
pairs with equal entity types become full links, all other matches
partial links.  Names are matched as-is (no case folding or stripping).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .kb import EntityRef, Kb, Link, LinkSet, LinkType


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character edits turning ``a`` into ``b``.

    Computed over Unicode code points with the classic two-row dynamic
    program; insertions, deletions and substitutions all cost 1.
    """
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def _levenshtein_within(a: str, b: str, cap: int) -> int | None:
    """Levenshtein distance if it is <= cap, else None (banded early exit)."""
    if len(a) < len(b):
        a, b = b, a
    if len(a) - len(b) > cap:
        return None
    if not b:
        return len(a) if len(a) <= cap else None
    big = cap + 1
    prev = [j if j <= cap else big for j in range(len(b) + 1)]
    for i, ca in enumerate(a, start=1):
        cur = [i if i <= cap else big] + [big] * len(b)
        lo = max(1, i - cap)
        hi = min(len(b), i + cap)
        for j in range(lo, hi + 1):
            cost = 0 if ca == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        if min(cur[lo:hi + 1]) > cap:
            return None
        prev = cur
    return prev[-1] if prev[-1] <= cap else None


def similarity(a: str, b: str) -> float:
    """Normalized name similarity: ``1 - distance / max(len)``, in [0, 1]."""
    m = max(len(a), len(b))
    if m == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / m


@dataclass
class MinerConfig:
    similarity_threshold: float = 0.85
    max_pairs_per_entity: int = 5
    blocking: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must lie in [0, 1]")
        if self.max_pairs_per_entity < 1:
            raise ValueError("max_pairs_per_entity must be positive")


def _candidate_similarity(a: str, b: str, threshold: float) -> float | None:
    m = max(len(a), len(b))
    if m == 0:
        return 1.0
    cap = int((1.0 - threshold) * m + 1e-9)
    d = _levenshtein_within(a, b, cap)
    if d is None:
        return None
    return 1.0 - d / m


def mine_links(kb1: Kb, kb2: Kb, cfg: MinerConfig | None = None) -> LinkSet:
    """Mine cross-KB links between similarly named entities.

    Emits every cross-KB pair with similarity >= threshold, typed FULL
    when the entity types match and PARTIAL otherwise.  Per-entity
    candidates are capped at ``max_pairs_per_entity`` on both endpoints,
    keeping the highest-similarity pairs with ties broken by
    ``(kb1 local_id, kb2 local_id)``.

    Blocking restricts comparisons to name pairs sharing a first
    character or of length within +-3; at thresholds >= 0.85 this loses
    nothing for names up to 20 characters (distance >= length gap).
    ``cfg.blocking=False`` forces the exact all-pairs scan.
    """
    cfg = cfg or MinerConfig()
    if not kb1.has_entity_types() or not kb2.has_entity_types():
        raise ValueError("link mining requires entity types on both KBs")

    by_first: dict[str, list[int]] = defaultdict(list)
    by_len: dict[int, list[int]] = defaultdict(list)
    for j, (name, _) in enumerate(kb2.entities):
        if name:
            by_first[name[0]].append(j)
        by_len[len(name)].append(j)

    scored: list[tuple[float, int, int]] = []
    for i, (name1, _) in enumerate(kb1.entities):
        if cfg.blocking:
            cand: set[int] = set()
            if name1:
                cand.update(by_first.get(name1[0], ()))
            for ln in range(max(0, len(name1) - 3), len(name1) + 4):
                cand.update(by_len.get(ln, ()))
            candidates = sorted(cand)
        else:
            candidates = range(kb2.n_entities)
        for j in candidates:
            sim = _candidate_similarity(name1, kb2.entities[j][0], cfg.similarity_threshold)
            if sim is not None and sim >= cfg.similarity_threshold:
                scored.append((sim, i, j))

    # rank within each endpoint; a pair survives only if it makes the cap
    # on both sides
    order = sorted(scored, key=lambda t: (-t[0], t[1], t[2]))
    kept1: dict[int, int] = defaultdict(int)
    kept2: dict[int, int] = defaultdict(int)
    kept: list[tuple[float, int, int]] = []
    for sim, i, j in order:
        if kept1[i] < cfg.max_pairs_per_entity and kept2[j] < cfg.max_pairs_per_entity:
            kept.append((sim, i, j))
            kept1[i] += 1
            kept2[j] += 1

    links = []
    for _, i, j in kept:
        t = LinkType.FULL if kb1.entity_type(i) == kb2.entity_type(j) else LinkType.PARTIAL
        links.append(Link(EntityRef(kb1.kb_id, i), EntityRef(kb2.kb_id, j), t))
    return LinkSet(links)
