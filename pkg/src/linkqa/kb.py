"""Triple stores for multiple knowledge bases and the cross-KB link set.

Each knowledge base keeps its own entity and relation namespace; entities
are identified by ``(kb_id, local_id)``, never by name.  Cross-KB identity
is expressed separately through :class:`LinkSet`, where every link is
either *full* (same real-world object) or *partial* (different aspects of
one concept, treated as identical only in casual questions).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Optional


class LinkType(IntEnum):
    FULL = 0
    PARTIAL = 1

    @classmethod
    def from_string(cls, s: str) -> "LinkType":
        try:
            return cls[s.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown link type {s!r} (expected 'full' or 'partial')") from None

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, order=True)
class EntityRef:
    """An entity identified by its KB namespace and local index."""

    kb_id: int
    local_id: int

    def __str__(self) -> str:
        return f"{self.kb_id}:{self.local_id}"

    @classmethod
    def parse(cls, s: str) -> "EntityRef":
        kb, _, local = s.partition(":")
        return cls(int(kb), int(local))


@dataclass(frozen=True, order=True)
class Triple:
    subject: EntityRef
    relation: int
    object: EntityRef

    def __post_init__(self) -> None:
        if self.subject.kb_id != self.object.kb_id:
            raise ValueError(
                f"triple crosses KBs: subject {self.subject} vs object {self.object}"
            )


@dataclass(frozen=True, order=True)
class Link:
    e1: EntityRef
    e2: EntityRef
    t: LinkType

    def __post_init__(self) -> None:
        if self.e1.kb_id == self.e2.kb_id:
            raise ValueError(f"link endpoints share kb_id {self.e1.kb_id}")


class KbFormatError(ValueError):
    """A KB, type, or link file failed to parse."""


class Kb:
    """An immutable, fully indexed triple store for one KB namespace.

    ``entities`` is a list of ``(name, etype)`` pairs; relations a list of
    names.  Construction validates index bounds and builds forward and
    inverse adjacency, after which the store is read-only.
    """

    def __init__(
        self,
        kb_id: int,
        entities: Iterable[tuple[str, str]],
        relations: Iterable[str],
        triples: Iterable[Triple],
    ) -> None:
        self.kb_id = int(kb_id)
        self.entities: list[tuple[str, str]] = [(str(n), str(t)) for n, t in entities]
        self.relations: list[str] = [str(r) for r in relations]
        self.triples: frozenset[Triple] = frozenset(triples)

        for tr in self.triples:
            if tr.subject.kb_id != self.kb_id:
                raise ValueError(f"triple {tr} does not belong to KB {self.kb_id}")
            if not (0 <= tr.subject.local_id < len(self.entities)):
                raise ValueError(f"subject out of range in {tr}")
            if not (0 <= tr.object.local_id < len(self.entities)):
                raise ValueError(f"object out of range in {tr}")
            if not (0 <= tr.relation < len(self.relations)):
                raise ValueError(f"relation out of range in {tr}")

        fwd: dict[tuple[int, int], list[int]] = defaultdict(list)
        inv: dict[tuple[int, int], list[int]] = defaultdict(list)
        out_e: dict[int, list[tuple[int, int]]] = defaultdict(list)
        in_e: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for tr in sorted(self.triples):
            fwd[tr.subject.local_id, tr.relation].append(tr.object.local_id)
            inv[tr.object.local_id, tr.relation].append(tr.subject.local_id)
            out_e[tr.subject.local_id].append((tr.relation, tr.object.local_id))
            in_e[tr.object.local_id].append((tr.relation, tr.subject.local_id))
        self._fwd = {k: tuple(v) for k, v in fwd.items()}
        self._inv = {k: tuple(v) for k, v in inv.items()}
        self._out_edges = {k: tuple(v) for k, v in out_e.items()}
        self._in_edges = {k: tuple(v) for k, v in in_e.items()}

        self._name_to_id: dict[str, int] = {}
        self._name_count: dict[str, int] = defaultdict(int)
        for i, (name, _) in enumerate(self.entities):
            self._name_to_id.setdefault(name, i)
            self._name_count[name] += 1

    # -- basic accessors -------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def ref(self, local_id: int) -> EntityRef:
        if not (0 <= local_id < self.n_entities):
            raise ValueError(f"entity {local_id} out of range for KB {self.kb_id}")
        return EntityRef(self.kb_id, local_id)

    def entity_name(self, local_id: int) -> str:
        return self.entities[local_id][0]

    def entity_type(self, local_id: int) -> str:
        return self.entities[local_id][1]

    def entity_id(self, name: str) -> int:
        """Resolve an entity name; raises on unknown or ambiguous names."""
        if name not in self._name_to_id:
            raise KeyError(f"unknown entity {name!r} in KB {self.kb_id}")
        if self._name_count[name] > 1:
            raise ValueError(f"ambiguous entity name {name!r} in KB {self.kb_id}")
        return self._name_to_id[name]

    def has_entity_types(self) -> bool:
        return any(t for _, t in self.entities)

    def has_triple(self, subject: int, relation: int, object_: int) -> bool:
        return object_ in self._fwd.get((subject, relation), ())

    # -- graph operations ------------------------------------------------

    def objects_of(self, subject: int, relation: int) -> tuple[int, ...]:
        return self._fwd.get((subject, relation), ())

    def subjects_of(self, object_: int, relation: int) -> tuple[int, ...]:
        return self._inv.get((object_, relation), ())

    def out_edges(self, subject: int) -> tuple[tuple[int, int], ...]:
        """All (relation, object) pairs leaving an entity."""
        return self._out_edges.get(subject, ())

    def in_edges(self, object_: int) -> tuple[tuple[int, int], ...]:
        """All (relation, subject) pairs entering an entity."""
        return self._in_edges.get(object_, ())

    def neighbors(self, subject: EntityRef, relation: int) -> set[EntityRef]:
        """All objects ``o`` with ``<subject, relation, o>`` in this KB."""
        if subject.kb_id != self.kb_id:
            raise ValueError(f"entity {subject} does not belong to KB {self.kb_id}")
        return {EntityRef(self.kb_id, o) for o in self.objects_of(subject.local_id, relation)}

    def inverse_neighbors(self, object_: EntityRef, relation: int) -> set[EntityRef]:
        if object_.kb_id != self.kb_id:
            raise ValueError(f"entity {object_} does not belong to KB {self.kb_id}")
        return {EntityRef(self.kb_id, s) for s in self.subjects_of(object_.local_id, relation)}

    def triple_rows(self) -> list[tuple[int, int, int]]:
        """Triples as sorted ``(subject, relation, object)`` local-id rows."""
        return sorted(
            (t.subject.local_id, t.relation, t.object.local_id) for t in self.triples
        )

    def __len__(self) -> int:
        return len(self.triples)

    def __repr__(self) -> str:
        return (
            f"Kb(kb_id={self.kb_id}, entities={self.n_entities}, "
            f"relations={self.n_relations}, triples={len(self.triples)})"
        )


class KbRegistry:
    """The set of loaded KBs, keyed by kb_id."""

    def __init__(self, kbs: Iterable[Kb] = ()) -> None:
        self._kbs: dict[int, Kb] = {}
        for kb in kbs:
            self.add(kb)

    def add(self, kb: Kb) -> None:
        if kb.kb_id in self._kbs:
            raise ValueError(f"KB {kb.kb_id} already registered")
        self._kbs[kb.kb_id] = kb

    def __getitem__(self, kb_id: int) -> Kb:
        return self._kbs[kb_id]

    def __contains__(self, kb_id: int) -> bool:
        return kb_id in self._kbs

    def __iter__(self) -> Iterator[Kb]:
        return iter(self._kbs[k] for k in self.kb_ids())

    def __len__(self) -> int:
        return len(self._kbs)

    def kb_ids(self) -> list[int]:
        return sorted(self._kbs)

    def kb_of(self, e: EntityRef) -> Kb:
        return self._kbs[e.kb_id]

    def entity_refs(self) -> list[EntityRef]:
        """Every entity of every registered KB, in canonical order."""
        return [
            EntityRef(kb.kb_id, i) for kb in self for i in range(kb.n_entities)
        ]

    def total_triples(self) -> int:
        return sum(len(kb) for kb in self)


class LinkSet:
    """Typed cross-KB entity pairs with an index on both endpoints."""

    def __init__(self, links: Iterable[Link] = ()) -> None:
        by_pair: dict[tuple[EntityRef, EntityRef], LinkType] = {}
        for ln in links:
            prev = by_pair.get((ln.e1, ln.e2))
            if prev is None:
                by_pair[ln.e1, ln.e2] = ln.t
            elif prev != ln.t:
                raise ValueError(f"conflicting types for link pair ({ln.e1}, {ln.e2})")
        self.links: tuple[Link, ...] = tuple(
            Link(e1, e2, t) for (e1, e2), t in sorted(by_pair.items())
        )
        index: dict[EntityRef, list[tuple[EntityRef, LinkType]]] = defaultdict(list)
        for ln in self.links:
            index[ln.e1].append((ln.e2, ln.t))
            index[ln.e2].append((ln.e1, ln.t))
        self._index = {k: tuple(v) for k, v in index.items()}

    def partners(
        self, e: EntityRef, type_filter: Optional[LinkType] = None
    ) -> set[tuple[EntityRef, LinkType]]:
        """All link partners of ``e``, optionally restricted to one type."""
        out = self._index.get(e, ())
        if type_filter is None:
            return set(out)
        return {(p, t) for p, t in out if t == type_filter}

    def restrict(self, type_filter: LinkType) -> "LinkSet":
        return LinkSet(ln for ln in self.links if ln.t == type_filter)

    def __iter__(self) -> Iterator[Link]:
        return iter(self.links)

    def __len__(self) -> int:
        return len(self.links)

    def __repr__(self) -> str:
        n_full = sum(1 for ln in self.links if ln.t == LinkType.FULL)
        return f"LinkSet(full={n_full}, partial={len(self.links) - n_full})"


# -- file formats ----------------------------------------------------------
#
# Triples file:      subject \t relation \t object           (UTF-8 TSV)
# Entity-type file:  name \t type
# Links file:        kb1_entity \t kb2_entity \t type        type in {full, partial}


def _read_rows(path: Path, n_cols: int) -> list[tuple[str, ...]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = tuple(line.split("\t"))
            if len(parts) != n_cols:
                raise KbFormatError(
                    f"{path}:{lineno}: expected {n_cols} tab-separated columns, "
                    f"got {len(parts)}"
                )
            rows.append(parts)
    return rows


def load_kb(path: str | Path, kb_id: int, types_path: str | Path | None = None) -> Kb:
    """Load a KB from a triples TSV, interning names in first-seen order.

    Duplicate rows are deduplicated.  An optional ``name\\ttype`` sidecar
    assigns entity types; sidecar names absent from the triples file are
    interned as isolated entities.
    """
    names: list[str] = []
    name_id: dict[str, int] = {}
    relations: list[str] = []
    rel_id: dict[str, int] = {}

    def intern_entity(name: str) -> int:
        if name not in name_id:
            name_id[name] = len(names)
            names.append(name)
        return name_id[name]

    def intern_relation(name: str) -> int:
        if name not in rel_id:
            rel_id[name] = len(relations)
            relations.append(name)
        return rel_id[name]

    triples = set()
    for s, r, o in _read_rows(Path(path), 3):
        si = intern_entity(s)
        ri = intern_relation(r)
        oi = intern_entity(o)
        triples.add(Triple(EntityRef(kb_id, si), ri, EntityRef(kb_id, oi)))

    etypes = {n: "" for n in names}
    if types_path is not None:
        for name, etype in _read_rows(Path(types_path), 2):
            intern_entity(name)
            etypes[name] = etype

    entities = [(n, etypes.get(n, "")) for n in names]
    return Kb(kb_id, entities, relations, triples)


def save_kb(kb: Kb, path: str | Path, types_path: str | Path | None = None) -> None:
    """Write the canonical sorted TSV form (and optional type sidecar)."""
    rows = sorted(
        (kb.entity_name(s), kb.relations[r], kb.entity_name(o))
        for s, r, o in kb.triple_rows()
    )
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")
    if types_path is not None:
        with open(types_path, "w", encoding="utf-8") as f:
            for name, etype in sorted(kb.entities):
                f.write(f"{name}\t{etype}\n")


def load_links(path: str | Path, kb1: Kb, kb2: Kb) -> LinkSet:
    """Load a links TSV, resolving entity names against the two KBs."""
    links = []
    for n1, n2, t in _read_rows(Path(path), 3):
        e1 = EntityRef(kb1.kb_id, kb1.entity_id(n1))
        e2 = EntityRef(kb2.kb_id, kb2.entity_id(n2))
        links.append(Link(e1, e2, LinkType.from_string(t)))
    return LinkSet(links)


def save_links(links: LinkSet, path: str | Path, kbs: KbRegistry) -> None:
    """Write links as a sorted TSV, lower-kb_id endpoint first."""
    rows = []
    for ln in links:
        lo, hi = sorted((ln.e1, ln.e2))
        rows.append((kbs.kb_of(lo).entity_name(lo.local_id),
                     kbs.kb_of(hi).entity_name(hi.local_id),
                     str(ln.t)))
    with open(path, "w", encoding="utf-8") as f:
        for row in sorted(rows):
            f.write("\t".join(row) + "\n")


def canonicalize_kb(kb: Kb) -> tuple[Kb, dict[int, int]]:
    """Renumber entities and relations into file-canonical order.

    ``load_kb(save_kb(kb))`` interns names in the order they appear in
    the sorted TSV; this produces that numbering directly (with the
    old->new entity mapping), so entity refs stay valid across a file
    round trip.  Requires names unique within the KB.
    """
    if len(set(n for n, _ in kb.entities)) != kb.n_entities:
        raise ValueError("canonicalization requires unique entity names")
    rows = sorted(
        (kb.entity_name(s), kb.relations[r], kb.entity_name(o))
        for s, r, o in kb.triple_rows()
    )
    names: list[str] = []
    name_id: dict[str, int] = {}
    rels: list[str] = []
    rel_id: dict[str, int] = {}

    def ent(n: str) -> int:
        if n not in name_id:
            name_id[n] = len(names)
            names.append(n)
        return name_id[n]

    def rel(n: str) -> int:
        if n not in rel_id:
            rel_id[n] = len(rels)
            rels.append(n)
        return rel_id[n]

    triples = set()
    for s, r, o in rows:
        si, ri, oi = ent(s), rel(r), ent(o)
        triples.add(Triple(EntityRef(kb.kb_id, si), ri, EntityRef(kb.kb_id, oi)))
    for n, _ in sorted(kb.entities):  # isolated entities follow the sidecar order
        ent(n)
    for r in kb.relations:
        rel(r)

    etype = {n: t for n, t in kb.entities}
    entities = [(n, etype[n]) for n in names]
    mapping = {old: name_id[kb.entity_name(old)] for old in range(kb.n_entities)}
    return Kb(kb.kb_id, entities, rels, triples), mapping


# -- KB fusion (the Merge-KB baseline) --------------------------------------


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        # keep the smaller global index as representative so the lowest
        # kb_id's entity provides the merged name
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def merge_full_links(
    kbs: KbRegistry,
    links: LinkSet,
    *,
    include_partial: bool = False,
    merged_kb_id: int = 0,
) -> tuple[Kb, dict[EntityRef, int]]:
    """Fuse all registered KBs into a single graph by contracting links.

    Entities connected by full links collapse to one node; partial links
    are ignored unless ``include_partial`` is set (that mode exists to
    reproduce the failure of forcibly merging partial links).  Relation
    namespaces are concatenated disjointly and prefixed with their source
    KB, and every original entity is mapped to its merged id in the
    returned provenance.
    """
    kb_list = list(kbs)
    base: dict[int, int] = {}
    total = 0
    for kb in kb_list:
        base[kb.kb_id] = total
        total += kb.n_entities

    def gid(e: EntityRef) -> int:
        return base[e.kb_id] + e.local_id

    uf = _UnionFind(total)
    for ln in links:
        if ln.t == LinkType.FULL or (include_partial and ln.t == LinkType.PARTIAL):
            uf.union(gid(ln.e1), gid(ln.e2))

    roots = sorted({uf.find(g) for g in range(total)})
    merged_of_root = {root: i for i, root in enumerate(roots)}

    provenance: dict[EntityRef, int] = {}
    for kb in kb_list:
        for i in range(kb.n_entities):
            e = EntityRef(kb.kb_id, i)
            provenance[e] = merged_of_root[uf.find(gid(e))]

    entities: list[tuple[str, str]] = []
    for root in roots:
        for kb in kb_list:
            if base[kb.kb_id] <= root < base[kb.kb_id] + kb.n_entities:
                entities.append(kb.entities[root - base[kb.kb_id]])
                break

    relations: list[str] = []
    rel_base: dict[int, int] = {}
    for kb in kb_list:
        rel_base[kb.kb_id] = len(relations)
        relations.extend(f"kb{kb.kb_id}:{r}" for r in kb.relations)

    triples = set()
    for kb in kb_list:
        for t in kb.triples:
            triples.add(
                Triple(
                    EntityRef(merged_kb_id, provenance[t.subject]),
                    rel_base[kb.kb_id] + t.relation,
                    EntityRef(merged_kb_id, provenance[t.object]),
                )
            )

    return Kb(merged_kb_id, entities, relations, triples), provenance
