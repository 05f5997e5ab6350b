"""Synthetic multi-KB benchmarks built from query-graph templates.

Two random typed KBs are generated with planted full and partial links
(linked names differ by at most one edit, so the miner recovers them at
its default threshold).  Six templates are instantiated into query
graphs: chains where the link sits before, inside, or after the in-KB
hops, and intersections that join one-hop or two-hop frontiers across
the link.  Answers are derived hop by hop and every record stores its
serialized graph.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .kb import (
    EntityRef,
    Kb,
    KbRegistry,
    Link,
    LinkSet,
    LinkType,
    Triple,
    canonicalize_kb,
    load_kb,
    load_links,
    save_kb,
    save_links,
)
from .records import QuestionRecord, read_jsonl, write_jsonl


# -- template table ----------------------------------------------------------
#
# A step is ("rel", side) for an in-KB hop whose relation and output live
# on that side, or ("link", side) for the cross-KB hop landing on `side`.
# Join templates intersect the end of chain 0 (side "a") with the
# link-mapped end of chain 1.

Step = tuple[str, str]


@dataclass(frozen=True)
class Template:
    tid: str
    chains: tuple[tuple[Step, ...], ...]
    join: bool

    @property
    def hops(self) -> int:
        return sum(1 for chain in self.chains for kind, _ in chain if kind == "rel")


TEMPLATES: dict[str, Template] = {
    "T1": Template("T1", ((("rel", "a"), ("link", "b"), ("rel", "b")),), False),
    "T2": Template("T2", ((("rel", "a"),), (("rel", "b"),)), True),
    "T3": Template("T3", ((("link", "b"), ("rel", "b"), ("rel", "b")),), False),
    "T4": Template(
        "T4", ((("rel", "a"), ("link", "b"), ("rel", "b"), ("rel", "b")),), False
    ),
    "T5": Template("T5", ((("rel", "a"),), (("rel", "b"), ("rel", "b"))), True),
    "T6": Template(
        "T6", ((("rel", "a"), ("rel", "a"), ("link", "b"), ("rel", "b")),), False
    ),
}

# partial links appear only in two-hop questions
PARTIAL_TEMPLATES = ("T1", "T2", "T3")


@dataclass
class QueryGraph:
    """An instantiated template: topics and relations bound, inner nodes free.

    ``kb_a``/``kb_b`` fix which KB plays each template side; ``relations``
    holds the bound relation ids per chain in hop order; exactly one link
    edge of ``link_type`` crosses the KBs.
    """

    template: str
    kb_a: int
    kb_b: int
    topics: tuple[EntityRef, ...]
    relations: tuple[tuple[int, ...], ...]
    link_type: LinkType

    def side_kb(self, side: str) -> int:
        return self.kb_a if side == "a" else self.kb_b

    def to_dict(self) -> dict:
        return {
            "template": self.template,
            "kb_a": self.kb_a,
            "kb_b": self.kb_b,
            "topics": [str(e) for e in self.topics],
            "relations": [list(r) for r in self.relations],
            "link_type": str(self.link_type),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryGraph":
        return cls(
            template=d["template"],
            kb_a=int(d["kb_a"]),
            kb_b=int(d["kb_b"]),
            topics=tuple(EntityRef.parse(s) for s in d["topics"]),
            relations=tuple(tuple(int(r) for r in rs) for rs in d["relations"]),
            link_type=LinkType.from_string(d["link_type"]),
        )

    @property
    def answer_variable(self) -> str:
        spec = TEMPLATES[self.template]
        return f"c0n{len(spec.chains[0]) - 1}"

    def node_kbs(self) -> dict[str, int]:
        """KB membership of every pattern node (topics and variables)."""
        spec = TEMPLATES[self.template]
        out = {}
        for ci, chain in enumerate(spec.chains):
            kind0, side0 = chain[0]
            topic_side = side0 if kind0 == "rel" else ("a" if side0 == "b" else "b")
            out[f"topic{ci}"] = self.side_kb(topic_side)
            for si, (kind, side) in enumerate(chain):
                out[f"c{ci}n{si}"] = self.side_kb(side)
        return out

    def edges(self) -> list[tuple[str, str, object, int]]:
        """(subject_node, object_node, relation | link type, kb_id) view.

        Link edges carry kb_id -1; node names are unique per position so
        the structural checks can verify the two-subgraph shape.
        """
        spec = TEMPLATES[self.template]
        out = []
        for ci, chain in enumerate(spec.chains):
            prev = f"topic{ci}"
            rels = iter(self.relations[ci])
            for si, (kind, side) in enumerate(chain):
                node = f"c{ci}n{si}"
                if kind == "rel":
                    out.append((prev, node, next(rels), self.side_kb(side)))
                else:
                    out.append((prev, node, self.link_type, -1))
                prev = node
        if spec.join:
            out.append((f"c0n{len(spec.chains[0]) - 1}",
                        f"c1n{len(spec.chains[1]) - 1}", self.link_type, -1))
        return out


def derive_answers(g: QueryGraph, kbs: KbRegistry, links: LinkSet) -> set[EntityRef]:
    """Evaluate a query graph hop by hop.

    In-KB hops expand frontiers through the adjacency index; link hops
    map each frontier entity to its partners of the graph's link type.
    Join templates intersect the side-a frontier with the link-mapped
    side-b frontier.
    """
    spec = TEMPLATES[g.template]
    ends: list[set[EntityRef]] = []
    for chain, topic, rels in zip(spec.chains, g.topics, g.relations):
        frontier = {topic}
        rel_iter = iter(rels)
        for kind, side in chain:
            target_kb = g.side_kb(side)
            nxt: set[EntityRef] = set()
            if kind == "rel":
                rel = next(rel_iter)
                kb = kbs[target_kb]
                for e in frontier:
                    nxt |= kb.neighbors(e, rel)
            else:
                for e in frontier:
                    nxt |= {
                        p
                        for p, t in links.partners(e, g.link_type)
                        if p.kb_id == target_kb
                    }
            frontier = nxt
            if not frontier:
                return set()
        ends.append(frontier)
    if not spec.join:
        return ends[0]
    mapped: set[EntityRef] = set()
    for e in ends[1]:
        mapped |= {
            p for p, t in links.partners(e, g.link_type) if p.kb_id == g.kb_a
        }
    return ends[0] & mapped


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def instantiate_template(
    tid: str,
    kbs: KbRegistry,
    links: LinkSet,
    rng: np.random.Generator,
    link_type: Optional[LinkType] = None,
    max_tries: int = 50,
) -> Optional[QueryGraph]:
    """Sample a concrete query graph for a template, or None.

    A link is drawn first and the chains are grown backward/forward from
    its endpoints, so the witness path guarantees a non-empty answer set.
    """
    if tid not in TEMPLATES:
        raise ValueError(f"unknown template {tid!r}")
    spec = TEMPLATES[tid]
    pool = [ln for ln in links if link_type is None or ln.t == link_type]
    if not pool:
        return None

    for _ in range(max_tries):
        ln = _pick(rng, pool)
        ends = [ln.e1, ln.e2] if rng.integers(2) == 0 else [ln.e2, ln.e1]
        x, y = ends  # x plays side a, y side b
        kb_a, kb_b = x.kb_id, y.kb_id

        graph = _grow_chains(spec, x, y, kb_a, kb_b, kbs, rng)
        if graph is None:
            continue
        topics, relations = graph
        return QueryGraph(tid, kb_a, kb_b, tuple(topics), tuple(relations), ln.t)
    return None


def _grow_chains(spec, x, y, kb_a, kb_b, kbs, rng):
    """Bind the relation placeholders around the chosen link endpoints."""
    topics = []
    relations = []
    for ci, chain in enumerate(spec.chains):
        if spec.join:
            # each chain ends at its link endpoint: chain 0 at x, chain 1 at y
            end = x if ci == 0 else y
            pre, post = list(chain), []
        else:
            li = next(i for i, (kind, _) in enumerate(chain) if kind == "link")
            pre, post = list(chain[:li]), list(chain[li + 1:])
            end = x
        topic, rels_pre = _grow_backward(pre, end, kb_a, kb_b, kbs, rng)
        if topic is None:
            return None
        if spec.join:
            topics.append(topic)
            relations.append(tuple(rels_pre))
            continue
        rels_post = _grow_forward(post, y, kb_a, kb_b, kbs, rng)
        if rels_post is None:
            return None
        topics.append(topic)
        relations.append(tuple(rels_pre + rels_post))
    return topics, relations


def _grow_backward(steps, end, kb_a, kb_b, kbs, rng):
    """Walk relation steps in reverse from `end`, returning (topic, relations)."""
    node = end
    rels: list[int] = []
    for kind, side in reversed(steps):
        assert kind == "rel"
        kb = kbs[kb_a if side == "a" else kb_b]
        if node.kb_id != kb.kb_id:
            return None, None
        choices = kb.in_edges(node.local_id)
        if not choices:
            return None, None
        r, s = _pick(rng, choices)
        rels.insert(0, r)
        node = EntityRef(kb.kb_id, s)
    return node, rels


def _grow_forward(steps, start, kb_a, kb_b, kbs, rng):
    node = start
    rels: list[int] = []
    for kind, side in steps:
        assert kind == "rel"
        kb = kbs[kb_a if side == "a" else kb_b]
        if node.kb_id != kb.kb_id:
            return None
        choices = kb.out_edges(node.local_id)
        if not choices:
            return None
        r, o = _pick(rng, choices)
        rels.append(r)
        node = EntityRef(kb.kb_id, o)
    return rels


# -- verbalization -----------------------------------------------------------

_CHAIN_SURFACES = (
    "What is the {path} of {e}?",
    "Which entities are the {path} of {e}?",
    "List the {path} of {e}.",
)
_JOIN_SURFACES = (
    "What is both the {path_a} of {ea} and the {path_b} of {eb}?",
    "Which entities are the {path_a} of {ea} as well as the {path_b} of {eb}?",
    "Find entities that are the {path_a} of {ea} and also the {path_b} of {eb}.",
)


def _rel_path(names: list[str]) -> str:
    # innermost hop last: "r2 of the r1"
    path = names[-1]
    for name in reversed(names[:-1]):
        path += f" of the {name}"
    return path


def verbalize(g: QueryGraph, kbs: KbRegistry) -> str:
    """Deterministic canonical question; one of three surface variants
    selected by a stable hash of the graph."""
    digest = hashlib.sha256(
        json.dumps(g.to_dict(), sort_keys=True).encode()
    ).digest()
    variant = digest[0] % 3
    spec = TEMPLATES[g.template]

    def rel_names(ci: int) -> list[str]:
        names = []
        rels = iter(g.relations[ci])
        for kind, side in spec.chains[ci]:
            if kind == "rel":
                names.append(kbs[g.side_kb(side)].relations[next(rels)])
        return names

    def topic_name(ci: int) -> str:
        t = g.topics[ci]
        return kbs[t.kb_id].entity_name(t.local_id)

    if not spec.join:
        return _CHAIN_SURFACES[variant].format(
            path=_rel_path(rel_names(0)), e=topic_name(0)
        )
    return _JOIN_SURFACES[variant].format(
        path_a=_rel_path(rel_names(0)),
        ea=topic_name(0),
        path_b=_rel_path(rel_names(1)),
        eb=topic_name(1),
    )


# -- synthetic KB generation ---------------------------------------------------

_ALPHABET = "abcdefghjkmnpqrstuvwxyz"
_SHARED_TYPES = ("company", "product", "person")
_KB1_TYPES = _SHARED_TYPES + ("sector",)
_KB2_TYPES = _SHARED_TYPES + ("industry", "concept")


@dataclass
class GenConfig:
    n_entities: int = 300
    n_relations: int = 8
    n_triples: int = 900
    n_full_links: int = 30
    n_partial_links: int = 30
    questions_per_cell: int = 45
    name_len: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_entities, self.n_relations, self.n_triples) < 1:
            raise ValueError("entity, relation and triple counts must be positive")
        if self.n_full_links + self.n_partial_links > self.n_entities:
            raise ValueError("more links than entities per KB")
        if self.name_len < 7:
            # one edit must keep similarity above the default 0.85 threshold
            raise ValueError("name_len must be at least 7")


def _random_name(rng: np.random.Generator, length: int, taken: set[str]) -> str:
    while True:
        name = "".join(_ALPHABET[i] for i in rng.integers(0, len(_ALPHABET), length))
        if name not in taken:
            taken.add(name)
            return name


def _mutate_name(rng: np.random.Generator, name: str, taken: set[str]) -> str:
    while True:
        pos = int(rng.integers(len(name)))
        repl = _ALPHABET[int(rng.integers(len(_ALPHABET)))]
        if repl == name[pos]:
            continue
        variant = name[:pos] + repl + name[pos + 1:]
        if variant not in taken:
            taken.add(variant)
            return variant


def _random_triples(
    rng: np.random.Generator, kb_id: int, n_entities: int, n_relations: int, n_triples: int
) -> set[Triple]:
    triples: set[Triple] = set()
    guard = 0
    while len(triples) < n_triples and guard < 50 * n_triples:
        guard += 1
        s = int(rng.integers(n_entities))
        o = int(rng.integers(n_entities))
        if s == o:
            continue
        r = int(rng.integers(n_relations))
        triples.add(Triple(EntityRef(kb_id, s), r, EntityRef(kb_id, o)))
    # every entity keeps at least two outgoing and one incoming edge so
    # template growth never dead-ends
    out_deg = {i: 0 for i in range(n_entities)}
    in_deg = {i: 0 for i in range(n_entities)}
    for t in triples:
        out_deg[t.subject.local_id] += 1
        in_deg[t.object.local_id] += 1
    for e in range(n_entities):
        while out_deg[e] < 2:
            o = int(rng.integers(n_entities))
            r = int(rng.integers(n_relations))
            if o == e:
                continue
            t = Triple(EntityRef(kb_id, e), r, EntityRef(kb_id, o))
            if t in triples:
                continue
            triples.add(t)
            out_deg[e] += 1
            in_deg[o] += 1
        while in_deg[e] < 1:
            s = int(rng.integers(n_entities))
            r = int(rng.integers(n_relations))
            if s == e:
                continue
            t = Triple(EntityRef(kb_id, s), r, EntityRef(kb_id, e))
            if t in triples:
                continue
            triples.add(t)
            out_deg[s] += 1
            in_deg[e] += 1
    return triples


def generate_synthetic_kbs(cfg: GenConfig) -> tuple[Kb, Kb, LinkSet]:
    """Two random typed KBs with planted full and partial links.

    Linked pairs get names at most one edit apart (full links share the
    entity type, partial links cross types), so the default miner
    recovers and labels nearly all of them.
    """
    rng = np.random.default_rng(cfg.seed)
    taken: set[str] = set()
    names1 = [_random_name(rng, cfg.name_len, taken) for _ in range(cfg.n_entities)]
    names2 = [_random_name(rng, cfg.name_len, taken) for _ in range(cfg.n_entities)]
    types1 = [_KB1_TYPES[i] for i in rng.integers(0, len(_KB1_TYPES), cfg.n_entities)]
    types2 = [_KB2_TYPES[i] for i in rng.integers(0, len(_KB2_TYPES), cfg.n_entities)]

    n_links = cfg.n_full_links + cfg.n_partial_links
    pick1 = rng.permutation(cfg.n_entities)[:n_links]
    pick2 = rng.permutation(cfg.n_entities)[:n_links]
    links = []
    for idx in range(n_links):
        i, j = int(pick1[idx]), int(pick2[idx])
        full = idx < cfg.n_full_links
        taken.discard(names2[j])
        if rng.random() < (0.5 if full else 0.3):
            names2[j] = names1[i]
        else:
            names2[j] = _mutate_name(rng, names1[i], taken)
        if full:
            shared = _pick(rng, _SHARED_TYPES)
            types1[i] = shared
            types2[j] = shared
        else:
            types1[i] = _pick(rng, _KB1_TYPES)
            others = [t for t in _KB2_TYPES if t != types1[i]]
            types2[j] = _pick(rng, others)
        links.append(
            Link(EntityRef(1, i), EntityRef(2, j), LinkType.FULL if full else LinkType.PARTIAL)
        )

    rels1 = [f"rel1_{k}_{_random_name(rng, 4, taken)}" for k in range(cfg.n_relations)]
    rels2 = [f"rel2_{k}_{_random_name(rng, 4, taken)}" for k in range(cfg.n_relations)]
    triples1 = _random_triples(rng, 1, cfg.n_entities, cfg.n_relations, cfg.n_triples)
    triples2 = _random_triples(rng, 2, cfg.n_entities, cfg.n_relations, cfg.n_triples)

    kb1 = Kb(1, list(zip(names1, types1)), rels1, triples1)
    kb2 = Kb(2, list(zip(names2, types2)), rels2, triples2)
    # renumber into file-canonical order so entity refs in the question
    # files survive a save/load round trip
    kb1, map1 = canonicalize_kb(kb1)
    kb2, map2 = canonicalize_kb(kb2)
    links = [
        Link(EntityRef(1, map1[ln.e1.local_id]), EntityRef(2, map2[ln.e2.local_id]), ln.t)
        for ln in links
    ]
    return kb1, kb2, LinkSet(links)


# -- dataset assembly ----------------------------------------------------------


def dataset_cells() -> list[tuple[str, LinkType]]:
    cells = [(tid, LinkType.FULL) for tid in TEMPLATES]
    cells += [(tid, LinkType.PARTIAL) for tid in PARTIAL_TEMPLATES]
    return cells


def generate_dataset(
    cfg: GenConfig,
    kbs: KbRegistry,
    links: LinkSet,
    rng: Optional[np.random.Generator] = None,
) -> dict[str, list[QuestionRecord]]:
    """Instantiate per-cell question quotas and split 80/10/10 per cell."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed + 1)
    splits: dict[str, list[QuestionRecord]] = {"train": [], "dev": [], "test": []}
    for tid, ltype in dataset_cells():
        seen: set[str] = set()
        cell: list[QuestionRecord] = []
        attempts = 0
        budget = cfg.questions_per_cell * 40
        while len(cell) < cfg.questions_per_cell and attempts < budget:
            attempts += 1
            g = instantiate_template(tid, kbs, links, rng, link_type=ltype)
            if g is None:
                break
            key = json.dumps(g.to_dict(), sort_keys=True)
            if key in seen:
                continue
            seen.add(key)
            answers = derive_answers(g, kbs, links)
            if not answers:
                raise AssertionError(f"instantiated graph has no answers: {key}")
            cell.append(
                QuestionRecord(
                    text=verbalize(g, kbs),
                    topic_entities=g.topics,
                    answers=frozenset(answers),
                    template=tid,
                    link_type=ltype,
                    graph=g.to_dict(),
                )
            )
        if len(cell) < cfg.questions_per_cell:
            warnings.warn(
                f"cell ({tid}, {ltype}): only {len(cell)} of "
                f"{cfg.questions_per_cell} questions instantiable"
            )
        perm = rng.permutation(len(cell))
        n = len(cell)
        n_dev = int(round(0.1 * n))
        n_test = int(round(0.1 * n))
        dev_idx = set(int(i) for i in perm[:n_dev])
        test_idx = set(int(i) for i in perm[n_dev : n_dev + n_test])
        for i, rec in enumerate(cell):
            if i in dev_idx:
                splits["dev"].append(rec)
            elif i in test_idx:
                splits["test"].append(rec)
            else:
                splits["train"].append(rec)
    return splits


def write_benchmark(
    out_dir: str | Path,
    kb1: Kb,
    kb2: Kb,
    links: LinkSet,
    splits: dict[str, list[QuestionRecord]],
    cfg: GenConfig,
    extra: Optional[dict] = None,
) -> None:
    for kb in (kb1, kb2):
        _, mapping = canonicalize_kb(kb)
        if any(old != new for old, new in mapping.items()):
            raise ValueError(
                f"KB {kb.kb_id} ids are not file-canonical; entity refs in the "
                "question files would break on reload"
            )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_kb(kb1, out / "kb1.tsv", out / "types1.tsv")
    save_kb(kb2, out / "kb2.tsv", out / "types2.tsv")
    kbs = KbRegistry([kb1, kb2])
    save_links(links, out / "links.tsv", kbs)
    for split, records in splits.items():
        write_jsonl(records, out / f"{split}.jsonl")
    manifest = {
        "config": asdict(cfg),
        "seed": cfg.seed,
        "counts": {
            "kb1_triples": len(kb1),
            "kb2_triples": len(kb2),
            "links": len(links),
            **{s: len(r) for s, r in splits.items()},
        },
        # join templates bind answers on the side-a end of the link pair
        "join_answer_side": "kb_a",
    }
    manifest.update(extra or {})
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_benchmark(
    data_dir: str | Path,
) -> tuple[KbRegistry, LinkSet, dict[str, list[QuestionRecord]]]:
    d = Path(data_dir)
    kb1 = load_kb(d / "kb1.tsv", 1, d / "types1.tsv")
    kb2 = load_kb(d / "kb2.tsv", 2, d / "types2.tsv")
    kbs = KbRegistry([kb1, kb2])
    links = load_links(d / "links.tsv", kb1, kb2)
    splits = {}
    for split in ("train", "dev", "test"):
        path = d / f"{split}.jsonl"
        splits[split] = read_jsonl(path, kbs) if path.exists() else []
    return kbs, links, splits


# -- forcible-merge regression fixture ------------------------------------------


@dataclass
class MergeFailureConfig:
    """A planted scenario where fusing a partial link corrupts answers.

    Each pair holds a product-side entity (upstream: parts) and an
    industry-side entity (upstream: industries) joined by a partial
    link.  Questions ask for the upstream of one specific side; after a
    forcible merge both neighbor sets hang off the same node while the
    question text cannot name the side, so precision collapses.
    """

    n_pairs: int = 15
    n_correct: int = 4
    n_decoy: int = 4
    n_filler: int = 20
    name_len: int = 10
    seed: int = 7


def generate_merge_failure_scenario(
    cfg: MergeFailureConfig,
) -> tuple[KbRegistry, LinkSet, dict[str, list[QuestionRecord]]]:
    rng = np.random.default_rng(cfg.seed)
    taken: set[str] = set()

    ents1: list[tuple[str, str]] = []
    ents2: list[tuple[str, str]] = []
    triples1: set[Triple] = set()
    triples2: set[Triple] = set()
    links: list[Link] = []
    rels1 = ["upstream", "related1"]
    rels2 = ["upstream", "related2"]

    def add_ent(side: list, name: str, etype: str) -> int:
        side.append((name, etype))
        return len(side) - 1

    questions: list[QuestionRecord] = []
    for _ in range(cfg.n_pairs):
        base = _random_name(rng, cfg.name_len, taken)
        p = add_ent(ents1, base, "product")
        i = add_ent(ents2, _mutate_name(rng, base, taken), "industry")
        links.append(Link(EntityRef(1, p), EntityRef(2, i), LinkType.PARTIAL))
        p_answers = []
        for _ in range(cfg.n_decoy):
            part = add_ent(ents1, _random_name(rng, cfg.name_len, taken), "material")
            triples1.add(Triple(EntityRef(1, p), 0, EntityRef(1, part)))
            p_answers.append(EntityRef(1, part))
        i_answers = []
        for _ in range(cfg.n_correct):
            ind = add_ent(ents2, _random_name(rng, cfg.name_len, taken), "industry")
            triples2.add(Triple(EntityRef(2, i), 0, EntityRef(2, ind)))
            i_answers.append(EntityRef(2, ind))
        questions.append(
            QuestionRecord(
                text=f"What is the upstream of {ents1[p][0]}?",
                topic_entities=(EntityRef(1, p),),
                answers=frozenset(p_answers),
                template="T0",
                link_type=LinkType.PARTIAL,
            )
        )
        questions.append(
            QuestionRecord(
                text=f"What is the upstream of {ents2[i][0]}?",
                topic_entities=(EntityRef(2, i),),
                answers=frozenset(i_answers),
                template="T0",
                link_type=LinkType.PARTIAL,
            )
        )

    for ents, triples, kb_id in ((ents1, triples1, 1), (ents2, triples2, 2)):
        first_filler = len(ents)
        for _ in range(cfg.n_filler):
            add_ent(ents, _random_name(rng, cfg.name_len, taken), "misc")
        for f in range(first_filler, len(ents)):
            o = int(rng.integers(len(ents)))
            if o != f:
                triples.add(Triple(EntityRef(kb_id, f), 1, EntityRef(kb_id, o)))

    kb1 = Kb(1, ents1, rels1, triples1)
    kb2 = Kb(2, ents2, rels2, triples2)
    kbs = KbRegistry([kb1, kb2])

    perm = rng.permutation(len(questions))
    n_dev = max(1, int(round(0.3 * len(questions))))
    dev_idx = set(int(i) for i in perm[:n_dev])
    splits = {
        "train": [q for i, q in enumerate(questions) if i not in dev_idx],
        "dev": [q for i, q in enumerate(questions) if i in dev_idx],
        "test": [],
    }
    return kbs, LinkSet(links), splits
