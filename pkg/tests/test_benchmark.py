import json

import numpy as np
import pytest

from linkqa.benchmark import (
    GenConfig,
    MergeFailureConfig,
    QueryGraph,
    TEMPLATES,
    PARTIAL_TEMPLATES,
    dataset_cells,
    derive_answers,
    generate_dataset,
    generate_merge_failure_scenario,
    generate_synthetic_kbs,
    instantiate_template,
    load_benchmark,
    verbalize,
    write_benchmark,
)
from linkqa.kb import EntityRef, KbRegistry, Link, LinkSet, LinkType
from linkqa.mining import MinerConfig, mine_links, similarity

from conftest import make_kb
from oracles import enumerate_answers


def small_cfg(**kw):
    base = dict(n_entities=40, n_relations=4, n_triples=120, n_full_links=6,
                n_partial_links=6, questions_per_cell=4, seed=11)
    base.update(kw)
    return GenConfig(**base)


def check_two_subgraph_structure(g: QueryGraph) -> None:
    node_kb = g.node_kbs()
    edges = g.edges()
    link_edges = [e for e in edges if e[3] == -1]
    assert len(link_edges) == 1
    sn, on, label, _ = link_edges[0]
    assert node_kb[sn] != node_kb[on]
    assert label == g.link_type
    adj = {}
    for sn, on, label, kb_id in edges:
        if kb_id == -1:
            continue
        assert node_kb[sn] == node_kb[on] == kb_id
        adj.setdefault(sn, set()).add(on)
        adj.setdefault(on, set()).add(sn)
    # connected components of the pattern minus link edges: each lies in
    # one KB, and there are exactly two of them
    seen = set()
    components = []
    for node in node_kb:
        if node in seen:
            continue
        stack, comp = [node], set()
        while stack:
            cur = stack.pop()
            if cur in comp:
                continue
            comp.add(cur)
            stack.extend(adj.get(cur, ()))
        seen |= comp
        components.append(comp)
    assert len(components) == 2
    for comp in components:
        assert len({node_kb[n] for n in comp}) == 1


class TestGenerateKbs:
    def test_deterministic(self):
        cfg = small_cfg()
        a = generate_synthetic_kbs(cfg)
        b = generate_synthetic_kbs(cfg)
        assert a[0].entities == b[0].entities
        assert a[0].triples == b[0].triples
        assert a[2].links == b[2].links

    def test_zero_partial_means_all_full(self):
        cfg = small_cfg(n_partial_links=0)
        _, _, links = generate_synthetic_kbs(cfg)
        assert all(ln.t == LinkType.FULL for ln in links)

    def test_planted_names_similar_and_typed(self):
        kb1, kb2, links = generate_synthetic_kbs(small_cfg())
        for ln in links:
            n1 = kb1.entity_name(ln.e1.local_id)
            n2 = kb2.entity_name(ln.e2.local_id)
            assert similarity(n1, n2) >= 0.85
            t1 = kb1.entity_type(ln.e1.local_id)
            t2 = kb2.entity_type(ln.e2.local_id)
            assert (t1 == t2) == (ln.t == LinkType.FULL)

    def test_miner_recovers_planted_links(self):
        kb1, kb2, links = generate_synthetic_kbs(small_cfg())
        mined = {(ln.e1, ln.e2): ln.t for ln in mine_links(kb1, kb2, MinerConfig())}
        recovered = sum(1 for ln in links if (ln.e1, ln.e2) in mined)
        correct = sum(1 for ln in links if mined.get((ln.e1, ln.e2)) == ln.t)
        assert recovered >= 0.95 * len(links)
        assert correct >= 0.95 * recovered



@pytest.fixture(scope="module")
def world():
    cfg = small_cfg()
    kb1, kb2, links = generate_synthetic_kbs(cfg)
    return KbRegistry([kb1, kb2]), links


@pytest.fixture(scope="module")
def bench():
    cfg = small_cfg()
    kb1, kb2, links = generate_synthetic_kbs(cfg)
    kbs = KbRegistry([kb1, kb2])
    splits = generate_dataset(cfg, kbs, links)
    return cfg, kbs, links, splits


class TestInstantiate:
    @pytest.mark.parametrize("tid", sorted(TEMPLATES))
    def test_graphs_match_pattern(self, world, tid):
        kbs, links = world
        rng = np.random.default_rng(1)
        found = 0
        for _ in range(10):
            g = instantiate_template(tid, kbs, links, rng)
            if g is None:
                continue
            found += 1
            check_two_subgraph_structure(g)
            assert g.template == tid
            n_rels = sum(len(r) for r in g.relations)
            assert n_rels == TEMPLATES[tid].hops
            assert derive_answers(g, kbs, links)
        assert found > 0

    def test_link_type_filter(self, world):
        kbs, links = world
        rng = np.random.default_rng(2)
        for lt in (LinkType.FULL, LinkType.PARTIAL):
            g = instantiate_template("T1", kbs, links, rng, link_type=lt)
            assert g is not None and g.link_type == lt

    def test_forced_unique_instantiation(self):
        kb1 = make_kb(1, [("e1", "r1", "v1")])
        kb2 = make_kb(2, [("v1q", "r2", "ans")])
        kbs = KbRegistry([kb1, kb2])
        links = LinkSet([Link(EntityRef(1, kb1.entity_id("v1")),
                              EntityRef(2, kb2.entity_id("v1q")), LinkType.PARTIAL)])
        g = instantiate_template("T1", kbs, links, np.random.default_rng(0))
        assert g is not None
        assert g.topics == (EntityRef(1, kb1.entity_id("e1")),)
        answers = derive_answers(g, kbs, links)
        assert answers == {EntityRef(2, kb2.entity_id("ans"))}

    def test_impossible_template_returns_none(self):
        kb1 = make_kb(1, [("a", "r", "b")])
        kb2 = make_kb(2, [("x", "q", "y")])
        kbs = KbRegistry([kb1, kb2])
        # no links at all
        assert instantiate_template("T1", kbs, LinkSet(), np.random.default_rng(0)) is None


class TestDeriveAnswers:
    def test_branching_second_hop(self):
        kb1 = make_kb(1, [("e1", "r1", "v1")])
        kb2 = make_kb(2, [("v1q", "r2", "B"), ("v1q", "r2", "C")])
        kbs = KbRegistry([kb1, kb2])
        links = LinkSet([Link(EntityRef(1, kb1.entity_id("v1")),
                              EntityRef(2, kb2.entity_id("v1q")), LinkType.FULL)])
        g = QueryGraph("T1", 1, 2, (EntityRef(1, kb1.entity_id("e1")),),
                       ((0, 0),), LinkType.FULL)
        got = derive_answers(g, kbs, links)
        assert got == {EntityRef(2, kb2.entity_id("B")), EntityRef(2, kb2.entity_id("C"))}

    def test_intersection(self):
        kb1 = make_kb(1, [("ea", "ra", "p"), ("ea", "ra", "q")], extra_entities=["r"])
        kb2 = make_kb(2, [("eb", "rb", "u"), ("eb", "rb", "v")])
        kbs = KbRegistry([kb1, kb2])
        links = LinkSet([
            Link(EntityRef(1, kb1.entity_id("q")), EntityRef(2, kb2.entity_id("u")),
                 LinkType.PARTIAL),
            Link(EntityRef(1, kb1.entity_id("r")), EntityRef(2, kb2.entity_id("v")),
                 LinkType.PARTIAL),
        ])
        g = QueryGraph("T2", 1, 2,
                       (EntityRef(1, kb1.entity_id("ea")), EntityRef(2, kb2.entity_id("eb"))),
                       ((0,), (0,)), LinkType.PARTIAL)
        assert derive_answers(g, kbs, links) == {EntityRef(1, kb1.entity_id("q"))}

    def test_agrees_with_binding_oracle(self):
        cfg = small_cfg()
        kb1, kb2, links = generate_synthetic_kbs(cfg)
        kbs = KbRegistry([kb1, kb2])
        rng = np.random.default_rng(3)
        checked = 0
        for tid in TEMPLATES:
            for lt in (LinkType.FULL, LinkType.PARTIAL):
                g = instantiate_template(tid, kbs, links, rng, link_type=lt)
                if g is None:
                    continue
                assert derive_answers(g, kbs, links) == enumerate_answers(g, kbs, links)
                checked += 1
        assert checked >= 8


class TestVerbalize:
    def test_identical_graphs_identical_strings(self, world):
        kbs, links = world
        g = instantiate_template("T4", kbs, links, np.random.default_rng(4))
        assert verbalize(g, kbs) == verbalize(g, kbs)

    def test_topic_name_appears_exactly_once(self, world):
        kbs, links = world
        rng = np.random.default_rng(5)
        for tid in TEMPLATES:
            g = instantiate_template(tid, kbs, links, rng)
            if g is None:
                continue
            text = verbalize(g, kbs)
            for t in g.topics:
                name = kbs[t.kb_id].entity_name(t.local_id)
                assert text.count(name) == 1

    def test_mentions_exactly_the_bound_symbols(self, world):
        kbs, links = world
        rng = np.random.default_rng(6)
        spec = TEMPLATES["T6"]
        g = instantiate_template("T6", kbs, links, rng)
        text = verbalize(g, kbs)
        bound_rels = []
        rels = iter(g.relations[0])
        for kind, side in spec.chains[0]:
            if kind == "rel":
                bound_rels.append(kbs[g.side_kb(side)].relations[next(rels)])
        for name in bound_rels:
            assert name in text
        # no other relation name appears
        for kb in kbs:
            for rname in kb.relations:
                if rname not in bound_rels:
                    assert rname not in text


class TestGenerateDataset:
    def test_quotas_and_cells(self, bench):
        cfg, kbs, links, splits = bench
        records = [r for recs in splits.values() for r in recs]
        assert len(records) <= cfg.questions_per_cell * len(dataset_cells())
        by_cell = {}
        for r in records:
            by_cell.setdefault((r.template, r.link_type), []).append(r)
        for cell, recs in by_cell.items():
            assert len(recs) <= cfg.questions_per_cell
        # partial cells exist only for two-hop templates
        for (tid, lt) in by_cell:
            if lt == LinkType.PARTIAL:
                assert tid in PARTIAL_TEMPLATES

    def test_answers_equal_graph_derivation(self, bench):
        _, kbs, links, splits = bench
        for recs in splits.values():
            for rec in recs:
                g = QueryGraph.from_dict(rec.graph)
                assert derive_answers(g, kbs, links) == rec.answers
                assert rec.template == g.template
                assert rec.link_type == g.link_type

    def test_split_proportions_per_cell(self, bench):
        cfg, _, _, splits = bench
        cells = {}
        for split, recs in splits.items():
            for r in recs:
                cells.setdefault((r.template, r.link_type), {"train": 0, "dev": 0, "test": 0})
                cells[(r.template, r.link_type)][split] += 1
        for counts in cells.values():
            n = sum(counts.values())
            assert abs(counts["dev"] - 0.1 * n) <= 1
            assert abs(counts["test"] - 0.1 * n) <= 1

    def test_no_empty_or_duplicate_answers(self, bench):
        _, _, _, splits = bench
        for recs in splits.values():
            for rec in recs:
                assert rec.answers  # frozenset is deduplicated by construction

    def test_round_trip_through_files(self, bench, tmp_path):
        cfg, kbs, links, splits = bench
        write_benchmark(tmp_path, kbs[1], kbs[2], links, splits, cfg)
        kbs2, links2, splits2 = load_benchmark(tmp_path)
        assert set(links2.links) == set(links.links)
        for split in splits:
            assert len(splits2[split]) == len(splits[split])
            for a, b in zip(splits[split], splits2[split]):
                assert a.text == b.text
                assert a.answers == b.answers
                assert a.topic_entities == b.topic_entities
                assert a.graph == b.graph
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == cfg.seed


class TestMergeFailureScenario:
    def test_shape(self):
        cfg = MergeFailureConfig(n_pairs=5, seed=1)
        kbs, links, splits = generate_merge_failure_scenario(cfg)
        assert all(ln.t == LinkType.PARTIAL for ln in links)
        assert len(links) == 5
        records = splits["train"] + splits["dev"]
        assert len(records) == 10
        for rec in records:
            kb = kbs[rec.topic_entities[0].kb_id]
            topic = rec.topic_entities[0]
            assert rec.answers == kb.neighbors(topic, 0)
            # answers stay inside the topic's KB; the partial partner's
            # neighbors live in the other KB
            assert {a.kb_id for a in rec.answers} == {topic.kb_id}

    def test_deterministic(self):
        cfg = MergeFailureConfig(n_pairs=4, seed=2)
        a = generate_merge_failure_scenario(cfg)
        b = generate_merge_failure_scenario(cfg)
        assert a[0][1].entities == b[0][1].entities
        assert [r.text for r in a[2]["train"]] == [r.text for r in b[2]["train"]]
