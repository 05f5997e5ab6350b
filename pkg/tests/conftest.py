import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from linkqa.kb import EntityRef, Kb, KbRegistry, Link, LinkSet, LinkType, Triple


def make_kb(kb_id, triples_by_name, types=None, extra_entities=()):
    """Build a Kb from (subject, relation, object) name rows."""
    names, rels = [], []
    name_id, rel_id = {}, {}

    def ent(n):
        if n not in name_id:
            name_id[n] = len(names)
            names.append(n)
        return name_id[n]

    def rel(n):
        if n not in rel_id:
            rel_id[n] = len(rels)
            rels.append(n)
        return rel_id[n]

    triples = set()
    for s, r, o in triples_by_name:
        si, ri, oi = ent(s), rel(r), ent(o)
        triples.add(Triple(EntityRef(kb_id, si), ri, EntityRef(kb_id, oi)))
    for n in extra_entities:
        ent(n)
    types = types or {}
    entities = [(n, types.get(n, "")) for n in names]
    return Kb(kb_id, entities, rels, triples)


@pytest.fixture
def toy_pair():
    """Two tiny typed KBs with one full and one partial link."""
    kb1 = make_kb(
        1,
        [("alpha", "makes", "widget"), ("alpha", "makes", "gadget"),
         ("beta", "owns", "alpha"), ("widget", "uses", "gadget")],
        types={"alpha": "company", "beta": "company", "widget": "product",
               "gadget": "product"},
    )
    kb2 = make_kb(
        2,
        [("alpha", "sector", "tools"), ("tools", "contains", "hardware"),
         ("gamma", "sector", "tools")],
        types={"alpha": "company", "tools": "sector", "hardware": "sector",
               "gamma": "company"},
    )
    full = Link(EntityRef(1, kb1.entity_id("alpha")),
                EntityRef(2, kb2.entity_id("alpha")), LinkType.FULL)
    partial = Link(EntityRef(1, kb1.entity_id("widget")),
                   EntityRef(2, kb2.entity_id("tools")), LinkType.PARTIAL)
    return KbRegistry([kb1, kb2]), LinkSet([full, partial])


@pytest.fixture
def rng():
    return np.random.default_rng(0)
