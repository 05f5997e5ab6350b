"""Question records and their JSONL serialization.

One JSON object per line with fields ``text``, ``topic_entities``,
``answers``, ``template`` and ``link_type``.  Entities are written in
the canonical ``"kb_id:local_id"`` form; readers also accept entity
names resolvable against the loaded KBs.  Generated benchmarks attach
the serialized query graph under the optional ``graph`` key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .kb import EntityRef, KbRegistry, LinkType


@dataclass
class QuestionRecord:
    text: str
    topic_entities: tuple[EntityRef, ...]
    answers: frozenset[EntityRef]
    template: str
    link_type: LinkType
    graph: Optional[dict] = None
    tokens: Optional[list[int]] = None

    def __post_init__(self) -> None:
        if not self.topic_entities:
            raise ValueError("a question needs at least one topic entity")
        if not self.answers:
            raise ValueError("a question needs a non-empty gold answer set")


def _ref_to_str(e: EntityRef) -> str:
    return str(e)


def _ref_from_str(s: str, kbs: Optional[KbRegistry]) -> EntityRef:
    head = s.split(":", 1)[0]
    if head.isdigit():
        return EntityRef.parse(s)
    if kbs is None:
        raise ValueError(f"cannot resolve entity name {s!r} without loaded KBs")
    matches = []
    for kb in kbs:
        try:
            matches.append(EntityRef(kb.kb_id, kb.entity_id(s)))
        except KeyError:
            continue
    if not matches:
        raise KeyError(f"unknown entity {s!r} in any loaded KB")
    if len(matches) > 1:
        raise ValueError(f"entity name {s!r} is ambiguous across KBs")
    return matches[0]


def record_to_dict(rec: QuestionRecord) -> dict:
    d = {
        "text": rec.text,
        "topic_entities": [_ref_to_str(e) for e in rec.topic_entities],
        "answers": sorted(_ref_to_str(e) for e in rec.answers),
        "template": rec.template,
        "link_type": str(rec.link_type),
    }
    if rec.graph is not None:
        d["graph"] = rec.graph
    return d


def record_from_dict(d: dict, kbs: Optional[KbRegistry] = None) -> QuestionRecord:
    return QuestionRecord(
        text=d["text"],
        topic_entities=tuple(_ref_from_str(s, kbs) for s in d["topic_entities"]),
        answers=frozenset(_ref_from_str(s, kbs) for s in d["answers"]),
        template=d["template"],
        link_type=LinkType.from_string(d["link_type"]),
        graph=d.get("graph"),
    )


def write_jsonl(records: Iterable[QuestionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(record_to_dict(rec), sort_keys=True) + "\n")


def read_jsonl(path: str | Path, kbs: Optional[KbRegistry] = None) -> list[QuestionRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(record_from_dict(json.loads(line), kbs))
    return out
