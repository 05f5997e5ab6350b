"""Ranking metrics and the end-to-end system variants.

Four variants share the pipeline: ``no-link`` embeds each KB separately
and ignores links; ``merge-kb`` fuses the KBs on full links and embeds
the single merged graph (gold answers are mapped through the merge
provenance); ``full-link`` trains the link-aware embedding on full links
only; ``multi-kb`` uses all generalized links.  Reports carry overall
MRR / Hits@1, a per-(template, link type) breakdown, per-question ranks,
and mean/stddev across seeds.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .benchmark import load_benchmark
from .embedding import EmbeddingModel, TrainConfig, train_embedding
from .kb import EntityRef, KbRegistry, LinkSet, LinkType, merge_full_links
from .qa import QaConfig, QaModel, best_gold_ranks, train_qa
from .records import QuestionRecord


class Variant(str, Enum):
    NO_LINK = "no-link"
    MERGE_KB = "merge-kb"
    FULL_LINK = "full-link"
    MULTI_KB = "multi-kb"


def mrr(ranked: Sequence, golds: set) -> float:
    """Reciprocal of the best (smallest) 1-based rank of any gold answer.

    ``ranked`` holds candidates best-first, either refs or (ref, score)
    pairs.  Defined as 0 when no gold appears among the candidates.
    """
    if not golds:
        raise ValueError("gold answer set must be non-empty")
    for rank, item in enumerate(ranked, start=1):
        ref = item[0] if isinstance(item, tuple) else item
        if ref in golds:
            return 1.0 / rank
    return 0.0


def hits_at_1(ranked: Sequence, golds: set) -> int:
    """1 iff the top-ranked candidate is a gold answer."""
    if not golds:
        raise ValueError("gold answer set must be non-empty")
    first = ranked[0]
    ref = first[0] if isinstance(first, tuple) else first
    return 1 if ref in golds else 0


@dataclass
class QuestionOutcome:
    index: int
    template: str
    link_type: str
    best_rank: int  # 0 when no gold is reachable

    @property
    def reciprocal(self) -> float:
        return 1.0 / self.best_rank if self.best_rank > 0 else 0.0

    @property
    def hit(self) -> int:
        return 1 if self.best_rank == 1 else 0


@dataclass
class RunReport:
    seed: int
    mrr: float
    hits1: float
    n_questions: int
    n_unreachable: int
    breakdown: dict[str, float]
    per_question: list[QuestionOutcome]


@dataclass
class EvalReport:
    variant: str
    split: str
    seeds: list[int]
    runs: list[RunReport]
    mean_mrr: float
    std_mrr: float
    mean_hits1: float
    std_hits1: float

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for run in d["runs"]:
            for q in run["per_question"]:
                q["reciprocal"] = 1.0 / q["best_rank"] if q["best_rank"] > 0 else 0.0
        return d

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def breakdown(outcomes: Sequence[QuestionOutcome]) -> dict[str, float]:
    """Per-cell mean reciprocal rank keyed ``template/link_type``."""
    cells: dict[str, list[float]] = {}
    for o in outcomes:
        cells.setdefault(f"{o.template}/{o.link_type}", []).append(o.reciprocal)
    return {k: float(np.mean(v)) for k, v in sorted(cells.items())}


def evaluate_questions(
    model: QaModel,
    records: Sequence[QuestionRecord],
    candidates: Optional[Sequence[EntityRef]] = None,
) -> list[QuestionOutcome]:
    ranks = best_gold_ranks(model, records, candidates)
    return [
        QuestionOutcome(i, rec.template, str(rec.link_type), rank)
        for i, (rec, rank) in enumerate(zip(records, ranks))
    ]


def _map_record(rec: QuestionRecord, provenance: dict, merged_kb_id: int) -> QuestionRecord:
    topics = tuple(
        dict.fromkeys(
            EntityRef(merged_kb_id, provenance[e]) for e in rec.topic_entities
        )
    )
    answers = frozenset(EntityRef(merged_kb_id, provenance[a]) for a in rec.answers)
    return QuestionRecord(
        text=rec.text,
        topic_entities=topics,
        answers=answers,
        template=rec.template,
        link_type=rec.link_type,
        graph=rec.graph,
    )


def map_records_through_merge(
    records: Sequence[QuestionRecord], provenance: dict, merged_kb_id: int = 0
) -> list[QuestionRecord]:
    """Re-point topics and gold answers at merged entity ids."""
    return [_map_record(r, provenance, merged_kb_id) for r in records]


@dataclass
class VariantRun:
    """Trained artifacts of one seed of one variant (kept for inspection)."""

    seed: int
    embedding: EmbeddingModel
    qa: QaModel
    records: dict[str, list[QuestionRecord]]


def train_variant(
    variant: Variant,
    kbs: KbRegistry,
    links: LinkSet,
    splits: dict[str, list[QuestionRecord]],
    kbe_cfg: TrainConfig,
    qa_cfg: QaConfig,
    seed: int,
    merge_partial: bool = False,
) -> VariantRun:
    """Train embedding + QA for one variant and seed."""
    kbe = replace(kbe_cfg, seed=seed)
    qac = replace(qa_cfg, seed=seed)
    records = dict(splits)

    if variant == Variant.MERGE_KB:
        merged, provenance = merge_full_links(kbs, links, include_partial=merge_partial)
        kbs = KbRegistry([merged])
        records = {
            k: map_records_through_merge(v, provenance, merged.kb_id)
            for k, v in records.items()
        }
        model = train_embedding(kbs, LinkSet(), kbe)
    elif variant == Variant.NO_LINK:
        model = train_embedding(kbs, LinkSet(), kbe)
    elif variant == Variant.FULL_LINK:
        model = train_embedding(kbs, links.restrict(LinkType.FULL), kbe)
    elif variant == Variant.MULTI_KB:
        model = train_embedding(kbs, links, kbe)
    else:
        raise ValueError(f"unknown variant {variant}")

    qa_model = train_qa(model, records["train"], records["dev"], qac)
    return VariantRun(seed, model, qa_model, records)


def run_variant(
    variant: Variant | str,
    data,
    kbe_cfg: TrainConfig,
    qa_cfg: QaConfig,
    seeds: Sequence[int] = (13, 17, 19),
    split: str = "dev",
    unplug: Sequence[int] = (),
    merge_partial: bool = False,
) -> EvalReport:
    """Run the end-to-end pipeline for one variant over several seeds.

    ``data`` is a benchmark directory or a loaded ``(kbs, links, splits)``
    triple.  ``unplug`` removes whole KBs from the candidate set at
    inference; questions whose golds all live in unplugged KBs score 0
    and are counted separately.
    """
    variant = Variant(variant)
    if isinstance(data, (str, Path)):
        kbs, links, splits = load_benchmark(data)
    else:
        kbs, links, splits = data
    if unplug and variant == Variant.MERGE_KB:
        raise ValueError("plug-out is undefined on a merged graph")

    runs: list[RunReport] = []
    for seed in seeds:
        art = train_variant(
            variant, kbs, links, splits, kbe_cfg, qa_cfg, seed, merge_partial
        )
        eval_records = art.records[split]
        candidates = art.qa.universe(exclude_kbs=tuple(unplug))
        outcomes = evaluate_questions(art.qa, eval_records, candidates)
        recips = [o.reciprocal for o in outcomes]
        hits = [o.hit for o in outcomes]
        runs.append(
            RunReport(
                seed=seed,
                mrr=float(np.mean(recips)) if recips else 0.0,
                hits1=float(np.mean(hits)) if hits else 0.0,
                n_questions=len(outcomes),
                n_unreachable=sum(1 for o in outcomes if o.best_rank == 0),
                breakdown=breakdown(outcomes),
                per_question=outcomes,
            )
        )

    mrrs = [r.mrr for r in runs]
    hits1 = [r.hits1 for r in runs]
    std = lambda xs: float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0  # noqa: E731
    return EvalReport(
        variant=variant.value,
        split=split,
        seeds=list(seeds),
        runs=runs,
        mean_mrr=float(np.mean(mrrs)),
        std_mrr=std(mrrs),
        mean_hits1=float(np.mean(hits1)),
        std_hits1=std(hits1),
    )


def report_table(report: EvalReport) -> str:
    """Human-readable summary table."""
    lines = [
        f"variant: {report.variant}   split: {report.split}   "
        f"seeds: {','.join(str(s) for s in report.seeds)}",
        f"MRR    {report.mean_mrr:.3f} +- {report.std_mrr:.3f}",
        f"Hits@1 {report.mean_hits1:.3f} +- {report.std_hits1:.3f}",
    ]
    cells: dict[str, list[float]] = {}
    for run in report.runs:
        for cell, value in run.breakdown.items():
            cells.setdefault(cell, []).append(value)
    if cells:
        lines.append("breakdown (mean MRR per template/link type):")
        for cell in sorted(cells):
            lines.append(f"  {cell:<16} {float(np.mean(cells[cell])):.3f}")
    unreachable = sum(r.n_unreachable for r in report.runs)
    if unreachable:
        lines.append(f"questions with no reachable gold: {unreachable} (scored 0)")
    return "\n".join(lines)


def breakdown_csv(report: EvalReport) -> str:
    """Breakdown cells as CSV (one row per template/link type/seed)."""
    rows = ["variant,split,template,link_type,seed,mrr"]
    for run in report.runs:
        for cell, value in sorted(run.breakdown.items()):
            template, link_type = cell.split("/")
            rows.append(
                f"{report.variant},{report.split},{template},{link_type},{run.seed},{value:.6f}"
            )
    return "\n".join(rows) + "\n"
