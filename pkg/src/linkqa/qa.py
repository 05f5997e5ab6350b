"""Question encoding and answer ranking over a frozen KB embedding.

Questions are tokenized (lowercase, alphanumeric/underscore runs), mean
token embeddings are projected into the packed complex layout, and a
candidate answer is scored by the trilinear function with the question
vector in the relation slot.  Scores from multiple topic entities are
averaged after the sigmoid.  Only the encoder trains; the KB embedding
is never mutated.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, asdict
from typing import Iterable, Optional, Sequence

import numpy as np

from . import cvec
from .cvec import sigmoid
from .embedding import Adam, EmbeddingModel
from .kb import EntityRef
from .records import QuestionRecord

UNK = "<unk>"

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def build_vocab(texts: Iterable[str]) -> dict[str, int]:
    vocab = {UNK: 0}
    for text in texts:
        for tok in tokenize(text):
            vocab.setdefault(tok, len(vocab))
    return vocab


@dataclass
class QaConfig:
    d: int = 1024
    batch_qa: int = 32
    lr_qa: float = 1e-5
    n_qa: int = 1000
    k_qa: int = 500
    gamma_qa: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 13
    eval_every: int = 5

    def __post_init__(self) -> None:
        if self.lr_qa <= 0:
            raise ValueError("lr_qa must be positive")
        if not 0.0 <= self.gamma_qa < 0.5:
            raise ValueError("gamma_qa must lie in [0, 0.5)")


class QuestionEncoder:
    """Trainable mean-of-token-embeddings encoder with an affine projection.

    ``tok_emb`` has shape (vocab, d); the projection maps d reals to 2h
    reals read as a packed complex vector.
    """

    def __init__(self, vocab: dict[str, int], params: dict[str, np.ndarray]) -> None:
        self.vocab = vocab
        self.params = params

    @classmethod
    def initialize(
        cls, vocab: dict[str, int], d: int, h: int, rng: np.random.Generator
    ) -> "QuestionEncoder":
        params = {
            "tok_emb": rng.normal(0.0, 1.0 / np.sqrt(d), (len(vocab), d)),
            # zero projection: every question starts at likelihood 0.5
            "proj_w": np.zeros((2 * h, d)),
            "proj_b": np.zeros(2 * h),
        }
        return cls(dict(vocab), params)

    @property
    def d(self) -> int:
        return self.params["tok_emb"].shape[1]

    def token_ids(self, text: str) -> np.ndarray:
        ids = [self.vocab.get(tok, 0) for tok in tokenize(text)]
        if not ids:
            ids = [0]
        return np.asarray(ids, dtype=np.int64)

    def encode_ids(self, ids: np.ndarray) -> np.ndarray:
        v = self.params["tok_emb"][ids].mean(axis=0)
        return self.params["proj_w"] @ v + self.params["proj_b"]

    def encode(self, text: str) -> np.ndarray:
        return self.encode_ids(self.token_ids(text))

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


class QaModel:
    """A trained question encoder bound to a frozen KB embedding."""

    def __init__(
        self,
        encoder: QuestionEncoder,
        embedding: EmbeddingModel,
        meta: Optional[dict] = None,
    ) -> None:
        self.encoder = encoder
        self.embedding = embedding
        self.meta = dict(meta or {})

    def universe(self, exclude_kbs: Sequence[int] = ()) -> list[EntityRef]:
        """Every entity of every embedded KB, minus unplugged namespaces."""
        out = []
        for kb_id in self.embedding.kb_ids:
            if kb_id in exclude_kbs:
                continue
            n = self.embedding.entity_table(kb_id).shape[0]
            out.extend(EntityRef(kb_id, i) for i in range(n))
        return out

    def encode_question(self, q: QuestionRecord | str) -> np.ndarray:
        if isinstance(q, str):
            return self.encoder.encode(q)
        if q.tokens is None:
            q.tokens = self.encoder.token_ids(q.text).tolist()
        return self.encoder.encode_ids(np.asarray(q.tokens, dtype=np.int64))

    def score_answer(self, e: EntityRef, hq: np.ndarray, a: EntityRef) -> float:
        x = cvec.score(self.embedding.entity_vec(e), hq, self.embedding.entity_vec(a))
        return float(sigmoid(x))

    def rank_answers(
        self,
        q: QuestionRecord,
        candidates: Optional[Sequence[EntityRef]] = None,
    ) -> list[tuple[EntityRef, float]]:
        """Candidates sorted by topic-averaged likelihood, descending.

        Ties break by (kb_id, local_id) ascending; the full ordering is
        returned.  Scores are per-entity, so restricting the candidate
        set never reorders surviving entities.
        """
        cands = list(candidates) if candidates is not None else self.universe()
        if not cands:
            raise ValueError("candidate set must be non-empty")
        hq = self.encode_question(q)
        mat = np.stack([self.embedding.entity_vec(c) for c in cands])
        total = np.zeros(len(cands))
        for e in q.topic_entities:
            comp = cvec.cmul(self.embedding.entity_vec(e), hq)
            total += sigmoid(cvec.score_against_table(comp, mat))
        avg = total / len(q.topic_entities)
        kbids = np.array([c.kb_id for c in cands])
        locals_ = np.array([c.local_id for c in cands])
        order = np.lexsort((locals_, kbids, -avg))
        return [(cands[i], float(avg[i])) for i in order]


# -- training ------------------------------------------------------------


@dataclass
class QaExample:
    """One question prepared for the loss: everything indexes the stacked
    entity matrix except the token ids."""

    token_ids: np.ndarray
    topics: np.ndarray
    golds: np.ndarray
    negs: np.ndarray


class _Universe:
    """Stacked entity matrix over all embedded KBs with ref<->row maps."""

    def __init__(self, embedding: EmbeddingModel) -> None:
        self.kb_ids = list(embedding.kb_ids)
        self.offsets: dict[int, int] = {}
        mats = []
        total = 0
        for kb_id in self.kb_ids:
            table = embedding.entity_table(kb_id)
            self.offsets[kb_id] = total
            total += table.shape[0]
            mats.append(table)
        self.matrix = np.vstack(mats)
        self.refs: list[EntityRef] = []
        for kb_id in self.kb_ids:
            n = embedding.entity_table(kb_id).shape[0]
            self.refs.extend(EntityRef(kb_id, i) for i in range(n))

    def row(self, e: EntityRef) -> int:
        return self.offsets[e.kb_id] + e.local_id

    def __len__(self) -> int:
        return self.matrix.shape[0]


def _sample_qa_negatives(
    n_universe: int, golds: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    forbidden = set(int(g) for g in golds)
    negs = rng.integers(0, n_universe, size=k)
    bad = np.array([c in forbidden for c in negs])
    attempts = 0
    while bad.any() and attempts < 100 * k:
        n_bad = int(bad.sum())
        negs[bad] = rng.integers(0, n_universe, size=n_bad)
        bad = np.array([c in forbidden for c in negs])
        attempts += n_bad
    return negs


def make_qa_batch(
    records: Sequence[QuestionRecord],
    encoder: QuestionEncoder,
    universe: _Universe,
    cfg: QaConfig,
    rng: np.random.Generator,
) -> list[QaExample]:
    out = []
    for rec in records:
        golds = np.asarray(sorted(universe.row(a) for a in rec.answers), dtype=np.int64)
        topics = np.asarray([universe.row(e) for e in rec.topic_entities], dtype=np.int64)
        negs = _sample_qa_negatives(len(universe), golds, cfg.k_qa, rng)
        out.append(QaExample(encoder.token_ids(rec.text), topics, golds, negs))
    return out


def loss_q(
    encoder: QuestionEncoder,
    universe: _Universe,
    batch: Sequence[QaExample],
    cfg: QaConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Contrastive QA loss and analytic gradients for the encoder only."""
    tok_emb = encoder.params["tok_emb"]
    proj_w = encoder.params["proj_w"]
    proj_b = encoder.params["proj_b"]
    emat = universe.matrix

    g_tok = np.zeros_like(tok_emb)
    g_w = np.zeros_like(proj_w)
    g_b = np.zeros_like(proj_b)
    total = 0.0
    b = len(batch)
    for ex in batch:
        v = tok_emb[ex.token_ids].mean(axis=0)
        hq = proj_w @ v + proj_b
        d_hq = np.zeros_like(hq)
        cand = np.concatenate([ex.golds, ex.negs])
        targets = np.concatenate(
            [
                np.full(len(ex.golds), 1.0 - cfg.gamma_qa),
                np.full(len(ex.negs), cfg.gamma_qa),
            ]
        )
        cand_vecs = emat[cand]
        for t_row in ex.topics:
            h_e = emat[t_row]
            x = cvec.score(np.broadcast_to(h_e, cand_vecs.shape),
                           np.broadcast_to(hq, cand_vecs.shape), cand_vecs)
            loss_vec = targets * np.logaddexp(0.0, -x) + (1.0 - targets) * np.logaddexp(0.0, x)
            total += float(loss_vec.sum()) / b
            g = (sigmoid(x) - targets) / b
            weighted = g @ cand_vecs
            d_hq += cvec.cmul(cvec.conj(h_e), weighted)
        g_w += np.outer(d_hq, v)
        g_b += d_hq
        d_v = proj_w.T @ d_hq
        np.add.at(g_tok, ex.token_ids, d_v / len(ex.token_ids))
    return total, {"tok_emb": g_tok, "proj_w": g_w, "proj_b": g_b}


def best_gold_ranks(
    model: QaModel,
    records: Sequence[QuestionRecord],
    candidates: Optional[Sequence[EntityRef]] = None,
) -> list[int]:
    """1-based rank of the best gold answer per record; 0 when no gold
    survives the candidate restriction.

    Equivalent to scanning :meth:`QaModel.rank_answers` but shares one
    candidate matrix across records.
    """
    cands = list(candidates) if candidates is not None else model.universe()
    if not cands:
        raise ValueError("candidate set must be non-empty")
    mat = np.stack([model.embedding.entity_vec(c) for c in cands])
    kbids = np.array([c.kb_id for c in cands])
    locals_ = np.array([c.local_id for c in cands])
    row_of = {c: i for i, c in enumerate(cands)}

    out = []
    for rec in records:
        gold_rows = [row_of[a] for a in rec.answers if a in row_of]
        if not gold_rows:
            out.append(0)
            continue
        hq = model.encode_question(rec)
        total = np.zeros(len(cands))
        for e in rec.topic_entities:
            comp = cvec.cmul(model.embedding.entity_vec(e), hq)
            total += sigmoid(cvec.score_against_table(comp, mat))
        avg = total / len(rec.topic_entities)
        order = np.lexsort((locals_, kbids, -avg))
        ranks = np.empty(len(cands), dtype=np.int64)
        ranks[order] = np.arange(1, len(cands) + 1)
        out.append(int(ranks[gold_rows].min()))
    return out


def evaluate_mrr(
    model: QaModel,
    records: Sequence[QuestionRecord],
    candidates: Optional[Sequence[EntityRef]] = None,
) -> float:
    """Mean reciprocal best-gold rank over records (0 when no gold ranks)."""
    if not records:
        return 0.0
    ranks = best_gold_ranks(model, records, candidates)
    return float(np.mean([1.0 / r if r > 0 else 0.0 for r in ranks]))


def train_qa(
    embedding: EmbeddingModel,
    train_records: Sequence[QuestionRecord],
    dev_records: Sequence[QuestionRecord],
    cfg: QaConfig,
) -> QaModel:
    """Train the question encoder against a frozen embedding.

    Negative answers are drawn uniformly from the whole entity universe
    excluding gold answers.  The encoder snapshot with the highest dev
    MRR is kept (full-universe candidates).
    """
    if not train_records:
        raise ValueError("no training questions")
    rng = np.random.default_rng(cfg.seed)
    vocab = build_vocab(rec.text for rec in train_records)
    encoder = QuestionEncoder.initialize(vocab, cfg.d, embedding.h, rng)
    universe = _Universe(embedding)
    model = QaModel(encoder, embedding)

    opt = Adam(
        encoder.params,
        lr={k: cfg.lr_qa for k in encoder.params},
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )

    best_mrr = -1.0
    best_params = None
    best_epoch = -1
    order = np.arange(len(train_records))
    for epoch in range(cfg.n_qa):
        perm = rng.permutation(order)
        for lo in range(0, len(perm), cfg.batch_qa):
            chunk = [train_records[i] for i in perm[lo : lo + cfg.batch_qa]]
            batch = make_qa_batch(chunk, encoder, universe, cfg, rng)
            loss, grads = loss_q(encoder, universe, batch, cfg)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"QA training diverged: non-finite loss at epoch {epoch}"
                )
            opt.step(grads)
        if dev_records and ((epoch + 1) % cfg.eval_every == 0 or epoch == cfg.n_qa - 1):
            mrr = evaluate_mrr(model, dev_records)
            if mrr > best_mrr:
                best_mrr = mrr
                best_epoch = epoch
                best_params = encoder.copy_params()

    if best_params is not None:
        encoder.params.update(best_params)
    model.meta = {
        "config": asdict(cfg),
        "seed": cfg.seed,
        "train_stats": {"best_dev_mrr": best_mrr, "best_epoch": best_epoch},
    }
    return model


# -- checkpoints ----------------------------------------------------------


def save_qa(model: QaModel, dir_path, embedding_dir=None, extra: Optional[dict] = None) -> None:
    """Write the encoder checkpoint; the frozen embedding is referenced,
    not copied (``embedding_dir`` lands in the manifest)."""
    from pathlib import Path

    from .manifest import write_manifest

    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    np.savez(d / "encoder.npz", **model.encoder.params)
    vocab_list = [None] * len(model.encoder.vocab)
    for tok, idx in model.encoder.vocab.items():
        vocab_list[idx] = tok
    payload = {
        "kind": "qa",
        "vocab": vocab_list,
        "embedding_dir": str(embedding_dir) if embedding_dir is not None else None,
        "meta": model.meta,
    }
    payload.update(extra or {})
    write_manifest(d, payload)


def load_qa(dir_path, embedding: Optional[EmbeddingModel] = None) -> QaModel:
    """Load a QA checkpoint; the embedding is taken from the manifest's
    ``embedding_dir`` unless supplied directly."""
    from pathlib import Path

    from .embedding import load_model
    from .manifest import read_manifest

    d = Path(dir_path)
    info = read_manifest(d)
    if embedding is None:
        if not info.get("embedding_dir"):
            raise ValueError("QA checkpoint does not reference an embedding directory")
        embedding = load_model(info["embedding_dir"])
    with np.load(d / "encoder.npz") as data:
        params = {k: data[k].copy() for k in data.files}
    vocab = {tok: i for i, tok in enumerate(info["vocab"])}
    return QaModel(QuestionEncoder(vocab, params), embedding, meta=info.get("meta"))
