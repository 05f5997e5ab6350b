"""Link-aware complex embeddings trained jointly over multiple KBs.

Every KB keeps its own entity and relation tables.  Cross-KB links enter
training through *replaced triples*: a triple whose subject is swapped
for one of its link partners from the other KB.  A translator (affine
map over the packed real layout, optionally with one tanh hidden layer)
carries the foreign subject vector, concatenated with a link-type
vector, into the host KB's semantic space before scoring.

Gradients are computed analytically; the optimizer is a dense Adam with
separate learning rates for embedding tables and translator parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Iterable, Optional, Sequence

import numpy as np

from . import cvec
from .cvec import sigmoid
from .kb import EntityRef, Kb, KbRegistry, LinkSet, LinkType, Triple


@dataclass
class TrainConfig:
    """Hyperparameters for embedding training (defaults at paper scale)."""

    h: int = 200
    batch_kbe: int = 128
    n_kbe: int = 400
    n_warm: int = 30
    lr_kbe: float = 1e-3
    lr_trans: float = 5e-4
    k_kbe: int = 1000
    k_pl: int = 10
    gamma_kbe: float = 0.1
    p_kbe: float = 0.3
    r_lk: float = 2.25
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 13
    dropout_relations: bool = True
    translator_hidden: int = 0
    mrr_sample: int = 2000
    mrr_every: int = 1

    def __post_init__(self) -> None:
        if self.h < 1 or self.batch_kbe < 1 or self.k_kbe < 1 or self.k_pl < 1:
            raise ValueError("h, batch_kbe, k_kbe, k_pl must be positive")
        if self.lr_kbe <= 0 or self.lr_trans <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.gamma_kbe < 0.5:
            raise ValueError("gamma_kbe must lie in [0, 0.5)")
        if not 0.0 <= self.p_kbe < 1.0:
            raise ValueError("p_kbe must lie in [0, 1)")


@dataclass(frozen=True)
class ReplacedTriple:
    """A KB triple with its subject swapped for a cross-KB link partner.

    ``source_subject`` is the original subject; it keys the
    negative-sample filter against the raw KB.
    """

    new_subject: EntityRef
    relation: int
    object: EntityRef
    link_type: LinkType
    source_subject: EntityRef

    def __post_init__(self) -> None:
        if self.new_subject.kb_id == self.object.kb_id:
            raise ValueError("replaced subject must come from a different KB")


def build_replace_sets(
    kbs: KbRegistry, links: LinkSet, k_pl: int = 1
) -> list[ReplacedTriple]:
    """Emit one replaced triple per (triple, link partner of its subject).

    Both directions are covered; entries stemming from partial links are
    duplicated ``k_pl`` times.
    """
    out: list[ReplacedTriple] = []
    for kb in kbs:
        for s, r, o in kb.triple_rows():
            subj = EntityRef(kb.kb_id, s)
            for partner, t in sorted(links.partners(subj)):
                entry = ReplacedTriple(partner, r, EntityRef(kb.kb_id, o), t, subj)
                copies = k_pl if t == LinkType.PARTIAL else 1
                out.extend([entry] * copies)
    return out


class EmbeddingModel:
    """Per-KB complex embedding tables plus link-type vectors and translator.

    Parameters live in ``params``: ``entity:<kb_id>`` and
    ``relation:<kb_id>`` tables of shape (n, 2h), ``link_types`` of shape
    (2, 2h), and the translator weights (``trans_w``/``trans_b``, or the
    ``trans_w1..b2`` quartet for the hidden-layer variant).
    """

    def __init__(
        self,
        h: int,
        kb_ids: Sequence[int],
        params: dict[str, np.ndarray],
        translator_hidden: int = 0,
        meta: Optional[dict] = None,
    ) -> None:
        self.h = h
        self.kb_ids = sorted(kb_ids)
        self.params = params
        self.translator_hidden = translator_hidden
        self.meta = dict(meta or {})

    # -- construction ------------------------------------------------------

    @classmethod
    def initialize(
        cls, kbs: KbRegistry, cfg: TrainConfig, rng: np.random.Generator
    ) -> "EmbeddingModel":
        h = cfg.h
        params: dict[str, np.ndarray] = {}
        scale = 1.0 / np.sqrt(h)
        for kb in kbs:
            params[f"entity:{kb.kb_id}"] = rng.normal(0.0, scale, (kb.n_entities, 2 * h))
            params[f"relation:{kb.kb_id}"] = rng.normal(0.0, scale, (max(kb.n_relations, 1), 2 * h))
        params["link_types"] = rng.normal(0.0, scale, (2, 2 * h))
        params.update(cls._init_translator(h, cfg.translator_hidden, rng))
        return cls(h, kbs.kb_ids(), params, cfg.translator_hidden)

    @staticmethod
    def _init_translator(
        h: int, hidden: int, rng: np.random.Generator
    ) -> dict[str, np.ndarray]:
        if hidden <= 0:
            # identity left block, zero right block: training starts from
            # "no translation"
            w = np.zeros((2 * h, 4 * h))
            w[:, : 2 * h] = np.eye(2 * h)
            return {"trans_w": w, "trans_b": np.zeros(2 * h)}
        return {
            "trans_w1": rng.normal(0.0, 1.0 / np.sqrt(4 * h), (hidden, 4 * h)),
            "trans_b1": np.zeros(hidden),
            "trans_w2": rng.normal(0.0, 1.0 / np.sqrt(hidden), (2 * h, hidden)),
            "trans_b2": np.zeros(2 * h),
        }

    # -- accessors -----------------------------------------------------------

    def entity_table(self, kb_id: int) -> np.ndarray:
        return self.params[f"entity:{kb_id}"]

    def relation_table(self, kb_id: int) -> np.ndarray:
        return self.params[f"relation:{kb_id}"]

    def entity_vec(self, e: EntityRef) -> np.ndarray:
        return self.entity_table(e.kb_id)[e.local_id]

    def embedding_param_names(self) -> list[str]:
        names = [f"entity:{k}" for k in self.kb_ids]
        names += [f"relation:{k}" for k in self.kb_ids]
        names.append("link_types")
        return names

    def translator_param_names(self) -> list[str]:
        if self.translator_hidden <= 0:
            return ["trans_w", "trans_b"]
        return ["trans_w1", "trans_b1", "trans_w2", "trans_b2"]

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    # -- inference ------------------------------------------------------------

    def translate(self, vec: np.ndarray, t) -> np.ndarray:
        """Carry foreign subject vectors into the host space.

        ``vec`` has shape (..., 2h); ``t`` is a link type (or an int array
        broadcasting with the leading axes).
        """
        tvec = self.params["link_types"][np.asarray(t, dtype=int)]
        tvec = np.broadcast_to(tvec, vec.shape)
        u = np.concatenate([vec, tvec], axis=-1)
        if self.translator_hidden <= 0:
            return u @ self.params["trans_w"].T + self.params["trans_b"]
        a = np.tanh(u @ self.params["trans_w1"].T + self.params["trans_b1"])
        return a @ self.params["trans_w2"].T + self.params["trans_b2"]

    def triple_likelihood(self, s: EntityRef, r: int, o: EntityRef) -> float:
        """Sigmoid of the trilinear score of an in-KB triple."""
        if s.kb_id != o.kb_id:
            raise ValueError(
                f"triple crosses KBs ({s} vs {o}); use score_replaced for links"
            )
        x = cvec.score(self.entity_vec(s), self.relation_table(s.kb_id)[r], self.entity_vec(o))
        return float(sigmoid(x))

    def score_replaced(self, rt: ReplacedTriple) -> float:
        translated = self.translate(self.entity_vec(rt.new_subject), int(rt.link_type))
        kb_id = rt.object.kb_id
        x = cvec.score(translated, self.relation_table(kb_id)[rt.relation], self.entity_vec(rt.object))
        return float(sigmoid(x))

    def likelihoods(self, kb_id: int, rows: np.ndarray) -> np.ndarray:
        """Vectorized triple likelihoods for (n, 3) local-id rows."""
        ent = self.entity_table(kb_id)
        rel = self.relation_table(kb_id)
        x = cvec.score(ent[rows[:, 0]], rel[rows[:, 1]], ent[rows[:, 2]])
        return sigmoid(x)


# -- negative sampling -------------------------------------------------------


def sample_negatives(
    kb: Kb, s: int, r: int, o: int, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw up to k entities uniformly from kb with <s, r, cand> not in kb.

    Resamples on collision with a budget of 100*k attempts, after which
    fewer than k samples may be returned (degenerate KBs).
    """
    forbidden = set(kb.objects_of(s, r))
    out: list[int] = []
    attempts = 0
    budget = 100 * k
    while len(out) < k and attempts < budget:
        need = k - len(out)
        draw = rng.integers(0, kb.n_entities, size=need)
        attempts += need
        out.extend(int(c) for c in draw if c not in forbidden)
    return np.asarray(out[:k], dtype=np.int64)


def _sample_negative_matrix(
    kb: Kb, s: np.ndarray, r: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized (B, k) negative object draw with per-row filtering."""
    b = len(s)
    negs = rng.integers(0, kb.n_entities, size=(b, k))
    for i in range(b):
        forbidden = set(kb.objects_of(int(s[i]), int(r[i])))
        if not forbidden:
            continue
        row = negs[i]
        bad = np.array([c in forbidden for c in row])
        attempts = 0
        while bad.any() and attempts < 100 * k:
            n_bad = int(bad.sum())
            redraw = rng.integers(0, kb.n_entities, size=n_bad)
            row[bad] = redraw
            bad = np.array([c in forbidden for c in row])
            attempts += n_bad
        # budget exhausted: rare false negatives are tolerated
    return negs


# -- contrastive losses ------------------------------------------------------


@dataclass
class RawBatch:
    kb_id: int
    s: np.ndarray
    r: np.ndarray
    o: np.ndarray
    negs: np.ndarray
    mask_s: Optional[np.ndarray] = None
    mask_r: Optional[np.ndarray] = None
    mask_o: Optional[np.ndarray] = None
    mask_n: Optional[np.ndarray] = None


@dataclass
class LinkBatch:
    s_kb: int
    o_kb: int
    s: np.ndarray
    r: np.ndarray
    o: np.ndarray
    t: np.ndarray
    negs: np.ndarray
    mask_s: Optional[np.ndarray] = None
    mask_r: Optional[np.ndarray] = None
    mask_o: Optional[np.ndarray] = None
    mask_n: Optional[np.ndarray] = None


def _dropout_masks(
    b: int, dim: int, cfg: TrainConfig, rng: np.random.Generator
) -> tuple[Optional[np.ndarray], ...]:
    if cfg.p_kbe <= 0.0:
        return None, None, None, None
    keep = 1.0 - cfg.p_kbe

    def mask() -> np.ndarray:
        return (rng.random((b, dim)) >= cfg.p_kbe) / keep

    m_s = mask()
    m_r = mask() if cfg.dropout_relations else None
    m_o = mask()
    m_n = mask()
    return m_s, m_r, m_o, m_n


def make_raw_batch(
    kb: Kb,
    rows: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    training: bool = True,
) -> RawBatch:
    """Sample negatives (and dropout masks when training) for triple rows."""
    rows = np.asarray(rows, dtype=np.int64)
    s, r, o = rows[:, 0], rows[:, 1], rows[:, 2]
    negs = _sample_negative_matrix(kb, s, r, cfg.k_kbe, rng)
    masks = _dropout_masks(len(s), 2 * cfg.h, cfg, rng) if training else (None,) * 4
    return RawBatch(kb.kb_id, s, r, o, negs, *masks)


def make_link_batch(
    kbs: KbRegistry,
    s_kb: int,
    o_kb: int,
    rows: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    training: bool = True,
) -> LinkBatch:
    """Batch of replaced triples as (new_subject, relation, object, type, source) rows."""
    rows = np.asarray(rows, dtype=np.int64)
    s, r, o, t, src = rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4]
    negs = _sample_negative_matrix(kbs[o_kb], src, r, cfg.k_kbe, rng)
    masks = _dropout_masks(len(s), 2 * cfg.h, cfg, rng) if training else (None,) * 4
    return LinkBatch(s_kb, o_kb, s, r, o, t, negs, *masks)


def _bce(x: np.ndarray, target: float) -> tuple[np.ndarray, np.ndarray]:
    """Label-smoothed binary cross-entropy and its gradient w.r.t. x."""
    loss = target * np.logaddexp(0.0, -x) + (1.0 - target) * np.logaddexp(0.0, x)
    return loss, sigmoid(x) - target


def _apply(vec: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return vec if mask is None else vec * mask


def _contrastive(
    s_vec: np.ndarray,
    r_vec: np.ndarray,
    o_vec: np.ndarray,
    n_vec: np.ndarray,
    gamma: float,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Core contrastive loss over already-masked vectors.

    Returns (loss, dS, dR, dO, dN) where dN has shape (B, k, 2h).  The
    loss sums the positive term and all negative terms per triple and
    averages over the batch.
    """
    b = s_vec.shape[0]
    comp = cvec.cmul(s_vec, r_vec)
    x_pos = cvec.score(s_vec, r_vec, o_vec)
    cr, ci = cvec.split(comp)
    nr, ni = cvec.split(n_vec)
    x_neg = np.einsum("bj,bkj->bk", cr, nr) + np.einsum("bj,bkj->bk", ci, ni)

    loss_pos, g_pos = _bce(x_pos, 1.0 - gamma)
    loss_neg, g_neg = _bce(x_neg, gamma)
    loss = float((loss_pos.sum() + loss_neg.sum()) / b)
    g_pos = g_pos / b
    g_neg = g_neg / b

    # weighted sum of negative object vectors collapses the k axis
    n_weighted = np.einsum("bk,bkj->bj", g_neg, n_vec)
    d_s = g_pos[:, None] * cvec.cmul(cvec.conj(r_vec), o_vec) + cvec.cmul(
        cvec.conj(r_vec), n_weighted
    )
    d_r = g_pos[:, None] * cvec.cmul(cvec.conj(s_vec), o_vec) + cvec.cmul(
        cvec.conj(s_vec), n_weighted
    )
    d_o = g_pos[:, None] * comp
    d_n = g_neg[:, :, None] * comp[:, None, :]
    return loss, d_s, d_r, d_o, d_n


def loss_raw(
    model: EmbeddingModel, batch: RawBatch, cfg: TrainConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Contrastive loss over in-KB triples with analytic gradients."""
    ent = model.entity_table(batch.kb_id)
    rel = model.relation_table(batch.kb_id)
    s_vec = _apply(ent[batch.s], batch.mask_s)
    r_vec = _apply(rel[batch.r], batch.mask_r)
    o_vec = _apply(ent[batch.o], batch.mask_o)
    n_vec = ent[batch.negs]
    if batch.mask_n is not None:
        n_vec = n_vec * batch.mask_n[:, None, :]

    loss, d_s, d_r, d_o, d_n = _contrastive(s_vec, r_vec, o_vec, n_vec, cfg.gamma_kbe)

    d_s = _apply(d_s, batch.mask_s)
    d_r = _apply(d_r, batch.mask_r)
    d_o = _apply(d_o, batch.mask_o)
    if batch.mask_n is not None:
        d_n = d_n * batch.mask_n[:, None, :]

    g_ent = np.zeros_like(ent)
    g_rel = np.zeros_like(rel)
    np.add.at(g_ent, batch.s, d_s)
    np.add.at(g_rel, batch.r, d_r)
    np.add.at(g_ent, batch.o, d_o)
    np.add.at(g_ent, batch.negs.ravel(), d_n.reshape(-1, d_n.shape[-1]))
    return loss, {f"entity:{batch.kb_id}": g_ent, f"relation:{batch.kb_id}": g_rel}


def loss_link(
    model: EmbeddingModel, batch: LinkBatch, cfg: TrainConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Contrastive loss over replaced triples, backpropagated through the translator."""
    if batch.s_kb == batch.o_kb:
        raise ValueError("replaced triples must cross KBs")
    ent_s = model.entity_table(batch.s_kb)
    ent_o = model.entity_table(batch.o_kb)
    rel = model.relation_table(batch.o_kb)

    s_raw = ent_s[batch.s]
    tvec = model.params["link_types"][batch.t]
    u = np.concatenate([s_raw, tvec], axis=-1)
    if model.translator_hidden <= 0:
        z = u @ model.params["trans_w"].T + model.params["trans_b"]
    else:
        a = np.tanh(u @ model.params["trans_w1"].T + model.params["trans_b1"])
        z = a @ model.params["trans_w2"].T + model.params["trans_b2"]

    s_vec = _apply(z, batch.mask_s)
    r_vec = _apply(rel[batch.r], batch.mask_r)
    o_vec = _apply(ent_o[batch.o], batch.mask_o)
    n_vec = ent_o[batch.negs]
    if batch.mask_n is not None:
        n_vec = n_vec * batch.mask_n[:, None, :]

    loss, d_s, d_r, d_o, d_n = _contrastive(s_vec, r_vec, o_vec, n_vec, cfg.gamma_kbe)

    d_z = _apply(d_s, batch.mask_s)
    d_r = _apply(d_r, batch.mask_r)
    d_o = _apply(d_o, batch.mask_o)
    if batch.mask_n is not None:
        d_n = d_n * batch.mask_n[:, None, :]

    grads: dict[str, np.ndarray] = {}
    if model.translator_hidden <= 0:
        grads["trans_w"] = d_z.T @ u
        grads["trans_b"] = d_z.sum(axis=0)
        d_u = d_z @ model.params["trans_w"]
    else:
        grads["trans_w2"] = d_z.T @ a
        grads["trans_b2"] = d_z.sum(axis=0)
        d_a = d_z @ model.params["trans_w2"]
        d_z1 = d_a * (1.0 - a * a)
        grads["trans_w1"] = d_z1.T @ u
        grads["trans_b1"] = d_z1.sum(axis=0)
        d_u = d_z1 @ model.params["trans_w1"]

    dim = s_raw.shape[-1]
    d_sraw, d_tvec = d_u[:, :dim], d_u[:, dim:]

    g_ent_s = np.zeros_like(ent_s)
    g_lt = np.zeros_like(model.params["link_types"])
    np.add.at(g_ent_s, batch.s, d_sraw)
    np.add.at(g_lt, batch.t, d_tvec)
    grads[f"entity:{batch.s_kb}"] = g_ent_s
    grads["link_types"] = g_lt

    g_ent_o = np.zeros_like(ent_o)
    g_rel = np.zeros_like(rel)
    np.add.at(g_rel, batch.r, d_r)
    np.add.at(g_ent_o, batch.o, d_o)
    np.add.at(g_ent_o, batch.negs.ravel(), d_n.reshape(-1, d_n.shape[-1]))
    grads[f"entity:{batch.o_kb}"] = g_ent_o
    grads[f"relation:{batch.o_kb}"] = g_rel
    return loss, grads


# -- optimizer ----------------------------------------------------------------


class Adam:
    """Dense adaptive-moment optimizer over a dict of named arrays."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: dict[str, float],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items() if k in lr}
        self.v = {k: np.zeros_like(v) for k, v in params.items() if k in lr}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name in self.m:
            g = grads.get(name)
            if g is None:
                g = 0.0
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * np.square(g)
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            self.params[name] -= self.lr[name] * m_hat / (np.sqrt(v_hat) + self.eps)


# -- training -----------------------------------------------------------------


def _group_replace_entries(
    entries: Iterable[ReplacedTriple],
) -> dict[tuple[int, int], np.ndarray]:
    groups: dict[tuple[int, int], list[tuple[int, int, int, int, int]]] = {}
    for e in entries:
        key = (e.new_subject.kb_id, e.object.kb_id)
        groups.setdefault(key, []).append(
            (
                e.new_subject.local_id,
                e.relation,
                e.object.local_id,
                int(e.link_type),
                e.source_subject.local_id,
            )
        )
    return {k: np.asarray(v, dtype=np.int64) for k, v in sorted(groups.items())}


def _interleave(a: list, b: list) -> list:
    """Proportional deterministic interleave of two batch lists."""
    out = []
    na, nb = len(a), len(b)
    ia = ib = 0
    for _ in range(na + nb):
        # pick the stream lagging most behind its proportional position
        if ib * na >= ia * nb and ia < na:
            out.append(a[ia])
            ia += 1
        else:
            out.append(b[ib])
            ib += 1
    return out


def training_mrr(
    model: EmbeddingModel,
    kbs: KbRegistry,
    rows_by_kb: dict[int, np.ndarray],
) -> float:
    """Filtered MRR of true objects ranked against all in-KB entities."""
    recip: list[np.ndarray] = []
    for kb_id, rows in sorted(rows_by_kb.items()):
        if len(rows) == 0:
            continue
        kb = kbs[kb_id]
        ent = model.entity_table(kb_id)
        rel = model.relation_table(kb_id)
        comp = cvec.cmul(ent[rows[:, 0]], rel[rows[:, 1]])
        scores = cvec.score_against_table(comp, ent)
        ranks = np.empty(len(rows))
        for i, (s, r, o) in enumerate(rows):
            row = scores[i]
            true_score = row[o]
            others = [c for c in kb.objects_of(int(s), int(r)) if c != o]
            if others:
                row = row.copy()
                row[others] = -np.inf
            ranks[i] = 1 + int((row > true_score).sum())
        recip.append(1.0 / ranks)
    if not recip:
        return 0.0
    return float(np.concatenate(recip).mean())


def _run_training(
    model: EmbeddingModel,
    kbs: KbRegistry,
    raw_rows: dict[int, np.ndarray],
    replace_entries: list[ReplacedTriple],
    cfg: TrainConfig,
    rng: np.random.Generator,
    trainable: set[str],
) -> dict:
    link_groups = _group_replace_entries(replace_entries)
    lr = {}
    for name in trainable:
        is_trans = name.startswith("trans_")
        lr[name] = cfg.lr_trans if is_trans else cfg.lr_kbe
    opt = Adam(model.params, lr, cfg.beta1, cfg.beta2, cfg.eps)

    # fixed subsample for checkpoint MRR, drawn once
    all_rows = [(kb_id, i) for kb_id in sorted(raw_rows) for i in range(len(raw_rows[kb_id]))]
    if len(all_rows) > cfg.mrr_sample:
        pick = rng.choice(len(all_rows), size=cfg.mrr_sample, replace=False)
        pick = np.sort(pick)
    else:
        pick = np.arange(len(all_rows))
    mrr_rows: dict[int, list] = {k: [] for k in raw_rows}
    for idx in pick:
        kb_id, i = all_rows[idx]
        mrr_rows[kb_id].append(raw_rows[kb_id][i])
    mrr_sample = {k: np.asarray(v, dtype=np.int64).reshape(-1, 3) for k, v in mrr_rows.items()}

    best_mrr = -1.0
    best_params: Optional[dict[str, np.ndarray]] = None
    best_epoch = -1
    have_links = sum(len(v) for v in link_groups.values()) > 0

    for epoch in range(cfg.n_kbe):
        warm = have_links and epoch < cfg.n_warm
        link_batches = []
        for key in sorted(link_groups):
            rows = link_groups[key]
            perm = rng.permutation(len(rows))
            for lo in range(0, len(rows), cfg.batch_kbe):
                link_batches.append((key, rows[perm[lo : lo + cfg.batch_kbe]]))
        raw_batches = []
        if not warm:
            for kb_id in sorted(raw_rows):
                rows = raw_rows[kb_id]
                if len(rows) == 0:
                    continue
                perm = rng.permutation(len(rows))
                for lo in range(0, len(rows), cfg.batch_kbe):
                    raw_batches.append((kb_id, rows[perm[lo : lo + cfg.batch_kbe]]))

        schedule = _interleave(
            [("raw", b) for b in raw_batches], [("link", b) for b in link_batches]
        )
        for kind, payload in schedule:
            if kind == "raw":
                kb_id, rows = payload
                batch = make_raw_batch(kbs[kb_id], rows, cfg, rng, training=True)
                loss, grads = loss_raw(model, batch, cfg)
                scale = 1.0
            else:
                (s_kb, o_kb), rows = payload
                batch = make_link_batch(kbs, s_kb, o_kb, rows, cfg, rng, training=True)
                loss, grads = loss_link(model, batch, cfg)
                scale = cfg.r_lk
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"embedding training diverged: non-finite loss at epoch {epoch}"
                )
            if scale != 1.0:
                grads = {k: v * scale for k, v in grads.items()}
            opt.step({k: v for k, v in grads.items() if k in trainable})

        if (epoch + 1) % cfg.mrr_every == 0 or epoch == cfg.n_kbe - 1:
            mrr = training_mrr(model, kbs, mrr_sample)
            if mrr > best_mrr:
                best_mrr = mrr
                best_epoch = epoch
                best_params = {
                    k: v.copy() for k, v in model.params.items() if k in trainable
                }

    if best_params is not None:
        model.params.update(best_params)

    n_link_weighted = sum(len(v) for v in link_groups.values())
    n_raw = sum(len(v) for v in raw_rows.values())
    return {
        "best_training_mrr": best_mrr,
        "best_epoch": best_epoch,
        "n_raw_triples": n_raw,
        "n_replace_weighted": n_link_weighted,
        "n_train_triples_weighted": n_raw + n_link_weighted,
    }


def train_embedding(
    kbs: KbRegistry, links: LinkSet, cfg: TrainConfig
) -> EmbeddingModel:
    """Jointly train link-aware embeddings for all registered KBs.

    The first ``n_warm`` epochs (when links exist) optimize only the
    replaced-triple loss; afterwards raw and replaced batches interleave
    in proportion to their sizes, with the replaced-triple loss scaled by
    ``r_lk``.  The parameters with the best filtered training MRR are
    retained.
    """
    if len(kbs) == 0:
        raise ValueError("at least one KB is required")
    rng = np.random.default_rng(cfg.seed)
    model = EmbeddingModel.initialize(kbs, cfg, rng)
    replace = build_replace_sets(kbs, links, cfg.k_pl)
    raw_rows = {
        kb.kb_id: np.asarray(kb.triple_rows(), dtype=np.int64).reshape(-1, 3)
        for kb in kbs
    }
    trainable = set(model.params)
    stats = _run_training(model, kbs, raw_rows, replace, cfg, rng, trainable)
    model.meta = {"config": asdict(cfg), "seed": cfg.seed, "train_stats": stats}
    return model


def train_plug_in(
    frozen: EmbeddingModel, kbs: KbRegistry, new_kb: Kb, links: LinkSet, cfg: TrainConfig
) -> EmbeddingModel:
    """Plug a new KB into a trained model without touching frozen tables.

    Trains the new KB's tables, the link-type vectors, and the translator
    on the new KB's triples plus the replaced triples pointing into it;
    all pre-existing entity and relation tables stay bit-identical.
    """
    if new_kb.kb_id in frozen.kb_ids:
        raise ValueError(f"KB {new_kb.kb_id} already covered by the frozen model")
    if new_kb.kb_id not in kbs:
        raise ValueError("new KB must be registered")
    if cfg.h != frozen.h:
        raise ValueError(f"dimension mismatch: cfg.h={cfg.h} vs frozen h={frozen.h}")

    rng = np.random.default_rng(cfg.seed)
    params = frozen.copy_params()
    scale = 1.0 / np.sqrt(cfg.h)
    params[f"entity:{new_kb.kb_id}"] = rng.normal(0.0, scale, (new_kb.n_entities, 2 * cfg.h))
    params[f"relation:{new_kb.kb_id}"] = rng.normal(
        0.0, scale, (max(new_kb.n_relations, 1), 2 * cfg.h)
    )
    model = EmbeddingModel(
        cfg.h, list(frozen.kb_ids) + [new_kb.kb_id], params, frozen.translator_hidden
    )

    replace_all = build_replace_sets(kbs, links, cfg.k_pl)
    replace_in = [e for e in replace_all if e.object.kb_id == new_kb.kb_id]
    raw_rows = {
        new_kb.kb_id: np.asarray(new_kb.triple_rows(), dtype=np.int64).reshape(-1, 3)
    }
    trainable = {
        f"entity:{new_kb.kb_id}",
        f"relation:{new_kb.kb_id}",
        "link_types",
    } | set(model.translator_param_names())
    stats = _run_training(model, kbs, raw_rows, replace_in, cfg, rng, trainable)
    stats["frozen_kb_ids"] = list(frozen.kb_ids)
    model.meta = {"config": asdict(cfg), "seed": cfg.seed, "train_stats": stats}
    return model


# -- checkpoints ----------------------------------------------------------------


def _npz_key(name: str) -> str:
    return name.replace(":", "__")


def _param_name(key: str) -> str:
    return key.replace("__", ":")


def save_model(model: EmbeddingModel, dir_path, extra: Optional[dict] = None) -> None:
    """Write a bit-exact checkpoint directory (params.npz + manifest.json)."""
    from pathlib import Path

    from .manifest import write_manifest

    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    np.savez(d / "params.npz", **{_npz_key(k): v for k, v in model.params.items()})
    payload = {
        "kind": "embedding",
        "h": model.h,
        "kb_ids": model.kb_ids,
        "translator_hidden": model.translator_hidden,
        "meta": model.meta,
    }
    payload.update(extra or {})
    write_manifest(d, payload)


def load_model(dir_path) -> EmbeddingModel:
    from pathlib import Path

    from .manifest import read_manifest

    d = Path(dir_path)
    info = read_manifest(d)
    with np.load(d / "params.npz") as data:
        params = {_param_name(k): data[k].copy() for k in data.files}
    return EmbeddingModel(
        h=info["h"],
        kb_ids=info["kb_ids"],
        params=params,
        translator_hidden=info.get("translator_hidden", 0),
        meta=info.get("meta"),
    )
