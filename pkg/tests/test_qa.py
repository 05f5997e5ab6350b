import math

import numpy as np
import pytest

from linkqa import cvec
from linkqa.embedding import EmbeddingModel, TrainConfig
from linkqa.kb import EntityRef, KbRegistry, LinkType
from linkqa.qa import (
    QaConfig,
    QaModel,
    QuestionEncoder,
    _Universe,
    best_gold_ranks,
    build_vocab,
    load_qa,
    loss_q,
    make_qa_batch,
    save_qa,
    tokenize,
    train_qa,
)
from linkqa.records import QuestionRecord

from oracles import relative_error, scalar_affine
from test_embedding import finite_difference, random_pair, tiny_cfg


def small_embedding(seed=0, n=10):
    kbs, links = random_pair(seed=seed, n=n)
    model = EmbeddingModel.initialize(kbs, tiny_cfg(), np.random.default_rng(seed))
    return kbs, model


def qa_cfg(**kw):
    base = dict(d=6, batch_qa=4, lr_qa=1e-2, n_qa=3, k_qa=4, gamma_qa=0.05,
                seed=0, eval_every=1)
    base.update(kw)
    return QaConfig(**base)


def record(text, topics, answers, template="T1", lt=LinkType.FULL):
    return QuestionRecord(text, tuple(topics), frozenset(answers), template, lt)


class TestTokenize:
    def test_lowercase_and_split(self):
        assert tokenize("What is the Upstream of kb_x9?") == [
            "what", "is", "the", "upstream", "of", "kb_x9",
        ]

    def test_vocab_has_unk_zero(self):
        vocab = build_vocab(["a b", "b c"])
        assert vocab["<unk>"] == 0
        assert set(vocab) == {"<unk>", "a", "b", "c"}


class TestEncode:
    def test_single_token_is_projection(self, rng):
        vocab = build_vocab(["hello"])
        enc = QuestionEncoder.initialize(vocab, d=5, h=3, rng=rng)
        enc.params["proj_w"] = rng.normal(size=(6, 5))
        ids = enc.token_ids("hello")
        expected = enc.params["proj_w"] @ enc.params["tok_emb"][vocab["hello"]]
        np.testing.assert_allclose(enc.encode_ids(ids), expected)

    def test_repeated_token_mean_idempotent(self, rng):
        vocab = build_vocab(["hello"])
        enc = QuestionEncoder.initialize(vocab, d=5, h=3, rng=rng)
        enc.params["proj_w"] = rng.normal(size=(6, 5))
        np.testing.assert_allclose(enc.encode("hello hello"), enc.encode("hello"))

    def test_oov_maps_to_unk(self, rng):
        vocab = build_vocab(["hello"])
        enc = QuestionEncoder.initialize(vocab, d=5, h=3, rng=rng)
        assert enc.token_ids("zorp").tolist() == [0]

    def test_matches_matvec_oracle(self, rng):
        vocab = build_vocab(["a b c"])
        enc = QuestionEncoder.initialize(vocab, d=4, h=2, rng=rng)
        enc.params["proj_w"] = rng.normal(size=(4, 4))
        enc.params["proj_b"] = rng.normal(size=4)
        ids = enc.token_ids("a c")
        v = enc.params["tok_emb"][ids].mean(axis=0)
        expected = scalar_affine(
            enc.params["proj_w"].tolist(), enc.params["proj_b"].tolist(), v.tolist()
        )
        np.testing.assert_allclose(enc.encode_ids(ids), expected)


class TestScoring:
    def test_zero_question_vector_gives_half(self, rng):
        kbs, model = small_embedding()
        enc = QuestionEncoder.initialize(build_vocab(["q"]), d=4, h=model.h, rng=rng)
        qa = QaModel(enc, model)
        hq = np.zeros(2 * model.h)
        for a in (EntityRef(1, 0), EntityRef(2, 3)):
            assert qa.score_answer(EntityRef(1, 1), hq, a) == pytest.approx(0.5)

    def test_role_asymmetry(self, rng):
        kbs, model = small_embedding()
        qa = QaModel(QuestionEncoder.initialize(build_vocab(["q"]), 4, model.h, rng), model)
        hq = rng.normal(size=2 * model.h)
        e, a = EntityRef(1, 0), EntityRef(1, 1)
        assert qa.score_answer(e, hq, a) != pytest.approx(qa.score_answer(a, hq, e))

    def test_matches_trilinear_composition(self, rng):
        kbs, model = small_embedding()
        qa = QaModel(QuestionEncoder.initialize(build_vocab(["q"]), 4, model.h, rng), model)
        hq = rng.normal(size=2 * model.h)
        e, a = EntityRef(1, 2), EntityRef(2, 4)
        x = cvec.score(model.entity_vec(e), hq, model.entity_vec(a))
        assert qa.score_answer(e, hq, a) == pytest.approx(1.0 / (1.0 + math.exp(-x)))


class TestRanking:
    def make_model(self, seed=0):
        kbs, model = small_embedding(seed)
        vocab = build_vocab(["what is q"])
        enc = QuestionEncoder.initialize(vocab, d=4, h=model.h, rng=np.random.default_rng(seed))
        enc.params["proj_w"] = np.random.default_rng(seed + 1).normal(size=enc.params["proj_w"].shape)
        return kbs, QaModel(enc, model)

    def test_single_topic_matches_score_order(self):
        _, qa = self.make_model()
        rec = record("what is q", [EntityRef(1, 0)], [EntityRef(2, 1)])
        ranked = qa.rank_answers(rec)
        hq = qa.encode_question(rec)
        scores = [qa.score_answer(EntityRef(1, 0), hq, c) for c, _ in ranked]
        assert scores == sorted(scores, reverse=True)

    def test_restriction_preserves_relative_order(self):
        _, qa = self.make_model()
        rec = record("what is q", [EntityRef(1, 0)], [EntityRef(2, 1)])
        full = [c for c, _ in qa.rank_answers(rec)]
        subset = [c for c in full if c.local_id % 2 == 0]
        restricted = [c for c, _ in qa.rank_answers(rec, subset)]
        assert restricted == [c for c in full if c in set(subset)]

    def test_two_topic_average(self):
        _, qa = self.make_model()
        topics = [EntityRef(1, 0), EntityRef(2, 2)]
        rec = record("what is q", topics, [EntityRef(2, 1)])
        cands = [EntityRef(1, i) for i in range(5)]
        ranked = dict(qa.rank_answers(rec, cands))
        hq = qa.encode_question(rec)
        for c in cands:
            mean = np.mean([qa.score_answer(t, hq, c) for t in topics])
            assert ranked[c] == pytest.approx(mean)

    def test_average_bounds(self):
        _, qa = self.make_model()
        topics = [EntityRef(1, 0), EntityRef(2, 2), EntityRef(1, 4)]
        rec = record("what is q", topics, [EntityRef(2, 1)])
        hq = qa.encode_question(rec)
        for c, avg in qa.rank_answers(rec, [EntityRef(2, i) for i in range(6)]):
            per_topic = [qa.score_answer(t, hq, c) for t in topics]
            assert min(per_topic) - 1e-12 <= avg <= max(per_topic) + 1e-12

    def test_permutation_invariance(self):
        _, qa = self.make_model()
        rec = record("what is q", [EntityRef(1, 0)], [EntityRef(2, 1)])
        cands = qa.universe()
        shuffled = [cands[i] for i in np.random.default_rng(3).permutation(len(cands))]
        assert qa.rank_answers(rec, cands) == qa.rank_answers(rec, shuffled)

    def test_best_gold_ranks_agrees_with_rank_answers(self):
        _, qa = self.make_model()
        recs = [
            record("what is q", [EntityRef(1, 0)], [EntityRef(2, 1), EntityRef(1, 3)]),
            record("what is q", [EntityRef(2, 2)], [EntityRef(1, 5)]),
        ]
        ranks = best_gold_ranks(qa, recs)
        for rec, r in zip(recs, ranks):
            ranked = [c for c, _ in qa.rank_answers(rec)]
            expected = min(ranked.index(a) for a in rec.answers) + 1
            assert r == expected


class TestLossQ:
    def test_initial_loss_is_log2_per_pair(self):
        kbs, model = small_embedding()
        cfg = qa_cfg(gamma_qa=0.0, k_qa=4)
        rec = record("what is q", [EntityRef(1, 0)], [EntityRef(2, 1), EntityRef(2, 3)])
        enc = QuestionEncoder.initialize(build_vocab([rec.text]), cfg.d, model.h,
                                         np.random.default_rng(0))
        universe = _Universe(model)
        batch = make_qa_batch([rec], enc, universe, cfg, np.random.default_rng(1))
        loss, _ = loss_q(enc, universe, batch, cfg)
        assert loss == pytest.approx((2 + 4) * math.log(2.0))

    def test_gradients_match_fd(self):
        kbs, model = small_embedding()
        cfg = qa_cfg()
        recs = [
            record("what is the q of x", [EntityRef(1, 0)], [EntityRef(2, 1)]),
            record("what is the p of y", [EntityRef(2, 2), EntityRef(1, 3)],
                   [EntityRef(1, 5), EntityRef(2, 7)]),
        ]
        enc = QuestionEncoder.initialize(build_vocab(r.text for r in recs), cfg.d,
                                         model.h, np.random.default_rng(2))
        enc.params["proj_w"] = np.random.default_rng(3).normal(size=enc.params["proj_w"].shape) * 0.3
        enc.params["proj_b"] = np.random.default_rng(4).normal(size=enc.params["proj_b"].shape) * 0.1
        universe = _Universe(model)
        batch = make_qa_batch(recs, enc, universe, cfg, np.random.default_rng(5))
        _, grads = loss_q(enc, universe, batch, cfg)
        for name in ("tok_emb", "proj_w", "proj_b"):
            fd = finite_difference(
                lambda: loss_q(enc, universe, batch, cfg)[0], enc.params[name]
            )
            assert relative_error(grads[name], fd) < 1e-4, name


def toy_records(kbs, n=12, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        kb = kbs[1] if i % 2 == 0 else kbs[2]
        s, r, o = kb.triple_rows()[int(rng.integers(len(kb)))]
        recs.append(
            record(
                f"what is the {kb.relations[r]} of {kb.entity_name(s)}",
                [EntityRef(kb.kb_id, s)],
                [EntityRef(kb.kb_id, o)],
            )
        )
    return recs


class TestTrainQa:
    def test_embedding_frozen(self):
        kbs, model = small_embedding()
        before = {k: v.copy() for k, v in model.params.items()}
        recs = toy_records(kbs)
        train_qa(model, recs[:8], recs[8:], qa_cfg())
        for name in before:
            assert np.array_equal(model.params[name], before[name]), name

    def test_deterministic(self):
        kbs, model = small_embedding()
        recs = toy_records(kbs)
        m1 = train_qa(model, recs[:8], recs[8:], qa_cfg())
        m2 = train_qa(model, recs[:8], recs[8:], qa_cfg())
        for name in m1.encoder.params:
            assert np.array_equal(m1.encoder.params[name], m2.encoder.params[name])

    def test_learns_one_hop_questions(self):
        kbs, links = random_pair(seed=2, n=8, n_triples=14)
        emb_cfg = tiny_cfg(h=8, n_kbe=60, n_warm=0, k_kbe=8, lr_kbe=5e-2, mrr_every=10)
        from linkqa.embedding import train_embedding

        emb = train_embedding(kbs, links, emb_cfg)
        recs = toy_records(kbs, n=30, seed=1)
        cfg = qa_cfg(n_qa=60, lr_qa=5e-2, k_qa=8, eval_every=10)
        qa = train_qa(emb, recs[:24], recs[24:], cfg)
        from linkqa.qa import evaluate_mrr

        assert evaluate_mrr(qa, recs[24:]) > 0.3

    def test_checkpoint_round_trip(self, tmp_path):
        kbs, model = small_embedding()
        recs = toy_records(kbs)
        from linkqa.embedding import save_model

        save_model(model, tmp_path / "emb")
        qa = train_qa(model, recs[:8], recs[8:], qa_cfg())
        save_qa(qa, tmp_path / "qa", embedding_dir=tmp_path / "emb")
        again = load_qa(tmp_path / "qa")
        assert again.encoder.vocab == qa.encoder.vocab
        for name in qa.encoder.params:
            assert np.array_equal(again.encoder.params[name], qa.encoder.params[name])
        rec = recs[0]
        assert again.rank_answers(rec) == qa.rank_answers(rec)
