import random

import pytest
from hypothesis import given, strategies as st

from ews_tracker.errors import DuplicateWithinSystem
from ews_tracker.index_store import Bm25fParams, Index, RankedHit, tokenize
from ews_tracker.ports import EmbeddingSpec, hash_embedder
from ews_tracker.retrieval import RetrievalConfig, hybrid_query, rrf_fuse

from test_index_store import (
    SPECS,
    build_index,
    embedders,
    make_aug,
    oracle_dense,
    oracle_lexical,
    random_corpus,
)


def hits(*pairs):
    return [RankedHit(cid, rank, score) for cid, rank, score in pairs]


def test_rrf_hand_value_both_systems():
    fused = rrf_fuse(hits(("c", 1, 0.9)), hits(("c", 2, 5.0)), 60.0)
    assert len(fused) == 1
    assert fused[0].rrf_score == pytest.approx(1 / 61 + 1 / 62, abs=1e-12)
    assert fused[0].rrf_score == pytest.approx(0.03252248, abs=1e-8)  # 8-decimal display
    assert (fused[0].dense_rank, fused[0].lexical_rank) == (1, 2)


def test_rrf_hand_value_single_system():
    fused = rrf_fuse([], hits(("c", 3, 1.0)), 60.0)
    assert fused[0].rrf_score == pytest.approx(1 / 63, abs=1e-12)
    assert fused[0].rrf_score == pytest.approx(0.01587302, abs=1e-8)  # 8-decimal display
    assert fused[0].dense_rank is None


def test_rrf_empty_inputs():
    assert rrf_fuse([], [], 60.0) == []


def test_rrf_duplicate_within_system_rejected():
    with pytest.raises(DuplicateWithinSystem):
        rrf_fuse(hits(("c", 1, 2.0), ("c", 2, 1.0)), [], 60.0)


def test_rrf_sort_and_tiebreak():
    dense = hits(("b", 1, 0.9), ("a", 2, 0.8))
    lexical = hits(("a", 1, 9.0), ("b", 2, 8.0))
    fused = rrf_fuse(dense, lexical, 60.0)
    # identical scores for a and b -> ascending chunk_id
    assert [c.chunk_id for c in fused] == ["a", "b"]
    assert fused[0].rrf_score == pytest.approx(fused[1].rrf_score, abs=1e-15)


@st.composite
def ranked_lists(draw):
    ids = draw(st.lists(st.text("abcdef", min_size=1, max_size=3), min_size=0,
                        max_size=8, unique=True))
    scores = sorted(draw(st.lists(st.floats(0.01, 100.0), min_size=len(ids),
                                  max_size=len(ids))), reverse=True)
    return [RankedHit(cid, i + 1, scores[i]) for i, cid in enumerate(ids)]


@given(ranked_lists(), ranked_lists(), st.floats(1.0, 200.0))
def test_rrf_symmetry(dense, lexical, k):
    a = {c.chunk_id: c.rrf_score for c in rrf_fuse(dense, lexical, k)}
    b = {c.chunk_id: c.rrf_score for c in rrf_fuse(lexical, dense, k)}
    assert a == b


@given(ranked_lists(), ranked_lists(), st.floats(1.0, 200.0),
       st.floats(0.1, 7.0), st.floats(0.0, 5.0))
def test_rrf_rank_only_dependence(dense, lexical, k, scale, shift):
    """A strictly monotone transform of raw scores leaves fusion unchanged."""
    def transform(lst):
        return [RankedHit(h.chunk_id, h.rank, h.raw_score * scale + shift) for h in lst]

    base = rrf_fuse(dense, lexical, k)
    transformed = rrf_fuse(transform(dense), transform(lexical), k)
    assert [(c.chunk_id, c.rrf_score) for c in base] == \
           [(c.chunk_id, c.rrf_score) for c in transformed]


@given(ranked_lists(), ranked_lists())
def test_rrf_containment(dense, lexical):
    fused = rrf_fuse(dense, lexical, 60.0)
    universe = {h.chunk_id for h in dense} | {h.chunk_id for h in lexical}
    assert {c.chunk_id for c in fused} == universe


# --- hybrid query ---------------------------------------------------------------

def test_hybrid_planted_token_first():
    augmented = random_corpus(random.Random(3), 40)
    augmented.append(make_aug("f0.pdf", 500, "qqwwee planted budget token"))
    index = build_index(augmented)
    out = hybrid_query("qqwwee planted", "f0.pdf", index, embedders()["text_table"])
    assert out and out[0].chunk.id == "f0.pdf#500#text"


def test_hybrid_truncates_to_union_size():
    augmented = [
        make_aug("u.pdf", 0, "alpha beta"),
        make_aug("u.pdf", 1, "alpha gamma"),
        make_aug("u.pdf", 2, "unrelated words entirely"),
    ]
    index = build_index(augmented)
    out = hybrid_query("alpha", "u.pdf", index, embedders()["text_table"],
                       RetrievalConfig(top_k=5, candidate_depth=50))
    # dense cosine reaches all three, lexical only two; union has 3 chunks
    assert len(out) == 3


def test_hybrid_unknown_file_returns_empty_with_warning():
    index = build_index(random_corpus(random.Random(1), 10))
    warnings = []
    out = hybrid_query("anything", "ghost.pdf", index, embedders()["text_table"],
                       warnings=warnings)
    assert out == []
    assert warnings and "ghost.pdf" in warnings[0]


def oracle_hybrid(augmented, query, file_name, cfg, params=Bm25fParams()):
    """Independent full-scan of both systems plus literal rank fusion."""
    corpus = {
        a.chunk.id: {"body": tokenize(a.chunk.body), "context": tokenize(a.context_summary)}
        for a in augmented
    }
    file_of = {a.chunk.id: a.chunk.file_name for a in augmented}
    emb = embedders()["text_table"]
    vectors = {a.chunk.id: emb.embed(a.augmented_body)
               for a in augmented if a.chunk.kind != "image"}
    dense = oracle_dense(vectors, emb.embed(query), cfg.candidate_depth, file_of, file_name)
    lexical = oracle_lexical(corpus, query, cfg.candidate_depth, params, file_of, file_name)
    scores = {}
    for rank, (cid, _) in enumerate(dense, start=1):
        scores[cid] = scores.get(cid, 0.0) + 1.0 / (rank + cfg.rrf_k)
    for rank, (cid, _) in enumerate(lexical, start=1):
        scores[cid] = scores.get(cid, 0.0) + 1.0 / (rank + cfg.rrf_k)
    ordered = sorted(scores.items(), key=lambda t: (-t[1], t[0]))
    return [cid for cid, _ in ordered[: cfg.top_k]]


def test_hybrid_matches_oracle_on_200_chunk_fixture():
    rng = random.Random(202)
    augmented = random_corpus(rng, 200, n_files=5)
    index = build_index(augmented)
    emb = embedders()["text_table"]
    cfg = RetrievalConfig()
    vocab = ["radar", "budget", "pillar", "w1", "w5", "w9", "w33", "w57"]
    for _ in range(30):
        query = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 4)))
        file_name = f"f{rng.randrange(5)}.pdf"
        got = [a.chunk.id for a in hybrid_query(query, file_name, index, emb, cfg)]
        assert got == oracle_hybrid(augmented, query, file_name, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        RetrievalConfig(rrf_k=0.0)
    with pytest.raises(ValueError):
        RetrievalConfig(top_k=10, candidate_depth=5)
