import math
import random
import string

import numpy as np
import pytest

from ews_tracker.augment import build_augmented
from ews_tracker.chunking import Chunk, chunk_id
from ews_tracker.errors import (
    CorruptIndex,
    DimensionMismatch,
    EmbedderFailure,
    IndexIoError,
    UnknownChunk,
    VersionMismatch,
)
from ews_tracker.index_store import Bm25fParams, Index, load_index, tokenize
from ews_tracker.ports import EmbeddingSpec, hash_embedder

from hypothesis import given, strategies as st

SPECS = {
    "text_table": EmbeddingSpec("text_table", dim=32),
    "image": EmbeddingSpec("image", dim=32),
}


def make_chunk(name, ordinal, body, kind="text", page=1):
    return Chunk(id=chunk_id(name, ordinal, kind), file_name=name, kind=kind,
                 page_span=(page, page), body=body, ordinal=ordinal)


def make_aug(name, ordinal, body, context="", kind="text"):
    return build_augmented(make_chunk(name, ordinal, body, kind), context)


def embedders(seed=0):
    return {
        "text_table": hash_embedder(SPECS["text_table"], seed=seed),
        "image": hash_embedder(SPECS["image"], seed=seed + 1),
    }


def build_index(augmented, params=Bm25fParams()):
    index = Index(params=params, specs=SPECS)
    index.upsert_chunks(augmented, embedders())
    return index


# --- tokenizer -----------------------------------------------------------------

def test_tokenize_rule():
    assert tokenize("Pillar 2: Radar/Sensors") == ["pillar", "2", "radar", "sensors"]
    assert tokenize("") == []
    assert tokenize("under_score") == ["under", "score"]


@given(st.text(max_size=60), st.text(max_size=60))
def test_tokenize_concatenation_property(a, b):
    assert tokenize(a + " " + b) == tokenize(a) + tokenize(b)


# --- BM25F hand checks ------------------------------------------------------------

def toy_corpus(radar_in_context=False):
    ctx_a = "radar two three" if radar_in_context else "one two three"
    return [
        make_aug("t.pdf", 0, "radar alpha beta gamma", ctx_a),
        make_aug("t.pdf", 1, "delta epsilon zeta eta", "four five six"),
    ]


def test_bm25f_hand_value_body_only():
    index = build_index(toy_corpus())
    # N=2, term in one chunk once, len=avglen: idf=ln 2, tf'=1, score=ln2/2.2
    score = index.bm25f_score(["radar"], "t.pdf#0#text")
    assert score == pytest.approx(0.315067, abs=1e-6)
    assert score == pytest.approx(math.log(2) / 2.2, abs=1e-12)


def test_bm25f_hand_value_with_context_field():
    index = build_index(toy_corpus(radar_in_context=True))
    # context adds w=0.5 at len=avglen: tf'=1.5, score=ln2*1.5/2.7
    score = index.bm25f_score(["radar"], "t.pdf#0#text")
    assert score == pytest.approx(0.385082, abs=1e-6)
    assert score == pytest.approx(math.log(2) * 1.5 / 2.7, abs=1e-12)


def test_bm25f_absent_term_and_empty_query():
    index = build_index(toy_corpus())
    assert index.bm25f_score(["nosuchterm"], "t.pdf#0#text") == 0.0
    assert index.bm25f_score([], "t.pdf#0#text") == 0.0


def test_bm25f_unknown_chunk():
    index = build_index(toy_corpus())
    with pytest.raises(UnknownChunk):
        index.bm25f_score(["radar"], "missing#0#text")


# --- independent full-scan oracle ----------------------------------------------------

FIELDS = ("body", "context")


def oracle_scores(corpus, query_tokens, params):
    """Straight-from-the-formula BM25F over token lists."""
    n = len(corpus)
    b, w = dict(params.b_per_field), dict(params.w_per_field)

    def df(t):
        return sum(1 for c in corpus.values() if t in c["body"] or t in c["context"])

    avg = {f: (sum(len(c[f]) for c in corpus.values()) / n if n else 0.0) for f in FIELDS}
    out = {}
    for cid, fields in corpus.items():
        s = 0.0
        for t in query_tokens:
            n_t = df(t)
            if n_t == 0:
                continue
            idf = math.log((n - n_t + 0.5) / (n_t + 0.5) + 1.0)
            wtf = 0.0
            for f in FIELDS:
                tf = fields[f].count(t)
                if tf and avg[f] > 0:
                    wtf += w[f] * tf / (1.0 - b[f] + b[f] * len(fields[f]) / avg[f])
            if wtf > 0:
                s += idf * wtf / (params.k1 + wtf)
        out[cid] = s
    return out


def oracle_lexical(corpus, query, k, params, file_of, file_filter=None):
    tokens = tokenize(query)
    scores = oracle_scores(corpus, tokens, params)
    rows = [
        (cid, s) for cid, s in scores.items()
        if s > 0.0 and (file_filter is None or file_of[cid] == file_filter)
    ]
    rows.sort(key=lambda t: (-t[1], t[0]))
    return rows[:k]


def random_corpus(rng, n_chunks, n_files=4, vocab_size=60):
    vocab = [f"w{i}" for i in range(vocab_size)] + ["radar", "budget", "pillar"]
    augmented = []
    for i in range(n_chunks):
        name = f"f{rng.randrange(n_files)}.pdf"
        body = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 30)))
        context = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 10)))
        augmented.append(make_aug(name, i, body, context))
    return augmented


def test_lexical_search_matches_oracle_on_random_corpora():
    rng = random.Random(101)
    params = Bm25fParams()
    for trial in range(5):
        augmented = random_corpus(rng, rng.randint(5, 150))
        index = build_index(augmented, params)
        corpus = {
            a.chunk.id: {"body": tokenize(a.chunk.body), "context": tokenize(a.context_summary)}
            for a in augmented
        }
        file_of = {a.chunk.id: a.chunk.file_name for a in augmented}
        for _ in range(20):
            query = " ".join(rng.choice(["radar", "budget", "w1", "w2", "w50", "zz"])
                             for _ in range(rng.randint(1, 4)))
            file_filter = rng.choice([None, "f0.pdf", "f1.pdf", "absent.pdf"])
            k = rng.randint(1, 20)
            got = index.lexical_search(query, file_filter, k)
            want = oracle_lexical(corpus, query, k, params, file_of, file_filter)
            assert [(h.chunk_id, h.rank) for h in got] == \
                   [(cid, i + 1) for i, (cid, _) in enumerate(want)]
            for hit, (_, score) in zip(got, want):
                assert hit.raw_score == pytest.approx(score, abs=1e-12)


def test_lexical_filter_by_absent_file():
    index = build_index(toy_corpus())
    assert index.lexical_search("radar", "nope.pdf", 5) == []


def test_planted_token_ranks_first():
    augmented = random_corpus(random.Random(5), 30)
    augmented.append(make_aug("f0.pdf", 999, "zzyzzx unique token planted here"))
    index = build_index(augmented)
    hits = index.lexical_search("zzyzzx", None, 5)
    assert hits and hits[0].chunk_id == "f0.pdf#999#text" and hits[0].rank == 1


def test_k_larger_than_matches_gives_contiguous_ranks():
    index = build_index(toy_corpus())
    hits = index.lexical_search("alpha delta", None, 50)
    assert [h.rank for h in hits] == list(range(1, len(hits) + 1))
    assert 1 <= len(hits) <= 2


# --- dense search ---------------------------------------------------------------

def oracle_dense(vectors, query, k, file_of, file_filter=None):
    rows = []
    q = np.asarray(query, dtype=np.float64)
    qn = float(np.linalg.norm(q))
    for cid, v in vectors.items():
        if file_filter is not None and file_of[cid] != file_filter:
            continue
        v64 = v.astype(np.float64)
        vn = float(np.linalg.norm(v64))
        score = 0.0 if qn == 0.0 or vn == 0.0 else float(np.dot(q, v64) / (qn * vn))
        rows.append((cid, score))
    rows.sort(key=lambda t: (-t[1], t[0]))
    return rows[:k]


def test_dense_exact_match_ranks_first():
    augmented = toy_corpus()
    index = build_index(augmented)
    emb = embedders()["text_table"]
    query = emb.embed(augmented[0].augmented_body)
    hits = index.dense_search(query, "text_table", None, 2)
    assert hits[0].chunk_id == "t.pdf#0#text"
    assert hits[0].raw_score == pytest.approx(1.0, abs=1e-6)


def test_dense_zero_query_is_tie_broken_by_id():
    index = build_index(toy_corpus())
    hits = index.dense_search(np.zeros(32, dtype=np.float32), "text_table", None, 5)
    assert [h.chunk_id for h in hits] == ["t.pdf#0#text", "t.pdf#1#text"]
    assert all(h.raw_score == 0.0 for h in hits)


def test_dense_dimension_mismatch():
    index = build_index(toy_corpus())
    with pytest.raises(DimensionMismatch):
        index.dense_search(np.zeros(7), "text_table", None, 5)


def test_dense_matches_oracle_on_random_queries():
    rng = random.Random(77)
    augmented = random_corpus(rng, 200)
    index = build_index(augmented)
    emb = embedders()["text_table"]
    vectors = {
        a.chunk.id: emb.embed(a.augmented_body).astype(np.float32) for a in augmented
    }
    file_of = {a.chunk.id: a.chunk.file_name for a in augmented}
    for _ in range(50):
        query = emb.embed(" ".join(rng.choice(["radar", "w3", "w9", "budget"])
                                   for _ in range(rng.randint(1, 6))))
        file_filter = rng.choice([None, "f0.pdf", "f2.pdf"])
        k = rng.randint(1, 12)
        got = index.dense_search(query, "text_table", file_filter, k)
        want = oracle_dense(vectors, query, k, file_of, file_filter)
        assert [h.chunk_id for h in got] == [cid for cid, _ in want]


# --- upsert semantics ------------------------------------------------------------

def test_upsert_replaces_and_keeps_n():
    index = build_index(toy_corpus())
    assert index.n_chunks == 2
    replacement = make_aug("t.pdf", 0, "completely new radar body text", "ctx")
    index.upsert_chunks([replacement], embedders())
    assert index.n_chunks == 2
    assert "new" in index.get_chunk("t.pdf#0#text").chunk.body


def test_insert_two_chunks_stats():
    index = build_index(toy_corpus())
    stats = index.stats()
    assert stats.n_chunks == 2
    assert stats.avg_field_len["body"] == 4.0
    assert stats.avg_field_len["context"] == 3.0


class FailingEmbedder:
    spec = SPECS["text_table"]

    def __init__(self, poison):
        self.poison = poison

    def embed(self, payload):
        if self.poison in payload:
            raise RuntimeError("poisoned")
        return hash_embedder(SPECS["text_table"]).embed(payload)


def test_embedder_failure_is_atomic():
    index = build_index(toy_corpus())
    before = index.stats()
    batch = [
        make_aug("n.pdf", 0, "fine text"),
        make_aug("n.pdf", 1, "POISON here"),
        make_aug("n.pdf", 2, "also fine"),
    ]
    with pytest.raises(EmbedderFailure) as err:
        index.upsert_chunks(batch, {"text_table": FailingEmbedder("POISON"),
                                    "image": embedders()["image"]})
    assert err.value.chunk_id == "n.pdf#1#text"
    assert index.stats() == before
    assert index.n_chunks == 2


def test_stats_equal_brute_force_recounts_after_mutations():
    rng = random.Random(31)
    index = Index(specs=SPECS)
    live = {}
    for step in range(6):
        batch = random_corpus(rng, rng.randint(1, 25))
        index.upsert_chunks(batch, embedders())
        for a in batch:
            live[a.chunk.id] = a
        assert index.n_chunks == len(live)
        for f in FIELDS:
            lens = [len(tokenize(a.chunk.body if f == "body" else a.context_summary))
                    for a in live.values()]
            assert index.avg_field_len(f) == pytest.approx(sum(lens) / len(lens))
        for token in ("radar", "w1", "w17"):
            expected = sum(
                1 for a in live.values()
                if token in tokenize(a.chunk.body) or token in tokenize(a.context_summary)
            )
            assert index.doc_freq(token) == expected


# --- persistence ------------------------------------------------------------------

def test_persist_load_roundtrip_query_identical(tmp_path):
    rng = random.Random(9)
    augmented = random_corpus(rng, 60)
    index = build_index(augmented)
    index.persist(tmp_path)
    reloaded = load_index(tmp_path)
    for query in ("radar budget", "w1 w2 w3", "pillar"):
        assert reloaded.lexical_search(query, None, 10) == index.lexical_search(query, None, 10)
    emb = embedders()["text_table"]
    q = emb.embed("radar budget pillar")
    assert reloaded.dense_search(q, "text_table", None, 10) == \
           index.dense_search(q, "text_table", None, 10)


def test_persisted_bytes_identical_across_insertion_orders(tmp_path):
    rng = random.Random(15)
    augmented = random_corpus(rng, 40)
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    build_index(augmented).persist(a_dir)
    shuffled = augmented[:]
    rng.shuffle(shuffled)
    build_index(shuffled).persist(b_dir)
    for name in ("manifest.json", "chunks.jsonl", "postings.json",
                 "vectors_text_table.bin", "vectors_image.bin"):
        assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes(), name


def test_load_empty_dir_raises_io_error(tmp_path):
    with pytest.raises(IndexIoError):
        load_index(tmp_path)


def test_tampered_checksum_raises_corrupt(tmp_path):
    build_index(toy_corpus()).persist(tmp_path)
    blob = (tmp_path / "postings.json").read_bytes()
    (tmp_path / "postings.json").write_bytes(blob.replace(b"radar", b"sonar", 1))
    with pytest.raises(CorruptIndex):
        load_index(tmp_path)


def test_version_gate(tmp_path):
    import json

    build_index(toy_corpus()).persist(tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["format_version"] = 999
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(VersionMismatch):
        load_index(tmp_path)


def test_params_validation():
    with pytest.raises(ValueError):
        Bm25fParams(k1=0.0)
    with pytest.raises(ValueError):
        Bm25fParams(b_per_field=(("body", 1.5), ("context", 0.75)))
    with pytest.raises(ValueError):
        Bm25fParams(w_per_field=(("body", -1.0), ("context", 0.5)))


def test_unicode_bodies_and_ids_roundtrip(tmp_path):
    augmented = [
        make_aug("café.pdf", 0, "prévisions météo réseau d'observation", "résumé"),
        make_aug("café.pdf", 1, "ηχητικές σειρήνες ειδοποίησης", "περίληψη"),
    ]
    index = build_index(augmented)
    hits = index.lexical_search("météo", None, 5)
    assert hits and hits[0].chunk_id == "café.pdf#0#text"
    index.persist(tmp_path)
    reloaded = load_index(tmp_path)
    assert reloaded.lexical_search("σειρήνες", None, 5) == \
        index.lexical_search("σειρήνες", None, 5)
    assert reloaded.get_chunk("café.pdf#1#text").chunk.body.startswith("ηχητικές")


def test_image_space_dense_search_by_payload():
    aug = make_aug("pic.pdf", 0, "", "a figure about funding", kind="image")
    aug = build_augmented(
        Chunk(id=chunk_id("pic.pdf", 0, "image"), file_name="pic.pdf", kind="image",
              page_span=(1, 1), body="funding chart", ordinal=0, image_ref="fig-ref-1"),
        "a figure about funding",
    )
    index = build_index([aug])
    # image vectors embed the image reference payload, not the caption text
    emb = embedders()["image"]
    hits = index.dense_search(emb.embed("fig-ref-1"), "image", None, 5)
    assert hits[0].chunk_id == "pic.pdf#0#image"
    assert hits[0].raw_score == pytest.approx(1.0, abs=1e-6)
    assert index.dense_search(emb.embed("something else"), "image", None, 5)[0].raw_score < 1.0
