import random
import string

import pytest
from hypothesis import given, strategies as st

from ews_tracker.chunking import Chunk, ChunkConfig, chunk_document, chunk_id, split_text_by_headers
from ews_tracker.interchange import DocumentIR, Element

CFG = ChunkConfig()


def _doc(elements):
    return DocumentIR("doc.pdf", tuple(elements))


def test_table_and_image_only():
    doc = _doc([
        Element(kind="table", page=1, markdown="| a |", table_dims=(1, 1)),
        Element(kind="image", page=2, image_ref="x.png", caption="a figure"),
    ])
    chunks = chunk_document(doc, CFG)
    assert [(c.kind, c.ordinal) for c in chunks] == [("table", 0), ("image", 1)]
    assert chunks[0].id == "doc.pdf#0#table"
    assert chunks[1].body == "a figure"  # caption becomes the image chunk body
    assert chunks[1].image_ref == "x.png"


def test_empty_document_gives_no_chunks():
    assert chunk_document(_doc([]), CFG) == []


def _filler(rng, n):
    return "".join(rng.choice(string.ascii_lowercase + " ") for _ in range(n))


def test_two_headers_split_into_three_chunks():
    # hand-built 10,000-char text with two level-2 headers; each section is
    # long enough that no merge applies, short enough that no max-split does
    rng = random.Random(7)
    part1 = _filler(rng, 3000) + "\n"
    part2 = "## Section A\n" + _filler(rng, 3200) + "\n"
    part3 = "## Section B\n" + _filler(rng, 3772)
    text = part1 + part2 + part3
    assert len(text) == 10000

    doc = _doc([Element(kind="text", page=1, markdown=text)])
    chunks = chunk_document(doc, CFG)
    assert [c.kind for c in chunks] == ["text", "text", "text"]
    assert [c.body for c in chunks] == [part1, part2, part3]
    assert [c.ordinal for c in chunks] == [0, 1, 2]


def test_merge_rule_on_short_leading_segment():
    assert split_text_by_headers("intro\n## A\nbody", CFG) == ["intro\n## A\nbody"]


def test_no_headers_9000_chars_splits_into_three_bounded_segments():
    rng = random.Random(13)
    text = _filler(rng, 9000).replace("\n", " ")
    parts = split_text_by_headers(text, CFG)
    assert len(parts) == 3
    assert all(len(p) <= CFG.max_text_chars for p in parts)
    assert "".join(parts) == text


def test_split_prefers_paragraph_breaks():
    text = "a" * 3000 + "\n\n" + "b" * 3000
    parts = split_text_by_headers(text, CFG)
    assert parts == ["a" * 3000 + "\n\n", "b" * 3000]


def test_empty_text_gives_no_segments():
    assert split_text_by_headers("", CFG) == []


@given(st.text(alphabet=string.printable, max_size=12000))
def test_split_concatenation_always_recovers_input(text):
    assert "".join(split_text_by_headers(text, CFG)) == text


@given(st.text(alphabet=string.printable, max_size=12000))
def test_split_respects_max_once_past_it(text):
    for part in split_text_by_headers(text, CFG):
        # a part may exceed max only if it is unsplittable (no limit cut left)
        assert len(part) <= CFG.max_text_chars


def test_chunk_id_format():
    assert chunk_id("a.pdf", 0, "text") == "a.pdf#0#text"
    assert chunk_id("a.pdf", 1, "table") == "a.pdf#1#table"
    with pytest.raises(ValueError):
        chunk_id("a.pdf", -1, "text")


def test_chunk_id_injective_over_random_sample():
    rng = random.Random(42)
    seen = {}
    for _ in range(1000):
        name = "".join(rng.choice("ab#.x") for _ in range(rng.randint(1, 8)))
        args = (name, rng.randint(0, 30), rng.choice(["text", "table", "image"]))
        cid = chunk_id(*args)
        assert seen.setdefault(cid, args) == args, f"collision for {cid}"


def test_multi_page_text_run_page_span():
    doc = _doc([
        Element(kind="text", page=1, markdown="alpha " * 60),
        Element(kind="text", page=2, markdown="beta " * 60),
    ])
    chunks = chunk_document(doc, CFG)
    assert len(chunks) == 1
    assert chunks[0].page_span == (1, 2)


def test_text_runs_flush_around_tables_in_document_order():
    doc = _doc([
        Element(kind="text", page=1, markdown="first " * 50),
        Element(kind="table", page=1, markdown="| t |", table_dims=(1, 1)),
        Element(kind="text", page=2, markdown="second " * 50),
    ])
    chunks = chunk_document(doc, CFG)
    assert [c.kind for c in chunks] == ["text", "table", "text"]
    assert [c.ordinal for c in chunks] == [0, 1, 2]
    assert chunks[1].page_span == (1, 1)


_el_text = st.text(alphabet=string.ascii_lowercase + " #\n", min_size=1, max_size=600)


@st.composite
def _documents(draw):
    n = draw(st.integers(0, 6))
    elements = []
    for _ in range(n):
        kind = draw(st.sampled_from(["text", "table", "image"]))
        page = draw(st.integers(1, 9))
        if kind == "text":
            elements.append(Element(kind="text", page=page, markdown=draw(_el_text)))
        elif kind == "table":
            elements.append(Element(kind="table", page=page, markdown=draw(_el_text),
                                    table_dims=(1, 1)))
        else:
            elements.append(Element(kind="image", page=page, image_ref="i.png"))
    return DocumentIR("p.pdf", tuple(elements))


def _non_ws(s):
    return "".join(s.split())


@given(_documents())
def test_disjoint_coverage_and_content_conservation(doc):
    chunks = chunk_document(doc, CFG)
    # determinism
    assert chunks == chunk_document(doc, CFG)
    # ordinals contiguous, ids unique, one kind each
    assert [c.ordinal for c in chunks] == list(range(len(chunks)))
    assert len({c.id for c in chunks}) == len(chunks)
    counts = {"text": 0, "table": 0, "image": 0}
    for c in chunks:
        counts[c.kind] += 1
    assert counts["table"] == sum(1 for e in doc.elements if e.kind == "table")
    assert counts["image"] == sum(1 for e in doc.elements if e.kind == "image")
    # content conservation on the text/table stream (whitespace excluded)
    source = "".join(_non_ws(e.markdown) for e in doc.elements if e.kind != "image")
    produced = "".join(_non_ws(c.body) for c in chunks if c.kind != "image")
    assert produced == source
    # page spans are ordered and positive
    for c in chunks:
        assert 1 <= c.page_span[0] <= c.page_span[1]


def test_config_validates_bounds():
    with pytest.raises(ValueError):
        ChunkConfig(max_text_chars=100, min_text_chars=200)
