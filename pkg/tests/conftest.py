import pytest

from ews_tracker.augment import build_augmented
from ews_tracker.chunking import chunk_document
from ews_tracker.index_store import Index
from ews_tracker.interchange import DocumentIR, Element
from ews_tracker.ports import EmbeddingSpec, hash_embedder

P2_ROW = "| Component B: observation network and radar upgrade | 400,000 |"
P4_ROW = "| Component C: preparedness drills and training | 150,000 |"

P2_TABLE = "| item | amount (USD) |\n| --- | --- |\n" + P2_ROW
P4_TABLE = "| item | amount (USD) |\n| --- | --- |\n" + P4_ROW

INTRO = (
    "# Project proposal\n"
    "This project strengthens the national early warning chain, with "
    "components covering hazard monitoring, forecasting and community "
    "preparedness across the country."
)


def planted_document(name="proj-a.pdf"):
    return DocumentIR(name, (
        Element(kind="text", page=1, markdown=INTRO),
        Element(kind="table", page=2, markdown=P2_TABLE, table_dims=(2, 2)),
        Element(kind="table", page=3, markdown=P4_TABLE, table_dims=(2, 2)),
    ))


CONTEXTS = {
    "text": "Overview of an early warning project. It introduces the financed components.",
    "table": "A budget table of the project. It lists one component and its allocation.",
}


@pytest.fixture(scope="session")
def fixture_specs():
    return {
        "text_table": EmbeddingSpec("text_table", dim=64),
        "image": EmbeddingSpec("image", dim=64),
    }


@pytest.fixture(scope="session")
def fixture_embedders(fixture_specs):
    return {
        "text_table": hash_embedder(fixture_specs["text_table"], seed=0),
        "image": hash_embedder(fixture_specs["image"], seed=1),
    }


def build_planted_index(specs, embedders, doc=None):
    doc = doc or planted_document()
    augmented = [
        build_augmented(c, CONTEXTS.get(c.kind, "Part of the project document."))
        for c in chunk_document(doc)
    ]
    index = Index(specs=specs)
    index.upsert_chunks(augmented, embedders)
    return index, augmented


@pytest.fixture
def planted_index(fixture_specs, fixture_embedders):
    index, augmented = build_planted_index(fixture_specs, fixture_embedders)
    return index
