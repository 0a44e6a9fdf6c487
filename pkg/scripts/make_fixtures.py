#!/usr/bin/env python3
"""Regenerate the bundled test fixtures under fixtures/.

Produces:
  fixtures/corpus3/*.json          three interchange documents with planted
                                   pillar budget tables
  fixtures/corpus3/gold.csv        matching expert-style annotations
  fixtures/corpus3/scripts/*.json  mock LLM scripts per (document, method)
  fixtures/gold_298.csv            298-row annotation fixture

The generator simulates every extraction strategy in memory with the scripts
it writes and asserts the planted amounts are recovered exactly, so the
checked-in fixtures are self-consistent by construction.
"""

import csv
import json
import random
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ews_tracker.agent import run_agent
from ews_tracker.augment import augment_corpus
from ews_tracker.chunking import chunk_document
from ews_tracker.extraction import extract_cot, extract_direct, extract_with_classifier
from ews_tracker.index_store import Index
from ews_tracker.interchange import DocumentIR, Element, parse_document_ir, serialize_document_ir
from ews_tracker.pillars import PILLAR_ORDER, PillarId
from ews_tracker.ports import (
    EmbeddingSpec,
    hash_embedder,
    keyword_classifier,
    mock_llm,
)
from ews_tracker.prompts import load_exemplars
from ews_tracker.retrieval import RetrievalConfig, hybrid_query
from ews_tracker.prompts import load_pillar_queries

FIXTURES = REPO / "fixtures"
CORPUS = FIXTURES / "corpus3"
SCRIPTS = CORPUS / "scripts"

CTX_SUMMARY = ("This excerpt belongs to the project financing document. "
               "It describes one part of the plan.")

PILLAR_NAMES_SHORT = {
    PillarId.P1: "risk knowledge",
    PillarId.P2: "detection and forecasting",
    PillarId.P3: "warning dissemination",
    PillarId.P4: "response readiness",
    PillarId.XP: "governance",
}

# (pillar, row label, amount) per planted table
PLANTS = {
    "proj-alpha": [
        (PillarId.P1, "Risk mapping and vulnerability assessment programme", 400_000),
        (PillarId.P2, "Observation network and monitoring station upgrade", 1_200_000),
        (PillarId.XP, "Governance and institutional coordination unit", 150_000),
    ],
    "proj-beta": [
        (PillarId.P3, "Cell broadcast and siren alerting rollout", 600_000),
        (PillarId.P4, "Preparedness drills and training campaign", 250_000),
    ],
    "proj-gamma": [
        (PillarId.P2, "Radar installation and forecasting systems", 2_000_000),
        (PillarId.P4, "Evacuation shelter construction works", 350_000),
    ],
}

INTROS = {
    "proj-alpha": ("# National programme proposal\n"
                   "The programme modernises the meteorological and hydrological "
                   "offices of the requesting country. Financing figures per "
                   "component appear in the annexed tables of this document."),
    "proj-beta": ("# Island resilience project\n"
                  "The project equips national agencies and communities with the "
                  "tools described below. Each component's financing envelope is "
                  "set out in its budget annex table."),
    "proj-gamma": ("# Regional modernisation plan\n"
                   "This plan covers equipment renewal and operational "
                   "strengthening across the region. Consult the annexed tables "
                   "for the financing split by component."),
}

MID_TEXTS = {
    "proj-beta": ("## Component narrative\n"
                  "Community volunteers receive structured instruction and the "
                  "national agency coordinates delivery across all districts, "
                  "with per-district schedules agreed in advance each season."),
}


def table_markdown(label, amount):
    return (f"| activity | amount (USD) |\n| --- | --- |\n"
            f"| {label} | {amount:,} |")


def row_of(label, amount):
    return f"| {label} | {amount:,} |"


def build_documents():
    docs = {}
    for stem, plants in PLANTS.items():
        elements = [Element(kind="text", page=1, markdown=INTROS[stem])]
        page = 2
        for i, (pillar, label, amount) in enumerate(plants):
            if stem == "proj-beta" and i == 1:
                elements.append(Element(kind="text", page=page,
                                        markdown=MID_TEXTS["proj-beta"]))
                page += 1
            elements.append(Element(
                kind="table", page=page,
                markdown=table_markdown(label, amount), table_dims=(2, 2),
            ))
            page += 1
        if stem == "proj-alpha":
            elements.append(Element(kind="image", page=page, image_ref="fig1.png",
                                    caption="Funds by category"))
        docs[stem] = DocumentIR(f"{stem}.pdf", tuple(elements))
    return docs


def build_index(docs):
    specs = {
        "text_table": EmbeddingSpec("text_table", dim=256),
        "image": EmbeddingSpec("image", dim=256),
    }
    embedders = {
        "text_table": hash_embedder(specs["text_table"], seed=0),
        "image": hash_embedder(specs["image"], seed=1),
    }
    index = Index(specs=specs)
    llm = mock_llm({"ctx": [CTX_SUMMARY]})
    for doc in docs.values():
        chunks = chunk_document(doc)
        index.upsert_chunks(augment_corpus(chunks, doc, llm, max_in_flight=1), embedders)
    return index, embedders


def planted_chunk_ids(index, stem):
    """Map pillar -> (chunk_id, row quote, page) for the planted tables."""
    out = {}
    file_name = f"{stem}.pdf"
    by_label = {label: (pillar, amount) for pillar, label, amount in PLANTS[stem]}
    for cid in index.chunk_ids():
        aug = index.get_chunk(cid)
        if aug.chunk.file_name != file_name or aug.chunk.kind != "table":
            continue
        for label, (pillar, amount) in by_label.items():
            if label in aug.chunk.body:
                out[pillar] = (cid, row_of(label, amount), aug.chunk.page_span[0], amount)
    assert len(out) == len(PLANTS[stem]), f"missed planted tables for {stem}"
    return out


def amount_text(amount):
    return f"USD {amount:,}"


def direct_script(stem, plants_by_pillar):
    replies = []
    for pillar in PILLAR_ORDER:
        if pillar in plants_by_pillar:
            cid, quote, page, amount = plants_by_pillar[pillar]
            replies.append({"applies": True, "amount": amount_text(amount),
                            "evidence": [{"quote": quote, "page": page,
                                          "chunk_id": cid}]})
        else:
            replies.append({"applies": False, "amount": "0", "evidence": []})
    return {"tags": {"class_budget": replies}}


def clf_script(index, stem, plants_by_pillar):
    """Budget replies in pillar order for pillars whose classified group is
    non-empty; generator asserts each planted table lands in its group."""
    clf = keyword_classifier()
    file_name = f"{stem}.pdf"
    groups = {}
    for cid in index.chunk_ids():
        aug = index.get_chunk(cid)
        if aug.chunk.file_name != file_name or aug.chunk.kind == "image":
            continue
        for label in clf.classify(aug.augmented_body):
            groups.setdefault(label, []).append(cid)
    replies = []
    for pillar in PILLAR_ORDER:
        if pillar not in groups:
            assert pillar not in plants_by_pillar, \
                f"{stem}: planted {pillar} table not classified"
            continue
        if pillar in plants_by_pillar:
            cid, quote, page, amount = plants_by_pillar[pillar]
            assert cid in groups[pillar], f"{stem}: {pillar} table missing from group"
            replies.append({"amount": amount_text(amount),
                            "evidence": [{"quote": quote, "page": page, "chunk_id": cid}]})
        else:
            replies.append({"amount": "0", "evidence": []})
    return {"tags": {"budget": replies}}


def cot_script(index, embedders, stem, plants_by_pillar):
    """Simulate retrieval to fix the chunk processing order, then script the
    reformat/class/budget queues accordingly."""
    file_name = f"{stem}.pdf"
    queries = load_pillar_queries()
    cfg = RetrievalConfig()
    retrieved = {}
    for pillar in PILLAR_ORDER:
        for aug in hybrid_query(queries[pillar], file_name, index,
                                embedders["text_table"], cfg):
            retrieved.setdefault(aug.chunk_id, aug)
    ordered = [a for a in sorted(retrieved.values(), key=lambda c: c.chunk.ordinal)
               if a.chunk.kind != "image"]
    table_pillar = {cid: pillar for pillar, (cid, _, _, _) in plants_by_pillar.items()}
    for pillar, (cid, _, _, _) in plants_by_pillar.items():
        assert cid in retrieved, f"{stem}: {pillar} table not retrieved for cot"

    reformat, classes, budgets = [], [], []
    for aug in ordered:
        if aug.chunk.kind == "table":
            reformat.append(aug.chunk.body)
        pillar = table_pillar.get(aug.chunk_id)
        classes.append({"labels": [pillar.value] if pillar else []})
        if pillar:
            _, quote, page, amount = plants_by_pillar[pillar]
            budgets.append({"amount": amount_text(amount),
                            "evidence": [{"quote": quote, "page": page,
                                          "chunk_id": aug.chunk_id}]})
    return {"tags": {"reformat": reformat, "class": classes, "budget": budgets}}


def agent_script(stem, plants_by_pillar):
    instructions = []
    queries = []
    mapping = {}
    for pillar, (cid, quote, page, amount) in plants_by_pillar.items():
        iid = f"find-{pillar.value.lower()}"
        instructions.append({
            "id": iid,
            "text": f"Locate the {PILLAR_NAMES_SHORT[pillar]} budget line and its amount",
            "needs_retrieval": True,
        })
        mapping[iid] = len(queries)
        queries.append(quote.strip("| ").split("|")[0].strip() + " budget")
    instructions.append({"id": "summarize", "text": "Collect the located amounts",
                         "needs_retrieval": False})
    pillars_payload = {}
    total = 0
    for pillar, (cid, quote, page, amount) in plants_by_pillar.items():
        total += amount
        pillars_payload[pillar.value] = {
            "amount": amount_text(amount),
            "evidence": [{"quote": quote, "chunk_id": cid, "page": page}],
        }
    return {"tags": {
        "plan": [{"instructions": instructions, "queries": queries}],
        "map": [mapping],
        "validate": [{"sufficient": True}],
        "reason": ["All pillar budget lines were located with their amounts."],
        "format": [{"pillars": pillars_payload, "total": amount_text(total),
                    "currency": "USD"}],
    }}


def script_llm(payload):
    """Instantiate a MockLlm exactly as the CLI does from a script file."""
    def convert(entry):
        return entry if isinstance(entry, str) else json.dumps(entry)

    return mock_llm({tag: [convert(e) for e in queue]
                     for tag, queue in payload["tags"].items()})


def verify_strategy(method, stem, index, embedders, payload, plants_by_pillar):
    llm = script_llm(payload)
    file_name = f"{stem}.pdf"
    if method == "zero":
        result = extract_direct(file_name, index, llm, embedders["text_table"])
    elif method == "few":
        result = extract_direct(file_name, index, llm, embedders["text_table"],
                                mode="few_shot", exemplars=load_exemplars())
    elif method == "clf":
        result = extract_with_classifier(file_name, index, keyword_classifier(), llm)
    elif method == "cot":
        result = extract_cot(file_name, index, llm, embedders["text_table"])
    else:
        result = run_agent(file_name, index, llm, embedders["text_table"])
    expected = {p: 0.0 for p in PILLAR_ORDER}
    for pillar, (_, _, _, amount) in plants_by_pillar.items():
        expected[pillar] = float(amount)
    got = {p: result.pillar_allocations[p].amount for p in PILLAR_ORDER}
    assert got == expected, f"{stem}/{method}: {got} != {expected}\n{result.warnings}"
    return result


def write_corpus_gold(docs, path):
    rows = []
    for stem, plants in PLANTS.items():
        doc = docs[stem]
        pages = {}
        for el in doc.elements:
            if el.kind == "table":
                for pillar, label, amount in plants:
                    if label in el.markdown:
                        pages[pillar] = el.page
        for i, (pillar, label, amount) in enumerate(plants):
            rows.append({
                "Fund": "CREWS",
                "Project ID": stem,
                "Component": f"Component {chr(ord('A') + i)}",
                "Outcome/Expected-Outcome/Objectives": f"Outcome {i + 1}: improved {PILLAR_NAMES_SHORT[pillar]}",
                "Output/Sub-component": f"Output {i + 1}.1",
                "Activity/Output Indicator": label,
                "Page Number": pages[pillar],
                "Amount": f"{amount}",
                "Label": {"P1": "Pillar 1", "P2": "Pillar 2", "P3": "Pillar 3",
                          "P4": "Pillar 4", "XP": "Cross-Pillar"}[pillar.value],
            })
    _write_csv(path, rows)


def _write_csv(path, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "Fund", "Project ID", "Component", "Outcome/Expected-Outcome/Objectives",
            "Output/Sub-component", "Activity/Output Indicator", "Page Number",
            "Amount", "Label",
        ])
        writer.writeheader()
        writer.writerows(rows)


def write_gold_298(path):
    rng = random.Random(298)
    labels = ["Pillar 1", "Pillar 2", "Pillar 3", "Pillar 4", "Cross-Pillar"]
    gear = ["sensor network", "flood model", "siren grid", "training series",
            "steering committee", "data platform", "risk atlas", "radio link"]
    verbs = ["install", "upgrade", "roll out", "maintain", "commission"]
    rows = []
    n_projects = 18
    per_project = [298 // n_projects] * n_projects
    for i in range(298 - sum(per_project)):
        per_project[i] += 1
    for p in range(n_projects):
        project = f"crews-{p + 1:03d}"
        for r in range(per_project[p]):
            label = labels[(p + r) % 5]
            rows.append({
                "Fund": "CREWS",
                "Project ID": project,
                "Component": f"Component {1 + r % 4}",
                "Outcome/Expected-Outcome/Objectives": f"Outcome {1 + r % 3}",
                "Output/Sub-component": f"Output {1 + r % 4}.{1 + r % 5}",
                "Activity/Output Indicator":
                    f"{rng.choice(verbs)} {rng.choice(gear)} phase {1 + r % 3}",
                "Page Number": rng.randint(1, 80),
                "Amount": str(rng.randrange(5, 4000) * 1000),
                "Label": label,
            })
    assert len(rows) == 298
    _write_csv(path, rows)


def main():
    CORPUS.mkdir(parents=True, exist_ok=True)
    SCRIPTS.mkdir(parents=True, exist_ok=True)

    docs = build_documents()
    for stem, doc in docs.items():
        text = serialize_document_ir(doc)
        parse_document_ir(text)  # self-check
        (CORPUS / f"{stem}.json").write_text(text, "utf-8")

    index, embedders = build_index(docs)
    index_script = {"tags": {"ctx": [CTX_SUMMARY]}}
    (SCRIPTS / "index.json").write_text(json.dumps(index_script, indent=2) + "\n", "utf-8")

    builders = {
        "zero": lambda stem, plants: direct_script(stem, plants),
        "few": lambda stem, plants: direct_script(stem, plants),
        "clf": lambda stem, plants: clf_script(index, stem, plants),
        "cot": lambda stem, plants: cot_script(index, embedders, stem, plants),
        "agent": lambda stem, plants: agent_script(stem, plants),
    }
    for stem in PLANTS:
        plants_by_pillar = planted_chunk_ids(index, stem)
        for method, builder in builders.items():
            payload = builder(stem, plants_by_pillar)
            verify_strategy(method, stem, index, embedders, payload, plants_by_pillar)
            path = SCRIPTS / f"{stem}__{method}.json"
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")

    write_corpus_gold(docs, CORPUS / "gold.csv")
    write_gold_298(FIXTURES / "gold_298.csv")
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
