"""Classification + budget-allocation strategies over an indexed document.

All strategies emit the same schema-validated ExtractionResult: per-pillar
amounts with verbatim, page-anchored evidence spans. Evidence quotes are
always re-checked against the chunk bodies they cite; a pillar that ends up
with a positive amount but no surviving evidence has its amount zeroed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .augment import AugmentedChunk
from .errors import ClassifierFailure, EwsError, Issue, SchemaViolation
from .index_store import Index
from .money import parse_money
from .pillars import PILLAR_ORDER, PillarId
from .ports import ClassifierPort, EmbedderPort, LlmPort
from .prompts import load_pillar_queries, load_taxonomy, load_template, render_exemplars
from .retrieval import RetrievalConfig, hybrid_query
from .textnorm import normalize_match_text

logger = logging.getLogger(__name__)

PILLAR_NAMES = {
    PillarId.P1: "disaster risk knowledge",
    PillarId.P2: "detection, monitoring and forecasting",
    PillarId.P3: "warning dissemination and communication",
    PillarId.P4: "preparedness and response",
    PillarId.XP: "governance and sustainability (cross-pillar)",
}

METHODS = ("zero_shot", "few_shot", "classifier", "cot", "agent")

# A separately asserted document total may diverge from the pillar sum by at
# most this relative amount before a SumMismatch warning is recorded.
TOTAL_MISMATCH_RTOL = 0.005


@dataclass(frozen=True)
class EvidenceSpan:
    chunk_id: str
    quote: str  # verbatim substring of the chunk body
    page: int


@dataclass(frozen=True)
class PillarAllocation:
    amount: float
    evidence: tuple[EvidenceSpan, ...] = ()


@dataclass(frozen=True)
class ExtractionResult:
    file_name: str
    method: str
    currency: str
    total_ews_budget: float
    pillar_allocations: dict[PillarId, PillarAllocation]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class TraceEntry:
    query: str
    chunk_ids: tuple[str, ...]
    pillar: Optional[PillarId] = None


@dataclass
class RetrievalTrace:
    """Ranked top-k lists recorded during extraction; evaluation needs them
    for recall@5."""

    file_name: str
    method: str
    entries: list[TraceEntry] = field(default_factory=list)

    def record(self, query: str, chunks: Sequence[AugmentedChunk],
               pillar: Optional[PillarId] = None) -> None:
        self.entries.append(TraceEntry(query, tuple(c.chunk_id for c in chunks), pillar))

    def to_json(self) -> dict:
        return {
            "file_name": self.file_name,
            "method": self.method,
            "entries": [
                {"pillar": e.pillar.value if e.pillar else None,
                 "query": e.query, "chunk_ids": list(e.chunk_ids)}
                for e in self.entries
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RetrievalTrace":
        trace = cls(file_name=data["file_name"], method=data["method"])
        for e in data["entries"]:
            trace.entries.append(TraceEntry(
                query=e["query"], chunk_ids=tuple(e["chunk_ids"]),
                pillar=PillarId(e["pillar"]) if e["pillar"] else None,
            ))
        return trace


# --- budget items and result assembly -------------------------------------

@dataclass
class BudgetItem:
    amount: float
    currency: str
    label: str
    evidence: list[EvidenceSpan]


def render_chunks(chunks: Sequence[AugmentedChunk]) -> str:
    blocks = []
    for c in chunks:
        first, last = c.chunk.page_span
        pages = f"page {first}" if first == last else f"pages {first}-{last}"
        blocks.append(f"[{c.chunk_id}] ({pages})\n{c.chunk.body}")
    return "\n\n---\n\n".join(blocks)


def _locate_quote(quote: str, chunks: Sequence[AugmentedChunk]) -> Optional[AugmentedChunk]:
    for c in chunks:
        if quote in c.chunk.body:
            return c
    return None


def validate_evidence(raw_items: list, chunks: Sequence[AugmentedChunk],
                      warnings: list[str]) -> list[EvidenceSpan]:
    """Ground model-reported evidence: each quote must be a verbatim
    substring of a cited (or discoverable) chunk body; failures are dropped
    with a warning. Pages outside the chunk's span fall back to its first
    page."""
    by_id = {c.chunk_id: c for c in chunks}
    spans: list[EvidenceSpan] = []
    for raw in raw_items:
        if isinstance(raw, str):
            raw = {"quote": raw}
        if not isinstance(raw, dict) or not str(raw.get("quote", "")):
            warnings.append("evidence item without a quote dropped")
            continue
        quote = str(raw["quote"])
        target = by_id.get(str(raw.get("chunk_id", "")))
        if target is not None and quote not in target.chunk.body:
            target = None
        if target is None:
            target = _locate_quote(quote, chunks)
        if target is None:
            warnings.append(f"quote not found in any candidate chunk: {quote[:60]!r}")
            continue
        first, last = target.chunk.page_span
        page = raw.get("page")
        if not isinstance(page, int) or not first <= page <= last:
            if page is not None and not isinstance(page, bool) and isinstance(page, int):
                warnings.append(f"evidence page {page} outside chunk span; using {first}")
            page = first
        span = EvidenceSpan(chunk_id=target.chunk_id, quote=quote, page=page)
        if span not in spans:
            spans.append(span)
    return spans


def parse_amount_field(value, warnings: list[str], context: str) -> tuple[float, str]:
    """Parse a model-reported amount; unparseable amounts become 0 with a
    warning rather than failing the document."""
    try:
        amount, currency = parse_money(str(value))
    except EwsError as exc:
        warnings.append(f"{context}: unparseable amount {value!r} ({exc}); treated as 0")
        return 0.0, "USD"
    if amount < 0:
        warnings.append(f"{context}: negative amount {value!r} treated as 0")
        return 0.0, currency
    return amount, currency


def _dedupe_items(items: list[BudgetItem], pillar: PillarId,
                  warnings: list[str]) -> list[BudgetItem]:
    """Drop repeats of the same figure under the same normalized row label
    within one pillar (duplicate table renderings of one budget line)."""
    seen: set[tuple[float, str]] = set()
    kept = []
    for item in items:
        key = (item.amount, normalize_match_text(item.label))
        if item.amount > 0 and key in seen:
            warnings.append(
                f"{pillar.value}: duplicate budget line {item.label!r} ({item.amount:g}) dropped"
            )
            continue
        seen.add(key)
        kept.append(item)
    return kept


def assemble_result(file_name: str, method: str,
                    per_pillar: dict[PillarId, list[BudgetItem]],
                    warnings: list[str],
                    asserted_total: Optional[float] = None,
                    asserted_currency: Optional[str] = None) -> ExtractionResult:
    """Build a schema-valid result: dedupe items, enforce the evidence rule,
    reconcile the total against the pillar sum (the sum always wins)."""
    allocations: dict[PillarId, PillarAllocation] = {}
    currencies: list[str] = []
    for pillar in PILLAR_ORDER:
        items = _dedupe_items(per_pillar.get(pillar, []), pillar, warnings)
        amount = sum(i.amount for i in items)
        evidence: list[EvidenceSpan] = []
        for i in items:
            for span in i.evidence:
                if span not in evidence:
                    evidence.append(span)
        if amount > 0 and not evidence:
            warnings.append(f"{pillar.value}: amount {amount:g} has no surviving evidence; zeroed")
            amount = 0.0
        for i in items:
            if i.amount > 0:
                currencies.append(i.currency)
        allocations[pillar] = PillarAllocation(amount=amount, evidence=tuple(evidence))

    # same figure grounded in the same chunk under two pillars: legitimate
    # (cross-pillar costs exist) but worth flagging
    for i, p in enumerate(PILLAR_ORDER):
        for q in PILLAR_ORDER[i + 1:]:
            a, b = allocations[p], allocations[q]
            if a.amount > 0 and a.amount == b.amount:
                shared = {s.chunk_id for s in a.evidence} & {s.chunk_id for s in b.evidence}
                if shared:
                    warnings.append(
                        f"DuplicateEvidence: {a.amount:g} appears under {p.value} and {q.value} "
                        f"from chunk(s) {sorted(shared)}"
                    )

    distinct = sorted(set(currencies))
    if asserted_currency:
        distinct = sorted(set(distinct) | {asserted_currency})
    if len(distinct) > 1:
        warnings.append(f"MixedCurrency: {distinct}; amounts were not converted")
    currency = currencies[0] if currencies else (asserted_currency or "USD")

    pillar_sum = sum(a.amount for a in allocations.values())
    if asserted_total is not None:
        base = asserted_total if asserted_total > 0 else pillar_sum
        if base > 0 and abs(asserted_total - pillar_sum) > TOTAL_MISMATCH_RTOL * base:
            warnings.append(
                f"SumMismatch: stated total {asserted_total:g} vs pillar sum {pillar_sum:g}; "
                "pillar sum wins"
            )

    return ExtractionResult(
        file_name=file_name, method=method, currency=currency,
        total_ews_budget=pillar_sum, pillar_allocations=allocations,
        warnings=tuple(warnings),
    )


def _zero_result(file_name: str, method: str, warnings: list[str]) -> ExtractionResult:
    return assemble_result(file_name, method, {}, warnings)


# --- direct (zero-shot / few-shot) strategy --------------------------------

def extract_direct(file_name: str, index: Index, llm: LlmPort,
                   embedder: EmbedderPort, mode: str = "zero_shot",
                   exemplars: Optional[list[dict]] = None,
                   cfg: RetrievalConfig = RetrievalConfig(),
                   trace: Optional[RetrievalTrace] = None) -> ExtractionResult:
    """One combined classify+budget prompt per pillar over its retrieved
    top-k chunks; few-shot prepends annotated exemplars."""
    if mode not in ("zero_shot", "few_shot"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "few_shot" and not exemplars:
        raise ValueError("few_shot mode requires exemplars")

    warnings: list[str] = []
    if not index.has_file(file_name):
        warnings.append(f"UnknownFile: {file_name!r} not in index")
        return _zero_result(file_name, mode, warnings)

    template = load_template("class_budget")
    taxonomy = load_taxonomy()
    exemplar_text = render_exemplars(exemplars) if mode == "few_shot" else "(no examples)"
    queries = load_pillar_queries()

    per_pillar: dict[PillarId, list[BudgetItem]] = {}
    for pillar in PILLAR_ORDER:
        query = queries[pillar]
        chunks = hybrid_query(query, file_name, index, embedder, cfg, warnings)
        if trace is not None:
            trace.record(query, chunks, pillar)
        if not chunks:
            continue
        prompt = template.render(
            taxonomy=taxonomy, exemplars=exemplar_text, pillar=pillar.value,
            pillar_name=PILLAR_NAMES[pillar], chunks=render_chunks(chunks),
        )
        reply = json.loads(llm.complete(prompt, decode="json", tag="class_budget"))
        if not isinstance(reply, dict) or "applies" not in reply:
            raise SchemaViolation(f"class_budget reply for {pillar.value} lacks 'applies'")
        if not reply["applies"]:
            continue
        amount, currency = parse_amount_field(
            reply.get("amount", 0), warnings, f"{pillar.value} class_budget"
        )
        evidence = validate_evidence(reply.get("evidence", []), chunks, warnings)
        label = str(reply.get("item", "")) or (evidence[0].quote if evidence else pillar.value)
        per_pillar[pillar] = [BudgetItem(amount, currency, label, evidence)]

    return assemble_result(file_name, mode, per_pillar, warnings)


# --- classifier-port strategy ----------------------------------------------

def extract_with_classifier(file_name: str, index: Index,
                            classifier: ClassifierPort, llm: LlmPort,
                            trace: Optional[RetrievalTrace] = None) -> ExtractionResult:
    """Label every text/table chunk with the classifier port, then one
    budget prompt per labelled pillar."""
    warnings: list[str] = []
    if not index.has_file(file_name):
        warnings.append(f"UnknownFile: {file_name!r} not in index")
        return _zero_result(file_name, "classifier", warnings)

    doc_chunks = sorted(
        (index.get_chunk(cid) for cid in index.chunk_ids()
         if index.get_chunk(cid).chunk.file_name == file_name),
        key=lambda c: c.chunk.ordinal,
    )
    groups: dict[PillarId, list[AugmentedChunk]] = {}
    for aug in doc_chunks:
        if aug.chunk.kind == "image":
            continue
        try:
            labels = classifier.classify(aug.augmented_body)
        except Exception as exc:
            warnings.append(f"ClassifierFailure: {aug.chunk_id} skipped ({exc})")
            continue
        bad = {l for l in labels if not isinstance(l, PillarId)}
        if bad:
            raise ClassifierFailure(aug.chunk_id, f"labels outside the pillar set: {bad}")
        for label in labels:
            groups.setdefault(label, []).append(aug)

    template = load_template("budget")
    taxonomy = load_taxonomy()
    per_pillar: dict[PillarId, list[BudgetItem]] = {}
    for pillar in PILLAR_ORDER:
        chunks = groups.get(pillar)
        if not chunks:
            continue
        prompt = template.render(
            taxonomy=taxonomy, pillar=pillar.value,
            pillar_name=PILLAR_NAMES[pillar], chunks=render_chunks(chunks),
        )
        reply = json.loads(llm.complete(prompt, decode="json", tag="budget"))
        if not isinstance(reply, dict) or "amount" not in reply:
            raise SchemaViolation(f"budget reply for {pillar.value} lacks 'amount'")
        amount, currency = parse_amount_field(reply["amount"], warnings, f"{pillar.value} budget")
        if amount == 0:
            continue
        evidence = validate_evidence(reply.get("evidence", []), chunks, warnings)
        label = str(reply.get("item", "")) or (evidence[0].quote if evidence else pillar.value)
        per_pillar[pillar] = [BudgetItem(amount, currency, label, evidence)]

    return assemble_result(file_name, "classifier", per_pillar, warnings)


# --- chain-of-thought strategy ----------------------------------------------

def extract_cot(file_name: str, index: Index, llm: LlmPort,
                embedder: EmbedderPort, cfg: RetrievalConfig = RetrievalConfig(),
                trace: Optional[RetrievalTrace] = None) -> ExtractionResult:
    """Three-step chain per retrieved chunk: reformat tables, classify, then
    allocate a budget per assigned label."""
    warnings: list[str] = []
    if not index.has_file(file_name):
        warnings.append(f"UnknownFile: {file_name!r} not in index")
        return _zero_result(file_name, "cot", warnings)

    queries = load_pillar_queries()
    retrieved: dict[str, AugmentedChunk] = {}
    for pillar in PILLAR_ORDER:
        chunks = hybrid_query(queries[pillar], file_name, index, embedder, cfg, warnings)
        if trace is not None:
            trace.record(queries[pillar], chunks, pillar)
        for c in chunks:
            retrieved.setdefault(c.chunk_id, c)

    taxonomy = load_taxonomy()
    reformat_tpl = load_template("reformat")
    class_tpl = load_template("class")
    budget_tpl = load_template("budget")

    per_pillar: dict[PillarId, list[BudgetItem]] = {}
    for aug in sorted(retrieved.values(), key=lambda c: c.chunk.ordinal):
        if aug.chunk.kind == "image":  # indexed but excluded from extraction
            continue
        body = aug.augmented_body
        if aug.chunk.kind == "table":
            try:
                body = llm.complete(reformat_tpl.render(chunk=body), tag="reformat")
            except EwsError as exc:
                warnings.append(f"reformat failed for {aug.chunk_id} ({exc}); using original")
                body = aug.augmented_body

        reply = json.loads(llm.complete(
            class_tpl.render(taxonomy=taxonomy, chunk=body), decode="json", tag="class"
        ))
        if not isinstance(reply, dict) or "labels" not in reply:
            raise SchemaViolation(f"class reply for {aug.chunk_id} lacks 'labels'")
        labels = []
        for raw in reply["labels"]:
            try:
                labels.append(PillarId(raw))
            except ValueError:
                warnings.append(f"unknown label {raw!r} for {aug.chunk_id} ignored")

        for pillar in PILLAR_ORDER:
            if pillar not in labels:
                continue
            breply = json.loads(llm.complete(
                budget_tpl.render(taxonomy=taxonomy, pillar=pillar.value,
                                  pillar_name=PILLAR_NAMES[pillar], chunks=body),
                decode="json", tag="budget",
            ))
            if not isinstance(breply, dict) or "amount" not in breply:
                raise SchemaViolation(f"budget reply for {aug.chunk_id}/{pillar.value} lacks 'amount'")
            amount, currency = parse_amount_field(
                breply["amount"], warnings, f"{pillar.value} budget ({aug.chunk_id})"
            )
            if amount == 0:
                continue
            evidence = validate_evidence(breply.get("evidence", []), [aug], warnings)
            label = str(breply.get("item", "")) or (evidence[0].quote if evidence else aug.chunk_id)
            per_pillar.setdefault(pillar, []).append(BudgetItem(amount, currency, label, evidence))

    return assemble_result(file_name, "cot", per_pillar, warnings)


# --- result validation and serialization -------------------------------------

def result_to_json(result: ExtractionResult) -> dict:
    return {
        "file_name": result.file_name,
        "method": result.method,
        "currency": result.currency,
        "total_ews_budget": result.total_ews_budget,
        "pillar_allocations": {
            p.value: {
                "amount": alloc.amount,
                "evidence": [
                    {"chunk_id": s.chunk_id, "quote": s.quote, "page": s.page}
                    for s in alloc.evidence
                ],
            }
            for p, alloc in sorted(result.pillar_allocations.items(), key=lambda kv: kv[0].value)
        },
        "warnings": list(result.warnings),
    }


def result_from_json(data: dict) -> ExtractionResult:
    allocations = {}
    for key, raw in data["pillar_allocations"].items():
        allocations[PillarId(key)] = PillarAllocation(
            amount=float(raw["amount"]),
            evidence=tuple(
                EvidenceSpan(chunk_id=e["chunk_id"], quote=e["quote"], page=e["page"])
                for e in raw.get("evidence", [])
            ),
        )
    return ExtractionResult(
        file_name=data["file_name"], method=data["method"],
        currency=data.get("currency", "USD"),
        total_ews_budget=float(data["total_ews_budget"]),
        pillar_allocations=allocations,
        warnings=tuple(data.get("warnings", [])),
    )


def result_schema() -> dict:
    text = resources.files("ews_tracker.schemas").joinpath("extraction_result.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_extraction(result: ExtractionResult, index: Optional[Index] = None) -> list[Issue]:
    """Re-check every result invariant, plus quote grounding against the
    live index when one is given."""
    issues: list[Issue] = []
    present = set(result.pillar_allocations)
    for pillar in PILLAR_ORDER:
        if pillar not in present:
            issues.append(Issue("MissingPillar", f"{pillar.value} missing from allocations"))
    if result.method not in METHODS and result.method != "external":
        issues.append(Issue("BadMethod", f"unknown method {result.method!r}"))
    if not (len(result.currency) == 3 and result.currency.isalpha() and result.currency.isupper()):
        issues.append(Issue("BadCurrency", f"{result.currency!r} is not an ISO 4217 code"))

    total = 0.0
    for pillar, alloc in result.pillar_allocations.items():
        total += alloc.amount
        if alloc.amount < 0:
            issues.append(Issue("NegativeAmount", f"{pillar.value} amount {alloc.amount}"))
        if alloc.amount > 0 and not alloc.evidence:
            issues.append(Issue("MissingEvidence", f"{pillar.value} has amount without evidence"))
        for span in alloc.evidence:
            if not span.quote:
                issues.append(Issue("EmptyQuote", f"{pillar.value} evidence with empty quote"))
                continue
            if index is not None:
                try:
                    aug = index.get_chunk(span.chunk_id)
                except EwsError:
                    issues.append(Issue("UnknownChunk", f"{span.chunk_id} not in index"))
                    continue
                if span.quote not in aug.chunk.body:
                    issues.append(Issue(
                        "UngroundedQuote",
                        f"quote not in {span.chunk_id}: {span.quote[:60]!r}",
                    ))
                first, last = aug.chunk.page_span
                if not first <= span.page <= last:
                    issues.append(Issue(
                        "PageOutOfSpan", f"page {span.page} outside {span.chunk_id} span"
                    ))
    base = result.total_ews_budget
    if abs(total - result.total_ews_budget) > TOTAL_MISMATCH_RTOL * (base if base > 0 else 1.0):
        issues.append(Issue(
            "TotalMismatch",
            f"pillar sum {total:g} != stated total {result.total_ews_budget:g}",
        ))
    return issues
