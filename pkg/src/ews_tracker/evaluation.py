"""Evaluation against expert gold annotations.

Five metric facets per system run: evidence extraction (with recall@5 from
the recorded retrieval traces), amount-per-pillar under the budget-fidelity
tolerance, pillar-label assignment, evidence-to-label mapping, and
total-amount accuracy.

The amount facet's true-positive rule is joint: the pillar must truly carry
budget, the prediction must claim it does, and the predicted amount must lie
within tolerance * gold_total of the gold amount (boundary inclusive). A
both-positive but off-tolerance pair therefore counts as a false positive
AND a false negative — it penalizes precision and recall simultaneously,
unlike pure label confusion (see README, evaluation notes).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    BadAmount,
    BadLabel,
    InconsistentProjects,
    MissingColumn,
    MissingGold,
    MissingRetrievalTrace,
    NonPositiveTotal,
    UnknownProject,
)
from .extraction import ExtractionResult, RetrievalTrace
from .index_store import Index
from .money import parse_number
from .pillars import PILLAR_ORDER, PillarId, normalize_label
from .textnorm import normalize_match_text, tokenize

GOLD_COLUMNS = (
    "Fund",
    "Project ID",
    "Component",
    "Outcome/Expected-Outcome/Objectives",
    "Output/Sub-component",
    "Activity/Output Indicator",
    "Page Number",
    "Amount",
    "Label",
)


@dataclass(frozen=True)
class GoldRecord:
    fund: str
    project_id: str
    component: str
    outcome: str
    output: str
    activity: str
    page: int
    amount: float
    label: PillarId


@dataclass(frozen=True)
class GoldSegment:
    """One gold evidence segment: (project, page, text, pillar)."""

    project_id: str
    page: int
    text: str
    pillar: PillarId


@dataclass(frozen=True)
class BudgetVector:
    b: dict[PillarId, float]
    total: float


@dataclass(frozen=True)
class EvalConfig:
    tolerance: float = 0.05  # budget-fidelity tolerance, fraction of gold total
    recall_at: int = 5
    containment_threshold: float = 0.8  # gold-token containment fallback

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must be in (0, 1)")


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class EvidenceFacet:
    precision: float
    recall: float
    f1: float
    recall_at_5: float


@dataclass(frozen=True)
class ConfusionFacet:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


@dataclass(frozen=True)
class MappingFacet:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class TotalsFacet:
    fraction_within_tolerance: float
    mean_percentage_error: float


@dataclass
class MetricsReport:
    projects: tuple[str, ...] = ()
    evidence: Optional[EvidenceFacet] = None
    amounts: Optional[ConfusionFacet] = None
    labels: Optional[ConfusionFacet] = None
    mapping: Optional[MappingFacet] = None
    totals: Optional[TotalsFacet] = None
    counts: dict = field(default_factory=dict)  # facet -> pillar -> Confusion

    def to_json(self) -> dict:
        def block(x):
            return None if x is None else vars(x)

        return {
            "projects": list(self.projects),
            "evidence": block(self.evidence),
            "amounts": block(self.amounts),
            "labels": block(self.labels),
            "mapping": block(self.mapping),
            "totals": block(self.totals),
            "counts": {
                facet: {p: c.to_json() for p, c in per.items()}
                for facet, per in self.counts.items()
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        def load(key, klass):
            raw = data.get(key)
            return klass(**raw) if raw else None

        return cls(
            projects=tuple(data.get("projects", ())),
            evidence=load("evidence", EvidenceFacet),
            amounts=load("amounts", ConfusionFacet),
            labels=load("labels", ConfusionFacet),
            mapping=load("mapping", MappingFacet),
            totals=load("totals", TotalsFacet),
            counts={
                facet: {p: Confusion(**c) for p, c in per.items()}
                for facet, per in data.get("counts", {}).items()
            },
        )


# --- gold data ---------------------------------------------------------------

def load_gold_csv(path: str | Path) -> list[GoldRecord]:
    """Parse the nine-column expert annotation CSV. Header matching is
    order-insensitive but name-exact; label and numeric cells (Amount, Page
    Number) are normalized, with errors naming the CSV row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or ())
        missing = [c for c in GOLD_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"gold CSV missing column(s) {missing}")
        records = []
        for row_no, row in enumerate(reader, start=2):  # header is row 1
            try:
                label = normalize_label(row["Label"])
            except KeyError:
                raise BadLabel(f"row {row_no}: unknown label {row['Label']!r}") from None
            try:
                amount = parse_number(row["Amount"])
            except Exception:
                raise BadAmount(f"row {row_no}: bad Amount {row['Amount']!r}") from None
            try:
                page = int(row["Page Number"].strip())
                if page < 1:
                    raise ValueError
            except Exception:
                raise BadAmount(f"row {row_no}: bad Page Number {row['Page Number']!r}") from None
            if amount < 0:
                raise BadAmount(f"row {row_no}: negative Amount")
            records.append(GoldRecord(
                fund=row["Fund"].strip(),
                project_id=row["Project ID"].strip(),
                component=row["Component"].strip(),
                outcome=row["Outcome/Expected-Outcome/Objectives"].strip(),
                output=row["Output/Sub-component"].strip(),
                activity=row["Activity/Output Indicator"].strip(),
                page=page,
                amount=amount,
                label=label,
            ))
    return records


def budget_vector(records: list[GoldRecord], project_id: str) -> BudgetVector:
    """Per-project gold budget vector; the total is the sum of amounts."""
    mine = [r for r in records if r.project_id == project_id]
    if not mine:
        raise UnknownProject(project_id)
    b = {p: 0.0 for p in PILLAR_ORDER}
    for r in mine:
        b[r.label] += r.amount
    return BudgetVector(b=b, total=sum(b.values()))


def gold_segments(records: list[GoldRecord]) -> list[GoldSegment]:
    """Evidence segments derived from gold rows: the activity text (falling
    back to output, then outcome) anchored at the row's page."""
    segments = []
    for r in records:
        text = r.activity or r.output or r.outcome
        if text:
            segments.append(GoldSegment(r.project_id, r.page, text, r.label))
    return segments


def pillar_indicator(v: BudgetVector) -> tuple[int, ...]:
    """Binary indicator per pillar: 1 iff its amount is positive."""
    return tuple(1 if v.b[p] > 0 else 0 for p in PILLAR_ORDER)


def budget_tp(pred_amount: float, gold_amount: float, gold_total: float,
              cfg: EvalConfig = EvalConfig()) -> bool:
    """Joint TP rule: correct positive label AND |pred - gold| within
    tolerance * gold_total, boundary inclusive."""
    if gold_total <= 0:
        raise NonPositiveTotal(f"gold total {gold_total}")
    return (
        gold_amount > 0
        and pred_amount > 0
        and abs(pred_amount - gold_amount) <= cfg.tolerance * gold_total
    )


# --- confusion facets ---------------------------------------------------------

def _macro(per_pillar: dict[PillarId, Confusion], n_pairs: int) -> ConfusionFacet:
    tp = sum(c.tp for c in per_pillar.values())
    tn = sum(c.tn for c in per_pillar.values())
    precs = [per_pillar[p].precision for p in PILLAR_ORDER]
    recs = [per_pillar[p].recall for p in PILLAR_ORDER]
    f1s = [per_pillar[p].f1 for p in PILLAR_ORDER]
    return ConfusionFacet(
        accuracy=(tp + tn) / n_pairs if n_pairs else 0.0,
        macro_precision=sum(precs) / len(PILLAR_ORDER),
        macro_recall=sum(recs) / len(PILLAR_ORDER),
        macro_f1=sum(f1s) / len(PILLAR_ORDER),
    )


def _check_gold(preds: dict[str, ExtractionResult], gold: dict[str, BudgetVector]) -> None:
    for project in preds:
        if project not in gold:
            raise MissingGold(project)


def amount_metrics(preds: dict[str, ExtractionResult],
                   gold: dict[str, BudgetVector],
                   cfg: EvalConfig = EvalConfig()) -> tuple[ConfusionFacet, dict[PillarId, Confusion]]:
    """Amount-per-pillar facet under the fidelity tolerance. FP is any
    positive prediction that is not a TP; FN is any positive gold amount not
    recovered as a TP; a both-positive off-tolerance pair is both."""
    _check_gold(preds, gold)
    cells = {p: {"tp": 0, "fp": 0, "fn": 0, "tn": 0} for p in PILLAR_ORDER}
    for project, result in preds.items():
        vec = gold[project]
        for pillar in PILLAR_ORDER:
            pred_amount = result.pillar_allocations[pillar].amount
            gold_amount = vec.b[pillar]
            if budget_tp(pred_amount, gold_amount, vec.total, cfg):
                cells[pillar]["tp"] += 1
                continue
            if pred_amount == 0 and gold_amount == 0:
                cells[pillar]["tn"] += 1
                continue
            if pred_amount > 0:
                cells[pillar]["fp"] += 1
            if gold_amount > 0:
                cells[pillar]["fn"] += 1
    per_pillar = {p: Confusion(**cells[p]) for p in PILLAR_ORDER}
    return _macro(per_pillar, 5 * len(preds)), per_pillar


def label_metrics(preds: dict[str, ExtractionResult],
                  gold: dict[str, BudgetVector]) -> tuple[ConfusionFacet, dict[PillarId, Confusion]]:
    """Pillar-label facet: indicator confusion only (condition (a))."""
    _check_gold(preds, gold)
    cells = {p: {"tp": 0, "fp": 0, "fn": 0, "tn": 0} for p in PILLAR_ORDER}
    for project, result in preds.items():
        vec = gold[project]
        for pillar in PILLAR_ORDER:
            pred_pos = result.pillar_allocations[pillar].amount > 0
            gold_pos = vec.b[pillar] > 0
            if pred_pos and gold_pos:
                cells[pillar]["tp"] += 1
            elif pred_pos:
                cells[pillar]["fp"] += 1
            elif gold_pos:
                cells[pillar]["fn"] += 1
            else:
                cells[pillar]["tn"] += 1
    per_pillar = {p: Confusion(**cells[p]) for p in PILLAR_ORDER}
    return _macro(per_pillar, 5 * len(preds)), per_pillar


# --- evidence matching ----------------------------------------------------------

def _segment_matches_chunk(segment: GoldSegment, chunk_body: str,
                           page_span: tuple[int, int], cfg: EvalConfig) -> bool:
    first, last = page_span
    if not first <= segment.page <= last:
        return False
    gold_norm = normalize_match_text(segment.text)
    body_norm = normalize_match_text(chunk_body)
    if not gold_norm:
        return False
    if gold_norm in body_norm:
        return True
    gold_tokens = set(tokenize(gold_norm))
    if not gold_tokens:
        return False
    body_tokens = set(tokenize(body_norm))
    return len(gold_tokens & body_tokens) / len(gold_tokens) >= cfg.containment_threshold


def _evidence_citations(result: ExtractionResult) -> dict[str, set[PillarId]]:
    """Distinct cited chunk -> pillars it was filed under."""
    cited: dict[str, set[PillarId]] = {}
    for pillar, alloc in result.pillar_allocations.items():
        for span in alloc.evidence:
            cited.setdefault(span.chunk_id, set()).add(pillar)
    return cited


def _match_segment(segment: GoldSegment, cited: dict[str, set[PillarId]],
                   index: Index, cfg: EvalConfig) -> set[PillarId]:
    """Pillars whose cited chunks match the segment; empty set = unmatched."""
    pillars: set[PillarId] = set()
    for chunk_id, under in cited.items():
        try:
            aug = index.get_chunk(chunk_id)
        except Exception:
            continue
        if _segment_matches_chunk(segment, aug.chunk.body, aug.chunk.page_span, cfg):
            pillars |= under
    return pillars


def evidence_metrics(preds: dict[str, ExtractionResult],
                     segments: list[GoldSegment], index: Index,
                     cfg: EvalConfig = EvalConfig(),
                     traces: Optional[dict[str, RetrievalTrace]] = None) -> EvidenceFacet:
    """Evidence-extraction facet. A gold segment is retrieved when some
    cited evidence chunk matches it (same project, page within the chunk
    span, normalized-substring or token-containment text rule); precision
    counts distinct cited chunks that match no gold segment as false
    positives. recall@5 is measured against the recorded top-5 lists."""
    if traces is None:
        traces = {}
    by_project: dict[str, list[GoldSegment]] = {}
    for seg in segments:
        by_project.setdefault(seg.project_id, []).append(seg)

    tp = fp = fn = 0
    found_at_5 = 0
    n_segments = 0
    for project, result in preds.items():
        mine = by_project.get(project, [])
        cited = _evidence_citations(result)
        matched_chunks: set[str] = set()
        for seg in mine:
            n_segments += 1
            hit = False
            for chunk_id in cited:
                try:
                    aug = index.get_chunk(chunk_id)
                except Exception:
                    continue
                if _segment_matches_chunk(seg, aug.chunk.body, aug.chunk.page_span, cfg):
                    hit = True
                    matched_chunks.add(chunk_id)
            if hit:
                tp += 1
            else:
                fn += 1
        fp += len(set(cited) - matched_chunks)

        trace = traces.get(project)
        if trace is None:
            raise MissingRetrievalTrace(f"no retrieval trace recorded for {project}")
        for seg in mine:
            relevant = [
                e for e in trace.entries
                if e.pillar is None or e.pillar == seg.pillar
            ]
            found = False
            for entry in relevant:
                for chunk_id in entry.chunk_ids[: cfg.recall_at]:
                    try:
                        aug = index.get_chunk(chunk_id)
                    except Exception:
                        continue
                    if _segment_matches_chunk(seg, aug.chunk.body, aug.chunk.page_span, cfg):
                        found = True
                        break
                if found:
                    break
            if found:
                found_at_5 += 1

    conf = Confusion(tp=tp, fp=fp, fn=fn)
    recall_at_5 = found_at_5 / n_segments if n_segments else 0.0
    return EvidenceFacet(precision=conf.precision, recall=conf.recall,
                         f1=conf.f1, recall_at_5=recall_at_5)


def mapping_metrics(preds: dict[str, ExtractionResult],
                    segments: list[GoldSegment], index: Index,
                    cfg: EvalConfig = EvalConfig()) -> MappingFacet:
    """Evidence-to-label facet: a segment counts as TP only when it is both
    retrieved and filed under its gold pillar; retrieved-but-misfiled counts
    as FP and FN."""
    by_project: dict[str, list[GoldSegment]] = {}
    for seg in segments:
        by_project.setdefault(seg.project_id, []).append(seg)

    tp = fp = fn = 0
    for project, result in preds.items():
        cited = _evidence_citations(result)
        for seg in by_project.get(project, []):
            pillars = _match_segment(seg, cited, index, cfg)
            if not pillars:
                fn += 1
            elif seg.pillar in pillars:
                tp += 1
            else:
                fp += 1
                fn += 1
    conf = Confusion(tp=tp, fp=fp, fn=fn)
    return MappingFacet(precision=conf.precision, recall=conf.recall, f1=conf.f1)


def total_metrics(preds: dict[str, ExtractionResult],
                  gold: dict[str, BudgetVector],
                  cfg: EvalConfig = EvalConfig()) -> TotalsFacet:
    """Total-amount facet: per-project percentage error against the gold
    total, and the fraction of projects within tolerance (inclusive)."""
    _check_gold(preds, gold)
    if not preds:
        return TotalsFacet(0.0, 0.0)
    errors = []
    within = 0
    for project, result in preds.items():
        gold_total = gold[project].total
        if gold_total <= 0:
            raise NonPositiveTotal(f"{project}: gold total {gold_total}")
        err = abs(result.total_ews_budget - gold_total) / gold_total
        errors.append(err)
        if err <= cfg.tolerance:
            within += 1
    return TotalsFacet(
        fraction_within_tolerance=within / len(errors),
        mean_percentage_error=sum(errors) / len(errors),
    )


def evaluate_run(preds: dict[str, ExtractionResult],
                 records: list[GoldRecord],
                 cfg: EvalConfig = EvalConfig(),
                 index: Optional[Index] = None,
                 traces: Optional[dict[str, RetrievalTrace]] = None) -> MetricsReport:
    """All facets for one system run. Evidence and mapping facets need the
    index (chunk text) and recorded traces; they are skipped when absent."""
    gold = {p: budget_vector(records, p) for p in {r.project_id for r in records}}
    for project in preds:
        if project not in gold:
            raise MissingGold(project)
    amounts, amount_counts = amount_metrics(preds, gold, cfg)
    labels, label_counts = label_metrics(preds, gold)
    totals = total_metrics(preds, gold, cfg)
    evidence = mapping = None
    if index is not None and traces is not None:
        segs = gold_segments(records)
        evidence = evidence_metrics(preds, segs, index, cfg, traces)
        mapping = mapping_metrics(preds, segs, index, cfg)
    return MetricsReport(
        projects=tuple(sorted(preds)),
        evidence=evidence,
        amounts=amounts,
        labels=labels,
        mapping=mapping,
        totals=totals,
        counts={
            "amounts": {p.value: c for p, c in amount_counts.items()},
            "labels": {p.value: c for p, c in label_counts.items()},
        },
    )


# --- system comparison -----------------------------------------------------------

_COLUMNS = (
    ("evidence", "precision", max),
    ("evidence", "recall", max),
    ("evidence", "f1", max),
    ("evidence", "recall_at_5", max),
    ("amounts", "accuracy", max),
    ("amounts", "macro_precision", max),
    ("amounts", "macro_recall", max),
    ("amounts", "macro_f1", max),
    ("labels", "accuracy", max),
    ("labels", "macro_precision", max),
    ("labels", "macro_recall", max),
    ("labels", "macro_f1", max),
    ("mapping", "precision", max),
    ("mapping", "recall", max),
    ("mapping", "f1", max),
    ("totals", "fraction_within_tolerance", max),
    ("totals", "mean_percentage_error", min),
)


@dataclass
class ComparisonTable:
    columns: tuple[str, ...]
    rows: dict[str, dict[str, Optional[float]]]
    best: dict[str, tuple[str, ...]]  # column -> systems marked best (ties share)

    def to_json(self) -> dict:
        return {"columns": list(self.columns), "rows": self.rows,
                "best": {c: list(s) for c, s in self.best.items()}}

    def render_text(self) -> str:
        names = list(self.rows)
        width = max([len("system")] + [len(n) for n in names]) + 2
        col_widths = {c: max(len(c), 7) + 2 for c in self.columns}
        header = "system".ljust(width) + "".join(c.rjust(col_widths[c]) for c in self.columns)
        lines = [header, "-" * len(header)]
        for name in names:
            cells = [name.ljust(width)]
            for col in self.columns:
                value = self.rows[name].get(col)
                if value is None:
                    text = "-"
                else:
                    text = f"{value:.2f}"
                    if name in self.best.get(col, ()):
                        text += "*"
                cells.append(text.rjust(col_widths[col]))
            lines.append("".join(cells))
        lines.append("(* best per column; lower is better for mean_percentage_error)")
        return "\n".join(lines)


def compare_systems(runs: dict[str, MetricsReport]) -> ComparisonTable:
    """Row-per-system table over all facet columns with best-system markers;
    external-run results evaluated through the same schema compare equally."""
    if len(runs) < 2:
        raise ValueError("need at least two runs to compare")
    project_sets = {name: set(r.projects) for name, r in runs.items()}
    reference = next(iter(project_sets.values()))
    for name, projects in project_sets.items():
        if projects != reference:
            raise InconsistentProjects(
                f"{name} evaluated on a different project set than the first run"
            )

    columns = []
    rows: dict[str, dict[str, Optional[float]]] = {name: {} for name in runs}
    best: dict[str, tuple[str, ...]] = {}
    for facet, metric, direction in _COLUMNS:
        col = f"{facet}.{metric}"
        values = {}
        for name, report in runs.items():
            block = getattr(report, facet)
            values[name] = getattr(block, metric) if block is not None else None
        if all(v is None for v in values.values()):
            continue
        columns.append(col)
        for name, v in values.items():
            rows[name][col] = v
        present = {n: v for n, v in values.items() if v is not None}
        target = direction(present.values())
        best[col] = tuple(n for n, v in present.items() if math.isclose(v, target, rel_tol=0, abs_tol=1e-12))
    return ComparisonTable(columns=tuple(columns), rows=rows, best=best)
