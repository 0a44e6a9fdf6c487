"""Per-document analytic report: total budget, per-pillar amounts and
percentages, warnings, and the evidence listing."""

from __future__ import annotations

from .extraction import ExtractionResult
from .pillars import PILLAR_ORDER

PILLAR_TITLES = {
    "P1": "Pillar 1 - risk knowledge",
    "P2": "Pillar 2 - detection & forecasting",
    "P3": "Pillar 3 - warning dissemination",
    "P4": "Pillar 4 - preparedness",
    "XP": "Cross-pillar - governance",
}


def largest_remainder_percentages(amounts: list[float]) -> list[float]:
    """Percentages rounded to one decimal that sum to exactly 100.0 via
    largest-remainder apportionment; an all-zero input stays all zero."""
    total = sum(amounts)
    if total <= 0:
        return [0.0 for _ in amounts]
    shares = [a / total * 1000.0 for a in amounts]  # tenths of a percent
    floors = [int(s) for s in shares]
    short = 1000 - sum(floors)
    order = sorted(range(len(amounts)), key=lambda i: (-(shares[i] - floors[i]), i))
    for i in order[:short]:
        floors[i] += 1
    return [f / 10.0 for f in floors]


def render_report(result: ExtractionResult) -> tuple[str, dict]:
    """Render one extraction result as aligned text plus a JSON payload."""
    amounts = [result.pillar_allocations[p].amount for p in PILLAR_ORDER]
    percentages = largest_remainder_percentages(amounts)

    payload = {
        "file_name": result.file_name,
        "method": result.method,
        "currency": result.currency,
        "total_ews_budget": result.total_ews_budget,
        "pillars": {
            p.value: {"amount": amounts[i], "percent": percentages[i]}
            for i, p in enumerate(PILLAR_ORDER)
        },
        "warnings": list(result.warnings),
        "evidence": {
            p.value: [
                {"chunk_id": s.chunk_id, "page": s.page, "quote": s.quote}
                for s in result.pillar_allocations[p].evidence
            ]
            for p in PILLAR_ORDER
        },
    }

    lines = [
        f"EWS budget analysis - {result.file_name}",
        f"method: {result.method}",
        f"total EWS budget: {result.total_ews_budget:,.0f} {result.currency}",
        "",
    ]
    for i, p in enumerate(PILLAR_ORDER):
        title = PILLAR_TITLES[p.value]
        lines.append(f"  {title:<40} {amounts[i]:>14,.0f}  {percentages[i]:>6.1f}%")
    if result.total_ews_budget <= 0:
        lines.append("  (no EWS allocation found)")
    if result.warnings:
        lines.append("")
        lines.append("warnings:")
        lines.extend(f"  - {w}" for w in result.warnings)
    evidence_lines = []
    for p in PILLAR_ORDER:
        for span in result.pillar_allocations[p].evidence:
            evidence_lines.append(f"  [{p.value}] p.{span.page} {span.chunk_id}: {span.quote}")
    if evidence_lines:
        lines.append("")
        lines.append("evidence:")
        lines.extend(evidence_lines)
    return "\n".join(lines) + "\n", payload
