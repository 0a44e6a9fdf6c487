"""Agent strategy: plan sub-tasks, map them to queries, execute with a
self-healing retrieval loop, then consolidate everything into the final
JSON.

Call budget per document, with I the instruction list: one plan call, one
mapping call, at most (1 + max_retries) validator calls or one reasoning
call per instruction, and a final formatting call with its single JSON
repair — never more than 2 + |I| * (2 + max_retries) + 2 LLM calls.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptyPlan, EwsError, LlmUnavailable, SchemaViolation
from .extraction import (
    BudgetItem,
    ExtractionResult,
    RetrievalTrace,
    assemble_result,
    parse_amount_field,
    render_chunks,
    validate_evidence,
)
from .index_store import Index
from .pillars import PILLAR_ORDER, PillarId
from .ports import EmbedderPort, LlmPort
from .prompts import load_exemplars, load_taxonomy, load_template, render_exemplars
from .retrieval import RetrievalConfig, hybrid_query

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Instruction:
    id: str
    text: str
    needs_retrieval: bool


@dataclass(frozen=True)
class Plan:
    instructions: tuple[Instruction, ...]
    queries: tuple[str, ...]
    mapping: dict[str, int]  # instruction id -> query index


@dataclass(frozen=True)
class AgentPolicy:
    max_instructions: int = 12
    max_retries: int = 2  # per retrieval instruction

    def __post_init__(self):
        if self.max_instructions < 1 or self.max_retries < 0:
            raise ValueError("bad agent policy")

    def llm_call_bound(self, n_instructions: int) -> int:
        return 2 + n_instructions * (2 + self.max_retries) + 2


@dataclass
class StepResult:
    instruction: Instruction
    result_text: str
    chunk_ids: tuple[str, ...] = ()
    retry_count: int = 0
    verdicts: tuple[bool, ...] = ()


@dataclass
class StepResults:
    steps: list[StepResult] = field(default_factory=list)

    def render(self) -> str:
        blocks = []
        for s in self.steps:
            blocks.append(f"## {s.instruction.id}: {s.instruction.text}\n{s.result_text}")
        return "\n\n".join(blocks)


class AgentAborted(LlmUnavailable):
    """LLM hard failure mid-execution; partial step results ride along."""

    def __init__(self, message: str, partial: StepResults):
        super().__init__(message)
        self.partial = partial


def agent_plan(file_name: str, llm: LlmPort, policy: AgentPolicy = AgentPolicy(),
               warnings: Optional[list[str]] = None) -> Plan:
    """Two LLM calls: instruction+query generation, then instruction-to-query
    mapping, both validated against the plan invariants."""
    warnings = warnings if warnings is not None else []
    plan_tpl = load_template("plan")
    prompt = plan_tpl.render(
        taxonomy=load_taxonomy(), exemplars=render_exemplars(load_exemplars())
    )
    reply = json.loads(llm.complete(prompt, decode="json", tag="plan"))
    if not isinstance(reply, dict) or "instructions" not in reply or "queries" not in reply:
        raise SchemaViolation("plan reply must carry 'instructions' and 'queries'")

    instructions: list[Instruction] = []
    seen_ids: set[str] = set()
    for raw in reply["instructions"]:
        if not isinstance(raw, dict) or not all(k in raw for k in ("id", "text", "needs_retrieval")):
            raise SchemaViolation(f"malformed instruction entry: {raw!r}")
        iid = str(raw["id"])
        if iid in seen_ids:
            raise SchemaViolation(f"duplicate instruction id {iid!r}")
        seen_ids.add(iid)
        instructions.append(Instruction(iid, str(raw["text"]), bool(raw["needs_retrieval"])))
    if not instructions:
        raise EmptyPlan(f"planner produced zero instructions for {file_name}")
    if len(instructions) > policy.max_instructions:
        warnings.append(
            f"plan truncated from {len(instructions)} to {policy.max_instructions} instructions"
        )
        instructions = instructions[: policy.max_instructions]

    queries = tuple(str(q) for q in reply["queries"])

    map_tpl = load_template("map")
    instr_text = "\n".join(
        f"- {i.id}: {i.text} (needs_retrieval={str(i.needs_retrieval).lower()})"
        for i in instructions
    )
    query_text = "\n".join(f"{idx}: {q}" for idx, q in enumerate(queries))
    mreply = json.loads(llm.complete(
        map_tpl.render(instructions=instr_text, queries=query_text), decode="json", tag="map"
    ))
    if not isinstance(mreply, dict):
        raise SchemaViolation("mapping reply must be an object")

    kept_ids = {i.id for i in instructions}
    mapping: dict[str, int] = {}
    for iid, qidx in mreply.items():
        if iid not in kept_ids:
            warnings.append(f"mapping entry for unknown/truncated instruction {iid!r} ignored")
            continue
        if not isinstance(qidx, int) or isinstance(qidx, bool) or not 0 <= qidx < len(queries):
            raise SchemaViolation(f"mapping for {iid!r} references query index {qidx!r} of {len(queries)}")
        mapping[iid] = qidx
    for instr in instructions:
        if instr.needs_retrieval and instr.id not in mapping:
            raise SchemaViolation(f"retrieval instruction {instr.id!r} has no query mapping")

    return Plan(instructions=tuple(instructions), queries=queries, mapping=mapping)


def agent_execute(plan: Plan, file_name: str, index: Index, llm: LlmPort,
                  embedder: EmbedderPort, policy: AgentPolicy = AgentPolicy(),
                  cfg: RetrievalConfig = RetrievalConfig(),
                  warnings: Optional[list[str]] = None,
                  trace: Optional[RetrievalTrace] = None) -> StepResults:
    """Run instructions in order. Retrieval instructions loop retrieve ->
    validate until the validator is satisfied or retries run out (zero
    retrieved chunks is always insufficient); other instructions get one
    reasoning call over the accumulated results."""
    warnings = warnings if warnings is not None else []
    validate_tpl = load_template("validate")
    reason_tpl = load_template("reason")
    results = StepResults()

    for instr in plan.instructions:
        try:
            if instr.needs_retrieval:
                query = plan.queries[plan.mapping[instr.id]]
                verdicts: list[bool] = []
                retry_count = 0
                chunks = []
                while True:
                    chunks = hybrid_query(query, file_name, index, embedder, cfg, warnings)
                    if trace is not None:
                        trace.record(query, chunks)
                    if not chunks:
                        verdict, new_query = False, None  # hard floor
                    else:
                        vreply = json.loads(llm.complete(
                            validate_tpl.render(instruction=instr.text, query=query,
                                                chunks=render_chunks(chunks)),
                            decode="json", tag="validate",
                        ))
                        verdict = bool(vreply.get("sufficient", False)) if isinstance(vreply, dict) else False
                        new_query = vreply.get("new_query") if isinstance(vreply, dict) else None
                    verdicts.append(verdict)
                    if verdict:
                        break
                    if retry_count >= policy.max_retries:
                        warnings.append(
                            f"InsufficientEvidence: {instr.id} proceeding best-effort "
                            f"after {retry_count} retries"
                        )
                        break
                    query = str(new_query) if new_query else instr.text
                    retry_count += 1
                results.steps.append(StepResult(
                    instruction=instr,
                    result_text=render_chunks(chunks) if chunks else "(nothing retrieved)",
                    chunk_ids=tuple(c.chunk_id for c in chunks),
                    retry_count=retry_count,
                    verdicts=tuple(verdicts),
                ))
            else:
                reply = llm.complete(
                    reason_tpl.render(instruction=instr.text, results=results.render() or "(none yet)"),
                    tag="reason",
                )
                results.steps.append(StepResult(instruction=instr, result_text=reply))
        except EwsError as exc:
            raise AgentAborted(f"LLM failure at instruction {instr.id}: {exc}", results) from exc
    return results


def agent_consolidate(results: StepResults, llm: LlmPort, index: Index,
                      file_name: str,
                      warnings: Optional[list[str]] = None) -> ExtractionResult:
    """One formatting call turns the step results into the final pillar map;
    quotes are grounded against the file's indexed chunks."""
    if not results.steps:
        raise ValueError("cannot consolidate empty step results")
    warnings = warnings if warnings is not None else []

    prompt = load_template("format").render(taxonomy=load_taxonomy(), results=results.render())
    reply = json.loads(llm.complete(prompt, decode="json", tag="format"))
    if not isinstance(reply, dict) or not isinstance(reply.get("pillars"), dict):
        raise SchemaViolation("format reply must carry a 'pillars' object")

    file_chunks = sorted(
        (index.get_chunk(cid) for cid in index.chunk_ids()
         if index.get_chunk(cid).chunk.file_name == file_name),
        key=lambda c: c.chunk.ordinal,
    )

    per_pillar: dict[PillarId, list[BudgetItem]] = {}
    for pillar in PILLAR_ORDER:
        raw = reply["pillars"].get(pillar.value)
        if raw is None:
            continue
        if not isinstance(raw, dict) or "amount" not in raw:
            raise SchemaViolation(f"pillar entry {pillar.value} lacks 'amount'")
        amount, currency = parse_amount_field(raw["amount"], warnings, f"{pillar.value} format")
        if amount == 0:
            continue
        evidence = validate_evidence(raw.get("evidence", []), file_chunks, warnings)
        label = str(raw.get("item", "")) or (evidence[0].quote if evidence else pillar.value)
        per_pillar[pillar] = [BudgetItem(amount, currency, label, evidence)]

    asserted_total = None
    if "total" in reply and reply["total"] not in (None, ""):
        asserted_total, _ = parse_amount_field(reply["total"], warnings, "stated total")
    asserted_currency = reply.get("currency") if isinstance(reply.get("currency"), str) else None

    return assemble_result(
        file_name, "agent", per_pillar, warnings,
        asserted_total=asserted_total, asserted_currency=asserted_currency,
    )


def run_agent(file_name: str, index: Index, llm: LlmPort, embedder: EmbedderPort,
              policy: AgentPolicy = AgentPolicy(),
              cfg: RetrievalConfig = RetrievalConfig(),
              trace: Optional[RetrievalTrace] = None) -> ExtractionResult:
    """Full agent pipeline: plan, execute, consolidate."""
    warnings: list[str] = []
    if not index.has_file(file_name):
        warnings.append(f"UnknownFile: {file_name!r} not in index")
        return assemble_result(file_name, "agent", {}, warnings)
    plan = agent_plan(file_name, llm, policy, warnings)
    results = agent_execute(plan, file_name, index, llm, embedder, policy, cfg, warnings, trace)
    return agent_consolidate(results, llm, index, file_name, warnings)
