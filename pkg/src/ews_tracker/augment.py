"""Context augmentation: every chunk gets a short model-written summary
situating it in its document, appended after a fixed separator so the two
parts stay mechanically separable."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .chunking import Chunk
from .errors import EmptyCompletion, LlmUnavailable
from .interchange import DocumentIR
from .ports import LlmPort
from .prompts import load_template

logger = logging.getLogger(__name__)

CONTEXT_SEPARATOR = "\n\n[CONTEXT] "

# Summaries are requested as two sentences but never truncated; past this
# length a warning is recorded instead.
LONG_SUMMARY_CHARS = 500


@dataclass(frozen=True)
class AugmentedChunk:
    chunk: Chunk
    context_summary: str
    augmented_body: str
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def chunk_id(self) -> str:
        return self.chunk.id


def build_augmented(chunk: Chunk, context_summary: str, warnings: tuple[str, ...] = ()) -> AugmentedChunk:
    return AugmentedChunk(
        chunk=chunk,
        context_summary=context_summary,
        augmented_body=chunk.body + CONTEXT_SEPARATOR + context_summary,
        warnings=warnings,
    )


def strip_context(augmented_body: str) -> str:
    """Recover the original chunk body from an augmented body."""
    idx = augmented_body.rfind(CONTEXT_SEPARATOR)
    return augmented_body if idx < 0 else augmented_body[:idx]


def doc_digest(doc: DocumentIR, budget_chars: int = 6000) -> str:
    """Bounded document digest handed to the context prompt: first text
    element, all markdown headers, table captions and first rows, truncated
    at a whitespace boundary."""
    if budget_chars < 500:
        raise ValueError("budget_chars must be >= 500")
    parts: list[str] = []
    first_text_seen = False
    for el in doc.elements:
        if el.kind == "text":
            if not first_text_seen:
                parts.append(el.markdown)
                first_text_seen = True
            else:
                headers = [ln for ln in el.markdown.splitlines() if ln.lstrip().startswith("#")]
                parts.extend(headers)
        elif el.kind == "table":
            if el.caption:
                parts.append(el.caption)
            first_row = el.markdown.splitlines()[0] if el.markdown else ""
            if first_row:
                parts.append(first_row)
    digest = "\n".join(parts)
    if len(digest) <= budget_chars:
        return digest
    head = digest[:budget_chars]
    cut = max(head.rfind(ch) for ch in (" ", "\n", "\t"))
    return head[: cut + 1] if cut > 0 else head


def augment_chunk(chunk: Chunk, digest: str, llm: LlmPort) -> AugmentedChunk:
    """One context-summary LLM call per chunk, retried once. A blank reply
    is an error, never a silent empty context."""
    prompt = load_template("ctx").render(chunk=chunk.body, digest=digest)
    warnings: list[str] = []
    summary = None
    last_err: Exception | None = None
    for attempt in (1, 2):
        try:
            summary = llm.complete(prompt, decode="free_text", tag="ctx")
            if attempt == 2:
                warnings.append(f"context call for {chunk.id} succeeded after one retry")
            break
        except Exception as exc:  # port errors are backend-specific
            last_err = exc
            logger.debug("context call failed for %s (attempt %d): %s", chunk.id, attempt, exc)
    if summary is None:
        raise LlmUnavailable(f"context generation failed twice for {chunk.id}: {last_err}")
    if not summary.strip():
        raise EmptyCompletion(f"blank context summary for {chunk.id}")
    if len(summary) > LONG_SUMMARY_CHARS:
        warnings.append(f"context summary for {chunk.id} exceeds {LONG_SUMMARY_CHARS} chars")
    return build_augmented(chunk, summary, tuple(warnings))


def augment_corpus(
    chunks: list[Chunk], doc: DocumentIR, llm: LlmPort,
    budget_chars: int = 6000, max_in_flight: int = 8,
) -> list[AugmentedChunk]:
    """Augment a document's chunks with bounded concurrency; results come
    back ordered by chunk ordinal."""
    digest = doc_digest(doc, budget_chars)
    if not chunks:
        return []
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        augmented = list(pool.map(lambda c: augment_chunk(c, digest, llm), chunks))
    return sorted(augmented, key=lambda a: a.chunk.ordinal)
