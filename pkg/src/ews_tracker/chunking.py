"""Partition a DocumentIR into three disjoint chunk sets: tables, text runs
split at markdown headers, and images.

Tables are atomic evidence units and are never split; contiguous text
elements are concatenated and re-split by header lines with min/max size
handling; images carry their caption as chunk body.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .interchange import DocumentIR


@dataclass(frozen=True)
class ChunkConfig:
    max_text_chars: int = 4000
    min_text_chars: int = 200
    header_levels: frozenset[int] = frozenset({1, 2, 3})

    def __post_init__(self):
        if self.min_text_chars >= self.max_text_chars:
            raise ValueError("min_text_chars must be < max_text_chars")


@dataclass(frozen=True)
class Chunk:
    id: str
    file_name: str
    kind: str  # text | table | image
    page_span: tuple[int, int]  # (first_page, last_page)
    body: str
    ordinal: int
    image_ref: Optional[str] = None


def chunk_id(file_name: str, ordinal: int, kind: str) -> str:
    """Deterministic chunk identifier; parse right-to-left to invert."""
    if ordinal < 0:
        raise ValueError("ordinal must be >= 0")
    return f"{file_name}#{ordinal}#{kind}"


def _header_level(line: str) -> int:
    n = 0
    for ch in line:
        if ch == "#":
            n += 1
        else:
            break
    return n


def split_text_by_headers(markdown: str, cfg: ChunkConfig) -> list[str]:
    """Split at markdown header lines, merge short segments, split long ones.

    Concatenating the output always reproduces the input exactly.
    """
    if not markdown:
        return []

    segments: list[str] = []
    current: list[str] = []
    for line in markdown.splitlines(keepends=True):
        level = _header_level(line)
        if level in cfg.header_levels and current:
            segments.append("".join(current))
            current = []
        current.append(line)
    if current:
        segments.append("".join(current))

    # Short segments merge into the preceding one; a short leading segment
    # (no preceding) is prepended to the next instead.
    merged: list[str] = []
    pending = ""
    for seg in segments:
        seg = pending + seg
        pending = ""
        if len(seg) < cfg.min_text_chars:
            if merged:
                merged[-1] += seg
            else:
                pending = seg
        else:
            merged.append(seg)
    if pending:
        merged.append(pending)

    # Over-long segments split at the last paragraph break before the limit,
    # falling back to a hard cut at the limit.
    out: list[str] = []
    for seg in merged:
        while len(seg) > cfg.max_text_chars:
            brk = seg.rfind("\n\n", 0, cfg.max_text_chars)
            cut = brk + 2 if brk > 0 else cfg.max_text_chars
            out.append(seg[:cut])
            seg = seg[cut:]
        out.append(seg)
    return out


def _flush_text_run(
    run: list, file_name: str, cfg: ChunkConfig, ordinal: int, chunks: list[Chunk]
) -> int:
    """Concatenate a run of contiguous text elements, split it, and append
    text chunks with page spans covering their contributing elements."""
    if not run:
        return ordinal
    joined = "\n\n".join(el.markdown for el in run)
    spans: list[tuple[int, int, int]] = []  # (start, end, page)
    offset = 0
    for i, el in enumerate(run):
        if i:
            offset += 2  # the "\n\n" joiner
        spans.append((offset, offset + len(el.markdown), el.page))
        offset += len(el.markdown)

    pos = 0
    for body in split_text_by_headers(joined, cfg):
        lo, hi = pos, pos + len(body)
        pages = [p for (s, e, p) in spans if max(lo, s) < min(hi, e)]
        if not pages:  # segment made purely of joiner whitespace
            pages = [next(p for (s, e, p) in reversed(spans) if s <= lo)]
        chunks.append(Chunk(
            id=chunk_id(file_name, ordinal, "text"),
            file_name=file_name,
            kind="text",
            page_span=(min(pages), max(pages)),
            body=body,
            ordinal=ordinal,
        ))
        ordinal += 1
        pos = hi
    return ordinal


def chunk_document(doc: DocumentIR, cfg: ChunkConfig = ChunkConfig()) -> list[Chunk]:
    """Produce the document's chunks in order: one chunk per table and image
    element, header-split chunks for each contiguous text run."""
    chunks: list[Chunk] = []
    ordinal = 0
    text_run: list = []
    for el in doc.elements:
        if el.kind == "text":
            text_run.append(el)
            continue
        ordinal = _flush_text_run(text_run, doc.file_name, cfg, ordinal, chunks)
        text_run = []
        if el.kind == "table":
            chunks.append(Chunk(
                id=chunk_id(doc.file_name, ordinal, "table"),
                file_name=doc.file_name,
                kind="table",
                page_span=(el.page, el.page),
                body=el.markdown,
                ordinal=ordinal,
            ))
        else:  # image: caption text becomes the body
            chunks.append(Chunk(
                id=chunk_id(doc.file_name, ordinal, "image"),
                file_name=doc.file_name,
                kind="image",
                page_span=(el.page, el.page),
                body=el.caption or "",
                ordinal=ordinal,
                image_ref=el.image_ref,
            ))
        ordinal += 1
    _flush_text_run(text_run, doc.file_name, cfg, ordinal, chunks)
    return chunks
