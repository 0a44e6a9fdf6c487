"""Document interchange model: the neutral JSON format between PDF conversion
and the extraction engine.

A document is an ordered list of typed elements (text, table, image) with
page numbers. Tables travel as markdown plus (rows, cols); images travel by
reference and are never decoded here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional

from .errors import Issue, MalformedJson, SchemaViolation

ELEMENT_KINDS = ("text", "table", "image")


@dataclass(frozen=True)
class Element:
    kind: str
    page: int
    markdown: str = ""
    image_ref: Optional[str] = None
    caption: Optional[str] = None
    table_dims: Optional[tuple[int, int]] = None  # (rows, cols)


@dataclass(frozen=True)
class DocumentIR:
    """Parsed document; ``file_name`` is the unique corpus key."""

    file_name: str
    elements: tuple[Element, ...] = field(default_factory=tuple)


def interchange_schema() -> dict:
    """The published JSON-Schema for the interchange format."""
    text = resources.files("ews_tracker.schemas").joinpath("interchange.schema.json").read_text("utf-8")
    return json.loads(text)


def _check_element(el: Element, idx: int) -> list[str]:
    problems = []
    if el.kind not in ELEMENT_KINDS:
        problems.append(f"element {idx}: unknown kind {el.kind!r}")
    if el.page < 1:
        problems.append(f"element {idx}: page {el.page} < 1")
    if el.kind == "text" and not el.markdown:
        problems.append(f"element {idx}: text element with empty markdown")
    if el.kind == "table":
        if not el.markdown:
            problems.append(f"element {idx}: table element with empty markdown")
        if el.table_dims is None:
            problems.append(f"element {idx}: table element without table_dims")
        else:
            rows, cols = el.table_dims
            if rows < 1 or cols < 1:
                problems.append(f"element {idx}: table_dims must be >= 1, got {el.table_dims}")
    if el.kind == "image" and not el.image_ref:
        problems.append(f"element {idx}: image element without image_ref")
    return problems


def parse_document_ir(raw_json: bytes | str) -> DocumentIR:
    """Parse interchange JSON into a validated DocumentIR.

    Raises MalformedJson for unparseable input and SchemaViolation for
    structural problems; messages name the offending element index.
    """
    if isinstance(raw_json, bytes):
        try:
            raw_json = raw_json.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"input is not UTF-8: {exc}") from exc
    try:
        data = json.loads(raw_json)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"input is not JSON: {exc}") from exc

    if not isinstance(data, dict):
        raise SchemaViolation("top level must be an object")
    if not isinstance(data.get("file_name"), str) or not data["file_name"]:
        raise SchemaViolation("file_name must be a non-empty string")
    if not isinstance(data.get("elements"), list):
        raise SchemaViolation("elements must be a list")

    elements = []
    for idx, raw in enumerate(data["elements"]):
        if not isinstance(raw, dict):
            raise SchemaViolation(f"element {idx}: must be an object")
        missing = {"kind", "page", "markdown"} - raw.keys()
        if missing:
            raise SchemaViolation(f"element {idx}: missing field(s) {sorted(missing)}")
        if not isinstance(raw["page"], int) or isinstance(raw["page"], bool):
            raise SchemaViolation(f"element {idx}: page must be an integer")
        dims = raw.get("table_dims")
        if dims is not None:
            if not isinstance(dims, dict) or {"rows", "cols"} - dims.keys():
                raise SchemaViolation(f"element {idx}: table_dims must carry rows and cols")
            dims = (dims["rows"], dims["cols"])
        el = Element(
            kind=raw["kind"],
            page=raw["page"],
            markdown=raw["markdown"],
            image_ref=raw.get("image_ref"),
            caption=raw.get("caption"),
            table_dims=dims,
        )
        problems = _check_element(el, idx)
        if problems:
            raise SchemaViolation("; ".join(problems))
        elements.append(el)

    return DocumentIR(file_name=data["file_name"], elements=tuple(elements))


def serialize_document_ir(doc: DocumentIR) -> str:
    """Canonical serializer; ``parse_document_ir`` is its left inverse."""
    elements = []
    for el in doc.elements:
        raw: dict = {"kind": el.kind, "page": el.page, "markdown": el.markdown}
        if el.image_ref is not None:
            raw["image_ref"] = el.image_ref
        if el.caption is not None:
            raw["caption"] = el.caption
        if el.table_dims is not None:
            raw["table_dims"] = {"rows": el.table_dims[0], "cols": el.table_dims[1]}
        elements.append(raw)
    payload = {"file_name": doc.file_name, "elements": elements}
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def validate_corpus(docs: Iterable[DocumentIR]) -> list[Issue]:
    """Collect duplicate file_name collisions and per-document invariant
    breaches. Issues are data, not failures; an empty list means clean."""
    issues: list[Issue] = []
    seen: dict[str, int] = {}
    for doc in docs:
        seen[doc.file_name] = seen.get(doc.file_name, 0) + 1
        if not doc.file_name:
            issues.append(Issue("EmptyFileName", "document with empty file_name"))
        for idx, el in enumerate(doc.elements):
            if el.page < 1:
                issues.append(Issue(
                    "PageOutOfRange",
                    f"{doc.file_name}: element {idx} has page {el.page}",
                    {"file_name": doc.file_name, "element": idx},
                ))
            for problem in _check_element(el, idx):
                if "page" in problem and "< 1" in problem:
                    continue  # already reported as PageOutOfRange
                issues.append(Issue(
                    "InvalidElement", f"{doc.file_name}: {problem}",
                    {"file_name": doc.file_name, "element": idx},
                ))
    for name, count in seen.items():
        if count > 1:
            issues.append(Issue(
                "DuplicateFileName", f"{count} documents named {name!r}", {"file_name": name}
            ))
    return issues
