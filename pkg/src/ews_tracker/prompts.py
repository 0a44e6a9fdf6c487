"""Prompt assets: versioned template files with ``$name`` placeholders.

Dollar-sign placeholders keep JSON examples inside prompt bodies intact
(curly braces never collide). Templates, the pillar taxonomy, the canned
per-pillar retrieval queries, and the few-shot exemplars all live under
``assets/`` and are replaceable without code changes.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .pillars import PILLAR_ORDER, PillarId


class TemplateError(ValueError):
    pass


def _identifiers(template_text: str) -> frozenset[str]:
    found = set()
    for match in string.Template.pattern.finditer(template_text):
        name = match.group("named") or match.group("braced")
        if name:
            found.add(name)
        elif match.group("invalid") is not None:
            raise TemplateError(f"stray $ in template near {match.start()}")
    return frozenset(found)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    template_text: str
    placeholder_names: frozenset[str]

    def __post_init__(self):
        extra = _identifiers(self.template_text) - self.placeholder_names
        if extra:
            raise TemplateError(f"template {self.name!r} uses undeclared placeholders {sorted(extra)}")

    def render(self, **binding: str) -> str:
        missing = self.placeholder_names - binding.keys()
        if missing:
            raise TemplateError(f"template {self.name!r} missing bindings {sorted(missing)}")
        return string.Template(self.template_text).substitute(binding)


def _asset_text(relpath: str) -> str:
    return resources.files("ews_tracker.assets").joinpath(relpath).read_text("utf-8")


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    text = _asset_text(f"prompts/{name}.txt")
    return PromptTemplate(name=name, template_text=text, placeholder_names=_identifiers(text))


@lru_cache(maxsize=None)
def load_taxonomy() -> str:
    return _asset_text("taxonomy.txt")


@lru_cache(maxsize=None)
def load_pillar_queries() -> dict[PillarId, str]:
    """The canned per-pillar retrieval queries (one line per pillar)."""
    queries: dict[PillarId, str] = {}
    for line in _asset_text("queries.txt").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, query = line.partition("=")
        queries[PillarId(key.strip())] = query.strip()
    missing = set(PILLAR_ORDER) - queries.keys()
    if missing:
        raise TemplateError(f"queries.txt missing pillars {sorted(p.value for p in missing)}")
    return queries


@lru_cache(maxsize=None)
def load_exemplars() -> list[dict]:
    """Annotated few-shot examples used by the few-shot strategy and the
    agent planner."""
    return json.loads(_asset_text("exemplars.json"))


def render_exemplars(exemplars: list[dict]) -> str:
    lines = []
    for ex in exemplars:
        lines.append(f"Excerpt: {ex['excerpt']}")
        lines.append(f"Answer: {json.dumps(ex['answer'], sort_keys=True)}")
        lines.append("")
    return "\n".join(lines).rstrip()
