"""Run configuration: one YAML file mirroring every engine config type, plus
the run manifest recorded next to every command's outputs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from .agent import AgentPolicy
from .chunking import ChunkConfig
from .evaluation import EvalConfig
from .index_store import Bm25fParams
from .retrieval import RetrievalConfig


@dataclass(frozen=True)
class AugmentConfig:
    budget_chars: int = 6000
    max_in_flight: int = 8


@dataclass(frozen=True)
class EngineConfig:
    chunk: ChunkConfig = ChunkConfig()
    bm25f: Bm25fParams = Bm25fParams()
    retrieval: RetrievalConfig = RetrievalConfig()
    eval: EvalConfig = EvalConfig()
    agent: AgentPolicy = AgentPolicy()
    augment: AugmentConfig = AugmentConfig()
    embed_dim: int = 256
    seed: int = 0


def load_config(path: Optional[str | Path] = None) -> EngineConfig:
    """Load engine configuration from YAML; omitted keys keep defaults.

    Keys mirror the config dataclasses, e.g.::

        chunk:     {max_text_chars: 4000, min_text_chars: 200, header_levels: [1, 2, 3]}
        bm25f:     {k1: 1.2, b: {body: 0.75, context: 0.75}, w: {body: 1.0, context: 0.5}}
        retrieval: {rrf_k: 60, top_k: 5, candidate_depth: 50}
        eval:      {tolerance: 0.05, recall_at: 5}
        agent:     {max_instructions: 12, max_retries: 2}
        augment:   {budget_chars: 6000, max_in_flight: 8}
        embed_dim: 256
        seed: 0
    """
    if path is None:
        return EngineConfig()
    raw = yaml.safe_load(Path(path).read_text("utf-8")) or {}

    chunk_raw = raw.get("chunk", {})
    chunk = ChunkConfig(
        max_text_chars=chunk_raw.get("max_text_chars", 4000),
        min_text_chars=chunk_raw.get("min_text_chars", 200),
        header_levels=frozenset(chunk_raw.get("header_levels", (1, 2, 3))),
    )
    bm_raw = raw.get("bm25f", {})
    bm25f = Bm25fParams(
        k1=bm_raw.get("k1", 1.2),
        b_per_field=tuple(sorted({"body": 0.75, "context": 0.75, **bm_raw.get("b", {})}.items())),
        w_per_field=tuple(sorted({"body": 1.0, "context": 0.5, **bm_raw.get("w", {})}.items())),
    )
    r_raw = raw.get("retrieval", {})
    retrieval = RetrievalConfig(
        rrf_k=r_raw.get("rrf_k", 60.0),
        top_k=r_raw.get("top_k", 5),
        candidate_depth=r_raw.get("candidate_depth", 50),
    )
    e_raw = raw.get("eval", {})
    eval_cfg = EvalConfig(
        tolerance=e_raw.get("tolerance", 0.05),
        recall_at=e_raw.get("recall_at", 5),
        containment_threshold=e_raw.get("containment_threshold", 0.8),
    )
    a_raw = raw.get("agent", {})
    agent = AgentPolicy(
        max_instructions=a_raw.get("max_instructions", 12),
        max_retries=a_raw.get("max_retries", 2),
    )
    g_raw = raw.get("augment", {})
    augment = AugmentConfig(
        budget_chars=g_raw.get("budget_chars", 6000),
        max_in_flight=g_raw.get("max_in_flight", 8),
    )
    return EngineConfig(
        chunk=chunk, bm25f=bm25f, retrieval=retrieval, eval=eval_cfg,
        agent=agent, augment=augment,
        embed_dim=raw.get("embed_dim", 256), seed=raw.get("seed", 0),
    )


@dataclass
class RunManifest:
    """Recorded verbatim alongside every run's outputs for reproducibility.
    The timestamp is the only field excluded from determinism checks."""

    command: str
    corpus_dir: Optional[str] = None
    index_dir: Optional[str] = None
    method: Optional[str] = None
    backend: str = "mock"
    output_dir: Optional[str] = None
    config_overrides: dict = field(default_factory=dict)
    engine_version: str = __version__
    timestamp: str = ""

    def write(self, directory: str | Path) -> None:
        payload = dict(vars(self))
        payload["timestamp"] = datetime.now(timezone.utc).isoformat()
        path = Path(directory) / "run_manifest.json"
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8")
