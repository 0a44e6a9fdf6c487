"""Hybrid retrieval: dense and lexical searches fused by Reciprocal Rank
Fusion.

Each candidate's fused score sums 1 / (rank_i + K) over the systems that
returned it; chunks missing from one system contribute only the present
term. Fusion depends on ranks alone, never on raw scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .augment import AugmentedChunk
from .errors import DuplicateWithinSystem
from .index_store import Index, RankedHit, TEXT_TABLE_SPACE
from .ports import EmbedderPort


@dataclass(frozen=True)
class RetrievalConfig:
    rrf_k: float = 60.0
    top_k: int = 5
    candidate_depth: int = 50  # per-system depth before fusion

    def __post_init__(self):
        if self.rrf_k <= 0:
            raise ValueError("rrf_k must be > 0")
        if not (0 < self.top_k <= self.candidate_depth):
            raise ValueError("need 0 < top_k <= candidate_depth")


@dataclass(frozen=True)
class ScoredCandidate:
    chunk_id: str
    rrf_score: float
    dense_rank: Optional[int] = None
    lexical_rank: Optional[int] = None


def _ranks_of(hits: list[RankedHit], system: str) -> dict[str, int]:
    ranks: dict[str, int] = {}
    for hit in hits:
        if hit.chunk_id in ranks:
            raise DuplicateWithinSystem(f"{hit.chunk_id!r} appears twice in {system} results")
        ranks[hit.chunk_id] = hit.rank
    return ranks


def rrf_fuse(dense: list[RankedHit], lexical: list[RankedHit],
             k_const: float = 60.0) -> list[ScoredCandidate]:
    """Fuse two ranked lists; output is sorted by fused score descending,
    ties by ascending chunk_id."""
    if k_const <= 0:
        raise ValueError("k_const must be > 0")
    dense_ranks = _ranks_of(dense, "dense")
    lex_ranks = _ranks_of(lexical, "lexical")
    fused = []
    for cid in set(dense_ranks) | set(lex_ranks):
        score = 0.0
        dr = dense_ranks.get(cid)
        lr = lex_ranks.get(cid)
        if dr is not None:
            score += 1.0 / (dr + k_const)
        if lr is not None:
            score += 1.0 / (lr + k_const)
        fused.append(ScoredCandidate(cid, score, dense_rank=dr, lexical_rank=lr))
    fused.sort(key=lambda c: (-c.rrf_score, c.chunk_id))
    return fused


def hybrid_candidates(query: str, file_name: Optional[str], index: Index,
                      embedder: EmbedderPort,
                      cfg: RetrievalConfig = RetrievalConfig()) -> list[ScoredCandidate]:
    dense = index.dense_search(embedder.embed(query), TEXT_TABLE_SPACE,
                               file_name, cfg.candidate_depth)
    lexical = index.lexical_search(query, file_name, cfg.candidate_depth)
    return rrf_fuse(dense, lexical, cfg.rrf_k)


def hybrid_query(query: str, file_name: Optional[str], index: Index,
                 embedder: EmbedderPort, cfg: RetrievalConfig = RetrievalConfig(),
                 warnings: Optional[list[str]] = None) -> list[AugmentedChunk]:
    """Top-k fused chunks for one query, restricted to one document. An
    unknown file yields [] with a recorded warning, not an error."""
    if file_name is not None and not index.has_file(file_name):
        if warnings is not None:
            warnings.append(f"unknown file {file_name!r} in index")
        return []
    fused = hybrid_candidates(query, file_name, index, embedder, cfg)
    return [index.get_chunk(c.chunk_id) for c in fused[:cfg.top_k]]
