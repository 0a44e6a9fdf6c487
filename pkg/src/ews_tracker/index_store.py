"""Embedded dual index: a BM25F lexical index over two chunk fields (body
and model-written context) plus exact dense vector stores, one per named
modality space, with file_name metadata filtering and on-disk persistence.

Scans are exact, not approximate: corpora here are thousands of chunks and
correctness beats speed. Ranking ties break by ascending chunk_id
everywhere, giving a total order and reproducible ranks for fusion.

BM25F, with per-field weight w_f and length normalization b_f:

    tf'(t, c) = sum_f w_f * tf_{t,f} / (1 - b_f + b_f * len_f / avglen_f)
    idf(t)    = ln((N - n_t + 0.5) / (n_t + 0.5) + 1)
    score     = sum_{t in query} idf(t) * tf'(t, c) / (k1 + tf'(t, c))

n_t counts chunks containing t in any field. Terms absent from the corpus
contribute 0.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import INDEX_FORMAT_VERSION
from .augment import AugmentedChunk, build_augmented
from .chunking import Chunk
from .errors import (
    CorruptIndex,
    DimensionMismatch,
    EmbedderFailure,
    IndexIoError,
    UnknownChunk,
    VersionMismatch,
)
from .ports import IMAGE_SPACE, TEXT_TABLE_SPACE, EmbedderPort, EmbeddingSpec
from .textnorm import tokenize  # re-exported: the documented index tokenizer

__all__ = [
    "tokenize", "Bm25fParams", "RankedHit", "IndexedChunk", "IndexStats",
    "Index", "load_index", "space_for_kind",
]

FIELDS = ("body", "context")


def space_for_kind(kind: str) -> str:
    return IMAGE_SPACE if kind == "image" else TEXT_TABLE_SPACE


@dataclass(frozen=True)
class Bm25fParams:
    k1: float = 1.2
    b_per_field: tuple[tuple[str, float], ...] = (("body", 0.75), ("context", 0.75))
    w_per_field: tuple[tuple[str, float], ...] = (("body", 1.0), ("context", 0.5))

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        for _, b in self.b_per_field:
            if not 0.0 <= b <= 1.0:
                raise ValueError("b must be in [0, 1]")
        for _, w in self.w_per_field:
            if w < 0.0:
                raise ValueError("field weights must be >= 0")

    @property
    def b(self) -> dict[str, float]:
        return dict(self.b_per_field)

    @property
    def w(self) -> dict[str, float]:
        return dict(self.w_per_field)

    def to_json(self) -> dict:
        return {"k1": self.k1, "b_per_field": dict(self.b_per_field),
                "w_per_field": dict(self.w_per_field)}

    @classmethod
    def from_json(cls, data: dict) -> "Bm25fParams":
        return cls(
            k1=data["k1"],
            b_per_field=tuple(sorted(data["b_per_field"].items())),
            w_per_field=tuple(sorted(data["w_per_field"].items())),
        )


@dataclass(frozen=True)
class RankedHit:
    chunk_id: str
    rank: int  # 1-based, contiguous within one result list
    raw_score: float


@dataclass
class IndexedChunk:
    augmented: AugmentedChunk
    vectors: dict[str, np.ndarray]
    fields: dict[str, list[str]]


@dataclass(frozen=True)
class IndexStats:
    n_chunks: int
    vocabulary: int
    avg_field_len: dict[str, float]
    per_space: dict[str, int]

    def to_json(self) -> dict:
        return {
            "n_chunks": self.n_chunks,
            "vocabulary": self.vocabulary,
            "avg_field_len": self.avg_field_len,
            "per_space": self.per_space,
        }


def _default_specs() -> dict[str, EmbeddingSpec]:
    return {
        TEXT_TABLE_SPACE: EmbeddingSpec(TEXT_TABLE_SPACE),
        IMAGE_SPACE: EmbeddingSpec(IMAGE_SPACE),
    }


class Index:
    """In-memory dual index. Reads may run concurrently; upsert and persist
    require exclusive access."""

    def __init__(self, params: Bm25fParams = Bm25fParams(),
                 specs: Optional[dict[str, EmbeddingSpec]] = None):
        self.params = params
        self.specs = specs or _default_specs()
        self._chunks: dict[str, IndexedChunk] = {}
        self._postings: dict[str, dict[str, dict[str, int]]] = {f: {} for f in FIELDS}
        self._field_len: dict[str, dict[str, int]] = {f: {} for f in FIELDS}
        self._field_len_sum: dict[str, int] = {f: 0 for f in FIELDS}
        self._vectors: dict[str, dict[str, np.ndarray]] = {s: {} for s in self.specs}
        self._file_chunks: dict[str, set[str]] = {}

    # -- corpus statistics -------------------------------------------------

    @property
    def n_chunks(self) -> int:
        return len(self._chunks)

    def avg_field_len(self, field_name: str) -> float:
        return self._field_len_sum[field_name] / len(self._chunks) if self._chunks else 0.0

    def doc_freq(self, token: str) -> int:
        ids: set[str] = set()
        for f in FIELDS:
            ids.update(self._postings[f].get(token, ()))
        return len(ids)

    def stats(self) -> IndexStats:
        vocab = set()
        for f in FIELDS:
            vocab.update(self._postings[f])
        return IndexStats(
            n_chunks=self.n_chunks,
            vocabulary=len(vocab),
            avg_field_len={f: self.avg_field_len(f) for f in FIELDS},
            per_space={s: len(v) for s, v in self._vectors.items()},
        )

    def has_file(self, file_name: str) -> bool:
        return file_name in self._file_chunks

    def file_names(self) -> list[str]:
        return sorted(self._file_chunks)

    def chunk_ids(self) -> list[str]:
        return sorted(self._chunks)

    def get_chunk(self, chunk_id: str) -> AugmentedChunk:
        try:
            return self._chunks[chunk_id].augmented
        except KeyError:
            raise UnknownChunk(chunk_id) from None

    # -- mutation ----------------------------------------------------------

    def _remove(self, chunk_id: str) -> None:
        entry = self._chunks.pop(chunk_id, None)
        if entry is None:
            return
        for f in FIELDS:
            for token in set(entry.fields[f]):
                bucket = self._postings[f].get(token)
                if bucket is not None:
                    bucket.pop(chunk_id, None)
                    if not bucket:
                        del self._postings[f][token]
            self._field_len_sum[f] -= self._field_len[f].pop(chunk_id, 0)
        for space in self._vectors:
            self._vectors[space].pop(chunk_id, None)
        fname = entry.augmented.chunk.file_name
        group = self._file_chunks.get(fname)
        if group is not None:
            group.discard(chunk_id)
            if not group:
                del self._file_chunks[fname]

    def upsert_chunks(self, chunks: list[AugmentedChunk],
                      embedder_by_space: dict[str, EmbedderPort]) -> IndexStats:
        """Insert or replace chunks. All embeddings are computed before any
        mutation, so one embedder failure leaves the index unchanged."""
        prepared: list[tuple[AugmentedChunk, str, np.ndarray, dict[str, list[str]]]] = []
        for aug in chunks:
            kind = aug.chunk.kind
            space = space_for_kind(kind)
            if space not in self.specs:
                raise EmbedderFailure(aug.chunk.id, f"no embedding space configured for kind {kind!r}")
            embedder = embedder_by_space.get(space)
            if embedder is None:
                raise EmbedderFailure(aug.chunk.id, f"no embedder for space {space!r}")
            payload = aug.chunk.image_ref if (kind == "image" and aug.chunk.image_ref) else aug.augmented_body
            try:
                vec = np.asarray(embedder.embed(payload), dtype=np.float32)
            except Exception as exc:
                raise EmbedderFailure(aug.chunk.id, str(exc)) from exc
            spec = self.specs[space]
            if vec.ndim != 1 or vec.shape[0] != spec.dim:
                raise EmbedderFailure(aug.chunk.id, f"vector shape {vec.shape} != dim {spec.dim}")
            if not np.all(np.isfinite(vec)):
                raise EmbedderFailure(aug.chunk.id, "vector has non-finite values")
            fields = {"body": tokenize(aug.chunk.body), "context": tokenize(aug.context_summary)}
            prepared.append((aug, space, vec, fields))

        for aug, space, vec, fields in prepared:
            cid = aug.chunk.id
            self._remove(cid)
            self._chunks[cid] = IndexedChunk(augmented=aug, vectors={space: vec}, fields=fields)
            for f in FIELDS:
                tokens = fields[f]
                self._field_len[f][cid] = len(tokens)
                self._field_len_sum[f] += len(tokens)
                for token in tokens:
                    bucket = self._postings[f].setdefault(token, {})
                    bucket[cid] = bucket.get(cid, 0) + 1
            self._vectors[space][cid] = vec
            self._file_chunks.setdefault(aug.chunk.file_name, set()).add(cid)
        return self.stats()

    # -- scoring and search --------------------------------------------------

    def _weighted_tf(self, token: str, chunk_id: str) -> float:
        b, w = self.params.b, self.params.w
        total = 0.0
        for f in FIELDS:
            tf = self._postings[f].get(token, {}).get(chunk_id, 0)
            if tf == 0:
                continue
            avglen = self.avg_field_len(f)
            if avglen <= 0.0:
                continue
            norm = 1.0 - b[f] + b[f] * self._field_len[f][chunk_id] / avglen
            if norm <= 0.0:
                continue
            total += w[f] * tf / norm
        return total

    def _idf(self, token: str) -> float:
        n_t = self.doc_freq(token)
        n = self.n_chunks
        return math.log((n - n_t + 0.5) / (n_t + 0.5) + 1.0)

    def bm25f_score(self, query_tokens: list[str], chunk_id: str) -> float:
        if chunk_id not in self._chunks:
            raise UnknownChunk(chunk_id)
        score = 0.0
        for token in query_tokens:
            if self.doc_freq(token) == 0:
                continue
            wtf = self._weighted_tf(token, chunk_id)
            if wtf > 0.0:
                score += self._idf(token) * wtf / (self.params.k1 + wtf)
        return score

    def _candidate_ids(self, file_filter: Optional[str]) -> set[str]:
        if file_filter is None:
            return set(self._chunks)
        return set(self._file_chunks.get(file_filter, ()))

    def lexical_search(self, query: str, file_filter: Optional[str] = None,
                       k: int = 10) -> list[RankedHit]:
        """Top-k BM25F hits; zero-score chunks are excluded, ties break by
        ascending chunk_id."""
        query_tokens = tokenize(query)
        if not query_tokens or not self._chunks:
            return []
        allowed = self._candidate_ids(file_filter)
        touched: set[str] = set()
        for token in set(query_tokens):
            for f in FIELDS:
                touched.update(self._postings[f].get(token, ()))
        scored = []
        for cid in touched & allowed:
            s = self.bm25f_score(query_tokens, cid)
            if s > 0.0:
                scored.append((cid, s))
        scored.sort(key=lambda t: (-t[1], t[0]))
        return [RankedHit(cid, i + 1, s) for i, (cid, s) in enumerate(scored[:k])]

    def dense_search(self, query_vector: np.ndarray, space: str = TEXT_TABLE_SPACE,
                     file_filter: Optional[str] = None, k: int = 10) -> list[RankedHit]:
        """Exact cosine-similarity scan over one space. Zero vectors score 0;
        ties break by ascending chunk_id."""
        spec = self.specs.get(space)
        if spec is None:
            raise DimensionMismatch(f"unknown space {space!r}")
        q = np.asarray(query_vector, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != spec.dim:
            raise DimensionMismatch(f"query dim {q.shape} != space dim {spec.dim}")
        qnorm = float(np.linalg.norm(q))
        allowed = self._candidate_ids(file_filter)
        scored = []
        for cid, vec in self._vectors[space].items():
            if cid not in allowed:
                continue
            v = vec.astype(np.float64)
            vnorm = float(np.linalg.norm(v))
            if qnorm == 0.0 or vnorm == 0.0:
                score = 0.0
            else:
                score = float(np.dot(q, v) / (qnorm * vnorm))
            scored.append((cid, score))
        scored.sort(key=lambda t: (-t[1], t[0]))
        return [RankedHit(cid, i + 1, s) for i, (cid, s) in enumerate(scored[:k])]

    # -- persistence ---------------------------------------------------------

    def persist(self, directory: str | Path) -> None:
        """Write the index as deterministic bytes: fixed iteration order by
        chunk_id, fixed float32 little-endian vectors, checksummed files."""
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IndexIoError(str(exc)) from exc

        artifacts: dict[str, bytes] = {}

        chunk_lines = []
        for cid in sorted(self._chunks):
            entry = self._chunks[cid]
            ch = entry.augmented.chunk
            chunk_lines.append(json.dumps({
                "id": ch.id, "file_name": ch.file_name, "kind": ch.kind,
                "page_span": list(ch.page_span), "body": ch.body,
                "ordinal": ch.ordinal, "image_ref": ch.image_ref,
                "context_summary": entry.augmented.context_summary,
                "warnings": list(entry.augmented.warnings),
            }, sort_keys=True, ensure_ascii=False))
        artifacts["chunks.jsonl"] = ("\n".join(chunk_lines) + ("\n" if chunk_lines else "")).encode("utf-8")

        postings = {
            f: {token: sorted(per_chunk.items()) for token, per_chunk in sorted(self._postings[f].items())}
            for f in FIELDS
        }
        field_len = {f: dict(sorted(self._field_len[f].items())) for f in FIELDS}
        artifacts["postings.json"] = json.dumps(
            {"postings": postings, "field_len": field_len},
            sort_keys=True, ensure_ascii=False,
        ).encode("utf-8")

        for space in sorted(self._vectors):
            buf = bytearray()
            for cid in sorted(self._vectors[space]):
                raw_id = cid.encode("utf-8")
                buf += struct.pack("<I", len(raw_id))
                buf += raw_id
                buf += self._vectors[space][cid].astype("<f4").tobytes()
            artifacts[f"vectors_{space}.bin"] = bytes(buf)

        manifest = {
            "format_version": INDEX_FORMAT_VERSION,
            "params": self.params.to_json(),
            "spaces": {s: {"dim": sp.dim, "normalized": sp.normalized} for s, sp in sorted(self.specs.items())},
            "stats": self.stats().to_json(),
            "files": self.file_names(),
            "checksums": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(artifacts.items())},
        }
        try:
            for name, data in artifacts.items():
                (directory / name).write_bytes(data)
            (directory / "manifest.json").write_text(
                json.dumps(manifest, sort_keys=True, ensure_ascii=False, indent=2) + "\n", "utf-8"
            )
        except OSError as exc:
            raise IndexIoError(str(exc)) from exc


def load_index(directory: str | Path) -> Index:
    """Reconstruct a persisted index; every query on the result is identical
    to the pre-persist index."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise IndexIoError(f"no manifest.json in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IndexIoError(f"unreadable manifest: {exc}") from exc

    if manifest.get("format_version") != INDEX_FORMAT_VERSION:
        raise VersionMismatch(
            f"index format {manifest.get('format_version')!r}, engine expects {INDEX_FORMAT_VERSION}"
        )

    blobs: dict[str, bytes] = {}
    for name, expected in manifest["checksums"].items():
        path = directory / name
        if not path.is_file():
            raise IndexIoError(f"missing index file {name}")
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != expected:
            raise CorruptIndex(f"checksum mismatch for {name}")
        blobs[name] = data

    params = Bm25fParams.from_json(manifest["params"])
    specs = {
        s: EmbeddingSpec(space=s, dim=info["dim"], normalized=info["normalized"])
        for s, info in manifest["spaces"].items()
    }
    index = Index(params=params, specs=specs)

    vectors: dict[str, dict[str, np.ndarray]] = {s: {} for s in specs}
    for space, spec in specs.items():
        raw = blobs.get(f"vectors_{space}.bin", b"")
        pos = 0
        while pos < len(raw):
            (id_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            cid = raw[pos:pos + id_len].decode("utf-8")
            pos += id_len
            vec = np.frombuffer(raw, dtype="<f4", count=spec.dim, offset=pos).copy()
            pos += 4 * spec.dim
            vectors[space][cid] = vec

    try:
        for line in blobs["chunks.jsonl"].decode("utf-8").splitlines():
            rec = json.loads(line)
            chunk = Chunk(
                id=rec["id"], file_name=rec["file_name"], kind=rec["kind"],
                page_span=tuple(rec["page_span"]), body=rec["body"],
                ordinal=rec["ordinal"], image_ref=rec["image_ref"],
            )
            aug = build_augmented(chunk, rec["context_summary"], tuple(rec["warnings"]))
            space = space_for_kind(chunk.kind)
            vec = vectors[space].get(chunk.id)
            if vec is None:
                raise CorruptIndex(f"no vector for chunk {chunk.id}")
            fields = {"body": tokenize(chunk.body), "context": tokenize(rec["context_summary"])}
            index._chunks[chunk.id] = IndexedChunk(augmented=aug, vectors={space: vec}, fields=fields)
            index._vectors[space][chunk.id] = vec
            index._file_chunks.setdefault(chunk.file_name, set()).add(chunk.id)

        payload = json.loads(blobs["postings.json"].decode("utf-8"))
        for f in FIELDS:
            index._postings[f] = {
                token: dict(pairs) for token, pairs in payload["postings"][f].items()
            }
            index._field_len[f] = dict(payload["field_len"][f])
            index._field_len_sum[f] = sum(index._field_len[f].values())
    except (KeyError, ValueError) as exc:
        raise CorruptIndex(f"malformed index payload: {exc}") from exc

    return index
