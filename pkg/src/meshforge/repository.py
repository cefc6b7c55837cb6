"""Embedding-keyed repository of generated 3D assets.

A similarity hit here is what lets the pipeline skip the generator
entirely, so durability and exactness matter more than query speed at
this scale. Retrieval is an exact brute-force cosine scan; the repository
sizes involved (thousands of assets) make an approximate index
unnecessary, and any future index must pass the brute-force equivalence
test before replacing the scan.

On-disk layout::

    <root>/meta.jsonl            append-only record + hit log, replayed on open
    <root>/blobs/<sha256>.mforge content-addressed compact-binary meshes

Writes are serialized by a lock and appended (with fsync) before upsert
returns; concurrent readers see a consistent snapshot because query takes
the same lock only long enough to copy the current matrix reference.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .embedding import DEFAULT_DIMENSION, EmbeddingProvider, EmbeddingVector
from .mesh import Mesh, require_valid
from .meshio import BINARY_EXTENSION, read_mesh, write_mesh

__all__ = ["AssetRecord", "SimilarityHit", "AssetRepository", "RepositoryError"]

SOURCES = ("generated", "imported", "image-derived")


class RepositoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class AssetRecord:
    id: str
    label: str
    embedding: EmbeddingVector
    mesh_ref: str  # sha256 of the compact-binary blob
    source: str  # generated | imported | image-derived
    created_at: float
    hit_count: int = 0

    def __post_init__(self):
        if not self.label or not self.label.strip():
            raise ValueError("label must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")


@dataclass(frozen=True)
class SimilarityHit:
    record_id: str
    score: float  # cosine, in [-1, 1]


class AssetRepository:
    def __init__(self, root: str | Path, dimension: int = DEFAULT_DIMENSION):
        self.root = Path(root)
        self.dimension = dimension
        self.blob_dir = self.root / "blobs"
        self.meta_path = self.root / "meta.jsonl"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._records: dict[str, AssetRecord] = {}
        self._order: list[str] = []  # insertion order, the final tiebreak
        self._matrix: np.ndarray | None = None
        self._replay()
        self._log = open(self.meta_path, "a", encoding="utf-8")

    # --- persistence ---------------------------------------------------------

    def _replay(self):
        if not self.meta_path.exists():
            return
        with open(self.meta_path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RepositoryError(f"{self.meta_path}:{ln}: corrupt log: {exc}")
                op = entry.get("op")
                if op == "upsert":
                    rec = self._record_from_json(entry["record"])
                    if rec.id not in self._records:
                        self._order.append(rec.id)
                    self._records[rec.id] = rec
                elif op == "hit":
                    rid = entry["id"]
                    if rid in self._records:
                        rec = self._records[rid]
                        self._records[rid] = replace(rec, hit_count=rec.hit_count + 1)
                else:
                    raise RepositoryError(f"{self.meta_path}:{ln}: unknown op {op!r}")
        self._matrix = None

    def _record_from_json(self, data: dict) -> AssetRecord:
        emb = EmbeddingVector(tuple(data["embedding"]))
        if emb.dimension != self.dimension:
            raise RepositoryError(
                f"record {data.get('id')}: dimension {emb.dimension} != {self.dimension}"
            )
        return AssetRecord(
            id=data["id"],
            label=data["label"],
            embedding=emb,
            mesh_ref=data["mesh_ref"],
            source=data["source"],
            created_at=float(data["created_at"]),
            hit_count=int(data.get("hit_count", 0)),
        )

    def _append(self, entry: dict):
        self._log.write(json.dumps(entry) + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())

    def close(self):
        with self._lock:
            self._log.close()

    # --- blobs ----------------------------------------------------------------

    def store_blob(self, mesh: Mesh) -> str:
        """Write the mesh as a content-addressed blob, returning its ref."""
        require_valid(mesh)
        data = write_mesh(mesh, "compact-binary")
        ref = hashlib.sha256(data).hexdigest()
        path = self.blob_dir / f"{ref}{BINARY_EXTENSION}"
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return ref

    def load_mesh(self, record_or_ref: AssetRecord | str) -> Mesh:
        ref = (
            record_or_ref.mesh_ref
            if isinstance(record_or_ref, AssetRecord)
            else record_or_ref
        )
        path = self.blob_dir / f"{ref}{BINARY_EXTENSION}"
        if not path.exists():
            raise RepositoryError(f"missing blob {ref}")
        return read_mesh(path.read_bytes(), "compact-binary")

    # --- records ----------------------------------------------------------------

    def upsert(self, record: AssetRecord) -> str:
        if record.embedding.dimension != self.dimension:
            raise ValueError(
                f"dimension mismatch: {record.embedding.dimension} != {self.dimension}"
            )
        blob = self.blob_dir / f"{record.mesh_ref}{BINARY_EXTENSION}"
        if not blob.exists():
            raise RepositoryError(f"mesh_ref {record.mesh_ref} does not resolve to a blob")
        with self._lock:
            self._append({"op": "upsert", "record": self._record_to_json(record)})
            if record.id not in self._records:
                self._order.append(record.id)
            self._records[record.id] = record
            self._matrix = None
        return record.id

    def add_mesh(
        self,
        label: str,
        mesh: Mesh,
        provider: EmbeddingProvider,
        source: str = "generated",
        record_id: str | None = None,
    ) -> AssetRecord:
        """Embed, store the blob, and upsert in one step."""
        ref = self.store_blob(mesh)
        record = AssetRecord(
            id=record_id or uuid.uuid4().hex,
            label=label.strip(),
            embedding=provider.embed(label),
            mesh_ref=ref,
            source=source,
            created_at=time.time(),
        )
        self.upsert(record)
        return record

    @staticmethod
    def _record_to_json(record: AssetRecord) -> dict:
        return {
            "id": record.id,
            "label": record.label,
            "embedding": list(record.embedding.values),
            "mesh_ref": record.mesh_ref,
            "source": record.source,
            "created_at": record.created_at,
            "hit_count": record.hit_count,
        }

    def get(self, record_id: str) -> AssetRecord:
        with self._lock:
            rec = self._records.get(record_id)
        if rec is None:
            raise KeyError(record_id)
        return rec

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def records(self) -> list[AssetRecord]:
        with self._lock:
            return [self._records[rid] for rid in self._order]

    def record_hit(self, record_id: str) -> AssetRecord:
        """Count one served cache hit, durably."""
        with self._lock:
            rec = self._records.get(record_id)
            if rec is None:
                raise KeyError(record_id)
            self._append({"op": "hit", "id": record_id})
            updated = replace(rec, hit_count=rec.hit_count + 1)
            self._records[record_id] = updated
        return updated

    # --- similarity -------------------------------------------------------------

    def _snapshot(self):
        with self._lock:
            if self._matrix is None and self._order:
                rows = [self._records[rid].embedding.as_array() for rid in self._order]
                norms = np.array(
                    [self._records[rid].embedding.norm for rid in self._order]
                )
                m = np.stack(rows)
                safe = np.where(norms == 0.0, 1.0, norms)
                self._matrix = m / safe[:, None]
            ids = list(self._order)
            created = [self._records[rid].created_at for rid in ids]
            return self._matrix, ids, created

    def query_similar(
        self, query: EmbeddingVector, k: int, min_score: float = -1.0
    ) -> list[SimilarityHit]:
        """Exact top-k by cosine score, descending; ties go to older records."""
        if query.dimension != self.dimension:
            raise ValueError(
                f"dimension mismatch: {query.dimension} != {self.dimension}"
            )
        if k <= 0:
            raise ValueError("k must be positive")
        matrix, ids, created = self._snapshot()
        if matrix is None or not ids:
            return []
        q = query.as_array()
        qn = query.norm
        if qn == 0.0:
            scores = np.zeros(len(ids))
        else:
            scores = matrix @ (q / qn)
        order = sorted(
            range(len(ids)), key=lambda i: (-scores[i], created[i], i)
        )
        hits = []
        for i in order:
            s = float(scores[i])
            if s < min_score:
                continue
            hits.append(SimilarityHit(record_id=ids[i], score=s))
            if len(hits) == k:
                break
        return hits

    def find_duplicate(
        self, label: str, provider: EmbeddingProvider, threshold: float = 0.92
    ) -> str | None:
        """Best record at or above the duplicate threshold, if any."""
        if len(self) == 0:
            return None
        hits = self.query_similar(provider.embed(label), k=1, min_score=threshold)
        return hits[0].record_id if hits else None

    def stats(self) -> dict:
        with self._lock:
            by_source: dict[str, int] = {}
            hits = 0
            for rec in self._records.values():
                by_source[rec.source] = by_source.get(rec.source, 0) + 1
                hits += rec.hit_count
            return {
                "records": len(self._records),
                "dimension": self.dimension,
                "by_source": by_source,
                "total_hits": hits,
                "blobs": len(list(self.blob_dir.glob(f"*{BINARY_EXTENSION}"))),
            }
