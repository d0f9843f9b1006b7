"""Exact inner-product search over an immutable passage vector matrix.

Persistence layout (one directory per index):
  vectors.f32    row-major float32, little-endian
  ids.jsonl      {"passage_id": ...} per line, in row order
  manifest.json  {"d", "M", "snapshot_version", "encoder_weight_hash"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..corpus import Passage


@dataclass(frozen=True)
class RetrievalResult:
    passage_id: str
    retriever_score: float
    rank: int  # 1-based


class DenseIndex:
    def __init__(
        self,
        matrix: np.ndarray,
        passage_ids: list[str],
        snapshot_version: int = 1,
        encoder_weight_hash: str = "",
    ):
        if matrix.ndim != 2 or matrix.shape[0] != len(passage_ids):
            raise ValueError(
                f"matrix rows {matrix.shape} must match id count {len(passage_ids)}"
            )
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.matrix.setflags(write=False)
        self.passage_ids = list(passage_ids)
        self.snapshot_version = snapshot_version
        self.encoder_weight_hash = encoder_weight_hash
        self._row_of = {pid: i for i, pid in enumerate(passage_ids)}

    def __len__(self) -> int:
        return len(self.passage_ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def vector(self, passage_id: str) -> np.ndarray:
        return self.matrix[self._row_of[passage_id]]

    def search(self, query_vec: np.ndarray, k: int) -> list[RetrievalResult]:
        """Exact top-k by dot product; ties break by passage_id ascending."""
        if len(self) == 0:
            raise ValueError("index is empty")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        q = np.asarray(query_vec, dtype=np.float32)
        if q.shape != (self.dim,):
            raise ValueError(f"query width {q.shape} does not match index d={self.dim}")
        scores = self.matrix @ q
        k = min(k, len(self))
        if k < len(self):
            part = np.argpartition(-scores, k - 1)[:k]
            # pull in every row tied with the k-th score so id tie-breaks
            # stay globally correct
            kth = scores[part].min()
            cand = np.flatnonzero(scores >= kth)
        else:
            cand = np.arange(len(self))
        order = sorted(cand, key=lambda i: (-scores[i], self.passage_ids[i]))[:k]
        return [
            RetrievalResult(self.passage_ids[i], float(scores[i]), rank)
            for rank, i in enumerate(order, start=1)
        ]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.matrix.astype("<f4").tofile(directory / "vectors.f32")
        with open(directory / "ids.jsonl", "w", encoding="utf-8") as fh:
            for pid in self.passage_ids:
                fh.write(json.dumps({"passage_id": pid}) + "\n")
        (directory / "manifest.json").write_text(
            json.dumps(
                {
                    "d": self.dim,
                    "M": len(self),
                    "snapshot_version": self.snapshot_version,
                    "encoder_weight_hash": self.encoder_weight_hash,
                },
                indent=2,
            )
        )

    @classmethod
    def load(cls, directory: str | Path, expect_dim: int | None = None) -> "DenseIndex":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if expect_dim is not None and manifest["d"] != expect_dim:
            raise ValueError(
                f"index width {manifest['d']} does not match encoder width {expect_dim}"
            )
        matrix = np.fromfile(directory / "vectors.f32", dtype="<f4").reshape(
            manifest["M"], manifest["d"]
        )
        ids = [
            json.loads(line)["passage_id"]
            for line in (directory / "ids.jsonl").read_text().splitlines()
            if line.strip()
        ]
        return cls(
            matrix,
            ids,
            snapshot_version=manifest["snapshot_version"],
            encoder_weight_hash=manifest.get("encoder_weight_hash", ""),
        )


def next_snapshot_version(directory: str | Path) -> int:
    """Snapshot versions increase strictly across rebuilds at one location."""
    manifest = Path(directory) / "manifest.json"
    if manifest.exists():
        return json.loads(manifest.read_text())["snapshot_version"] + 1
    return 1


def build_index(
    passages: list[Passage],
    encoder,
    snapshot_version: int = 1,
    batch_size: int = 64,
) -> DenseIndex:
    """Encode every passage and assemble the search matrix."""
    if not passages:
        raise ValueError("cannot build an index over zero passages")
    matrix = encoder.encode_passages([p.text for p in passages], batch_size=batch_size)
    return DenseIndex(
        matrix,
        [p.passage_id for p in passages],
        snapshot_version=snapshot_version,
        encoder_weight_hash=encoder.weight_hash(),
    )
