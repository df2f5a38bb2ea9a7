"""Cached-embedding retrieval: cosine index, recall metrics, entity-score
reranking, checkpoint ensembling, and the dual-encoder latency bench.

Index rows are float32 and unit-normalized, so a query is one
vector-matrix multiplication; ties break toward the ascending id.

Embedding cache layout (little-endian):
    magic "CORE" | u32 count | u32 dim | u8 kind |
    count * dim float32 rows | count * (u32 len | utf8 id)
"""

from __future__ import annotations

import csv
import json
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import counters

KIND_CODES = {"image": 0, "caption": 1, "entity": 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
CACHE_MAGIC = b"CORE"


@dataclass
class EmbeddingRecord:
    id: str
    vector: np.ndarray
    kind: str                      # image | caption | entity


@dataclass
class RetrievalResult:
    query_id: str
    ranking: list[tuple[str, float]]   # (id, score) by descending score


class EmbeddingIndex:
    """Immutable set of unit-normalized float32 rows addressable by id."""

    def __init__(self, ids: list[str], matrix: np.ndarray, kind: str):
        self.ids = tuple(ids)
        self.matrix = matrix
        self.matrix.flags.writeable = False
        self.kind = kind
        # rank of each row in ascending-id order, for deterministic ties
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        self.id_rank = np.empty(len(ids), dtype=np.int64)
        for rank, row in enumerate(order):
            self.id_rank[row] = rank

    def __len__(self) -> int:
        return len(self.ids)


def _normalize_rows_f32(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float32)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero vector cannot be indexed")
    return matrix / norms


def build_index(records: list[EmbeddingRecord]) -> EmbeddingIndex:
    if not records:
        raise ValueError("cannot build an empty index")
    kinds = {r.kind for r in records}
    if len(kinds) != 1:
        raise ValueError(f"mixed record kinds: {sorted(kinds)}")
    kind = kinds.pop()
    if kind not in KIND_CODES:
        raise ValueError(f"unknown kind {kind!r}")
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate record ids")
    dims = {np.asarray(r.vector).shape for r in records}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise ValueError(f"records must share one vector dim, got {sorted(dims)}")
    matrix = _normalize_rows_f32(np.stack([np.asarray(r.vector) for r in records]))
    return EmbeddingIndex(ids, matrix, kind)


def _ranked_order(scores: np.ndarray, id_rank: np.ndarray) -> np.ndarray:
    """Row indices by descending score, then ascending id."""
    return np.lexsort((id_rank, -scores))


def query(q: np.ndarray, idx: EmbeddingIndex, k: int, query_id: str = "") -> RetrievalResult:
    """Top-k cosine neighbors of q (equals an exhaustive scan exactly)."""
    if k <= 0:
        raise ValueError("k must be positive")
    q = np.asarray(q, dtype=np.float32).reshape(-1)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ValueError("zero query vector")
    scores = (q / norm) @ idx.matrix.T
    counters.bump("index_scan")
    order = _ranked_order(scores, idx.id_rank)[: min(k, len(idx))]
    return RetrievalResult(
        query_id=query_id,
        ranking=[(idx.ids[i], float(scores[i])) for i in order],
    )


# ------------------------------------------------------------------ metrics


def recall_at_k(
    results: list[RetrievalResult], ground_truth: dict[str, set[str]], k: int
) -> float:
    """Fraction of queries whose top-k intersects its ground-truth set."""
    if not results:
        raise ValueError("no retrieval results")
    hits = 0
    for res in results:
        try:
            gt = ground_truth[res.query_id]
        except KeyError:
            raise ValueError(f"query {res.query_id!r} has no ground truth") from None
        if not gt:
            raise ValueError(f"query {res.query_id!r} has an empty ground-truth set")
        top = {rid for rid, _ in res.ranking[:k]}
        hits += bool(top & gt)
    return hits / len(results)


def rsum(i2t: tuple[float, float, float], t2i: tuple[float, float, float]) -> float:
    """Sum of the six recalls, each already expressed in percent."""
    if len(i2t) != 3 or len(t2i) != 3:
        raise ValueError("rsum expects R@{1,5,10} for both directions")
    return float(sum(i2t) + sum(t2i))


def rerank(s_vt: float, entity_scores: list[float], beta: float) -> float:
    """Blend the pair score with the weakest image-entity score."""
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must be in [0, 1]")
    if not entity_scores:
        return float(s_vt)
    return float(beta * s_vt + (1.0 - beta) * min(entity_scores))


def ensemble_scores(score_matrices: list[np.ndarray]) -> np.ndarray:
    """Elementwise mean of same-shape score matrices."""
    if not score_matrices:
        raise ValueError("nothing to ensemble")
    shapes = {np.asarray(m).shape for m in score_matrices}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")
    return np.mean([np.asarray(m, dtype=np.float32) for m in score_matrices], axis=0).astype(
        np.float32
    )


# ------------------------------------------------------------------ evaluation


def pair_score_matrix(caption_index: EmbeddingIndex, image_index: EmbeddingIndex) -> np.ndarray:
    """(captions, images) cosine matrix in float32."""
    return caption_index.matrix @ image_index.matrix.T


def entity_groups(entity_index: EmbeddingIndex) -> dict[str, list[int]]:
    """Group entity rows by caption: ids look like '<caption_id>#e<object_id>'."""
    groups: dict[str, list[int]] = {}
    for row, eid in enumerate(entity_index.ids):
        cap_id, sep, _ = eid.rpartition("#e")
        if not sep:
            raise ValueError(f"entity id {eid!r} lacks the '#e' caption marker")
        groups.setdefault(cap_id, []).append(row)
    return groups


def reranked_score_matrix(
    base: np.ndarray,
    caption_ids: list[str],
    image_index: EmbeddingIndex,
    entity_index: EmbeddingIndex,
    beta: float,
) -> np.ndarray:
    """Apply the entity blend to every (caption, image) pair score."""
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must be in [0, 1]")
    groups = entity_groups(entity_index)
    out = np.array(base, dtype=np.float32, copy=True)
    entity_vs_image = entity_index.matrix @ image_index.matrix.T   # (E, I)
    for row, cap_id in enumerate(caption_ids):
        rows = groups.get(cap_id, [])
        if not rows:
            continue
        weakest = entity_vs_image[rows].min(axis=0)
        out[row] = beta * base[row] + (1.0 - beta) * weakest
    return out


def _direction_recalls(
    scores: np.ndarray,
    query_ids: list[str],
    target_ids: list[str],
    target_rank: np.ndarray,
    ground_truth: dict[str, set[str]],
    ks: tuple[int, ...],
) -> tuple[float, ...]:
    results = []
    kmax = max(ks)
    for row, qid in enumerate(query_ids):
        order = _ranked_order(scores[row], target_rank)[:kmax]
        results.append(
            RetrievalResult(qid, [(target_ids[i], float(scores[row, i])) for i in order])
        )
    return tuple(recall_at_k(results, ground_truth, k) for k in ks)


def evaluate_retrieval(
    image_index: EmbeddingIndex,
    caption_index: EmbeddingIndex,
    pairs: list[tuple[str, str]],
    entity_index: EmbeddingIndex | None = None,
    beta: float = 1.0,
    ks: tuple[int, ...] = (1, 5, 10),
) -> dict:
    """Recalls both directions (+RSUM), optionally with entity reranking."""
    cap_to_imgs: dict[str, set[str]] = {}
    img_to_caps: dict[str, set[str]] = {}
    for img_id, cap_id in pairs:
        cap_to_imgs.setdefault(cap_id, set()).add(img_id)
        img_to_caps.setdefault(img_id, set()).add(cap_id)

    scores = pair_score_matrix(caption_index, image_index)   # (C, I)
    if beta < 1.0:
        if entity_index is None:
            raise ValueError("reranking needs an entity index")
        scores = reranked_score_matrix(
            scores, list(caption_index.ids), image_index, entity_index, beta
        )

    t2i = _direction_recalls(
        scores, list(caption_index.ids), list(image_index.ids),
        image_index.id_rank, cap_to_imgs, ks,
    )
    i2t = _direction_recalls(
        scores.T, list(image_index.ids), list(caption_index.ids),
        caption_index.id_rank, img_to_caps, ks,
    )
    return {
        "t2i": t2i,
        "i2t": i2t,
        "rsum": rsum(tuple(100.0 * r for r in i2t), tuple(100.0 * r for r in t2i)),
        "beta": beta,
    }


# ------------------------------------------------------------------ cache file


def write_embedding_cache(path: str | Path, records: list[EmbeddingRecord]) -> None:
    if not records:
        raise ValueError("nothing to write")
    kinds = {r.kind for r in records}
    if len(kinds) != 1:
        raise ValueError(f"mixed record kinds: {sorted(kinds)}")
    kind = kinds.pop()
    vectors = np.stack([np.asarray(r.vector, dtype=np.float32) for r in records])
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<IIB", len(records), vectors.shape[1], KIND_CODES[kind]))
        f.write(vectors.astype("<f4").tobytes(order="C"))
        for r in records:
            encoded = r.id.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)


def read_embedding_cache(path: str | Path) -> list[EmbeddingRecord]:
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: bad cache magic {raw[:4]!r}")
    count, dim, kind_code = struct.unpack_from("<IIB", raw, 4)
    if kind_code not in KIND_NAMES:
        raise ValueError(f"{path}: unknown kind code {kind_code}")
    offset = 13
    matrix = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=offset)
    matrix = matrix.reshape(count, dim)
    offset += count * dim * 4
    records = []
    for row in range(count):
        (n,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        rid = raw[offset : offset + n].decode("utf-8")
        offset += n
        records.append(EmbeddingRecord(rid, matrix[row].copy(), KIND_NAMES[kind_code]))
    return records


# ------------------------------------------------------------------ bench


def bench_latency(
    index_sizes: list[int],
    trials: int = 9,
    dim: int = 64,
    seed: int = 0,
) -> list[dict]:
    """Median wall-clock of (a) one caption encoding and (b) one full index
    scan, per index size. Encoding never touches the index, so its time is
    size-independent; the scan is one vector-matrix multiply."""
    from .encoders import Vocab, init_concept_params
    from .graphnet import encode_caption, init_scene_params
    from .sgparse import SceneGraph

    rng = np.random.default_rng(seed)
    vocab = Vocab.build([f"w{i}" for i in range(16)])
    concept = init_concept_params(vocab, 32, dim, rng)
    scene = init_scene_params(dim, 1, 2, 16, rng)
    graph = SceneGraph(
        objects=[(0, "w0 w1"), (1, "w2"), (2, "w3"), (3, "w4")],
        attributes=[(4, "w5"), (5, "w6")],
        oa_edges=[(4, 0), (5, 2)],
        oo_edges=[(0, "w7", 1), (2, "w8", 3)],
    )

    rows = []
    for size in index_sizes:
        matrix = rng.standard_normal((size, dim)).astype(np.float32)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)

        encode_times = []
        calls_before = counters.value("encode_caption")
        q = None
        for _ in range(trials):
            t0 = time.perf_counter()
            enc = encode_caption(graph, concept, scene)
            encode_times.append(time.perf_counter() - t0)
            q = enc.embedding.data.astype(np.float32)
        encoder_calls = counters.value("encode_caption") - calls_before
        q /= np.linalg.norm(q)

        reps = max(1, 200_000 // max(size, 1))
        scan_times = []
        for _ in range(trials):
            t0 = time.perf_counter()
            for _ in range(reps):
                scores = q @ matrix.T
            scan_times.append((time.perf_counter() - t0) / reps)
        del scores

        rows.append(
            {
                "size": int(size),
                "encode_ms": float(np.median(encode_times) * 1e3),
                "matmul_ms": float(np.median(scan_times) * 1e3),
                "trials": int(trials),
                "encoder_calls_per_query": encoder_calls / trials,
            }
        )
    return rows


def write_bench_report(rows: list[dict], path: str | Path) -> None:
    """Line-delimited JSON records plus a CSV mirror (same stem, .csv)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
