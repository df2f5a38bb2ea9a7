"""Embedding both towers' raw inputs into the joint D-dimensional space.

Text side: a trainable phrase encoder (mean of word embeddings + affine
projection) turns each concept phrase into a vector. Image side: region
features go through a residual two-layer MLP, multi-head self-attention,
and the learned rank pooling shared by both towers.

pool_set sorts each dimension independently (descending) and takes a
weighted sum of the sorted values; the weights are a softmax over a
learnable logit vector linearly resampled from max_rank positions to the
actual set size. Sorting makes the operator permutation-invariant, the
logits let it learn anything between mean- and max-pooling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import counters
from .numcore import Tensor, as_tensor, concat, gather_rows, parameter, segment_sum
from .numcore import autograd as ag

UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"
REGION_MAGIC = b"CORF"


# --------------------------------------------------------------- vocabulary


class Vocab:
    """Token -> row mapping; rows 0 and 1 are reserved for <unk> and <mask>."""

    def __init__(self, tokens: list[str]):
        if len(tokens) < 2 or tokens[0] != UNK_TOKEN or tokens[1] != MASK_TOKEN:
            raise ValueError(f"vocabulary must start with {UNK_TOKEN!r}, {MASK_TOKEN!r}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate vocabulary tokens")
        self.tokens = list(tokens)
        self._index = {tok: i for i, tok in enumerate(tokens)}

    @classmethod
    def build(cls, corpus_tokens) -> "Vocab":
        """Deterministic vocabulary from any token iterable (sorted unique)."""
        uniq = sorted({t for t in corpus_tokens if t not in (UNK_TOKEN, MASK_TOKEN)})
        return cls([UNK_TOKEN, MASK_TOKEN] + uniq)

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._index.get(token, 0)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


# --------------------------------------------------------------- parameters


@dataclass
class ConceptEncoderParams:
    vocab: Vocab
    embedding: Tensor          # (|vocab|, word_dim)
    proj_w: Tensor             # (word_dim, dim)
    proj_b: Tensor             # (dim,)

    def named_parameters(self):
        return [
            ("embedding", self.embedding),
            ("proj_w", self.proj_w),
            ("proj_b", self.proj_b),
        ]


@dataclass
class PoolParams:
    max_rank: int
    rank_logits: Tensor        # (max_rank,)

    def named_parameters(self):
        return [("rank_logits", self.rank_logits)]


@dataclass
class AttentionParams:
    heads: int
    w_query: Tensor            # (dim, dim)
    w_key: Tensor
    w_value: Tensor
    w_out: Tensor

    def named_parameters(self):
        return [
            ("w_query", self.w_query),
            ("w_key", self.w_key),
            ("w_value", self.w_value),
            ("w_out", self.w_out),
        ]


@dataclass
class VisualEncoderParams:
    w_in: Tensor               # (region_dim, dim)
    b_in: Tensor               # (dim,)
    w_hidden: Tensor           # (dim, dim)
    b_hidden: Tensor           # (dim,)
    attn: AttentionParams
    pool: PoolParams

    def named_parameters(self):
        out = [
            ("w_in", self.w_in),
            ("b_in", self.b_in),
            ("w_hidden", self.w_hidden),
            ("b_hidden", self.b_hidden),
        ]
        out += [("attn." + n, t) for n, t in self.attn.named_parameters()]
        out += [("pool." + n, t) for n, t in self.pool.named_parameters()]
        return out


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_concept_params(
    vocab: Vocab, word_dim: int, dim: int, rng: np.random.Generator
) -> ConceptEncoderParams:
    return ConceptEncoderParams(
        vocab=vocab,
        embedding=parameter(rng.uniform(-0.1, 0.1, size=(len(vocab), word_dim))),
        proj_w=parameter(glorot(rng, word_dim, dim)),
        proj_b=parameter(np.zeros(dim)),
    )


def init_pool_params(max_rank: int, rng: np.random.Generator) -> PoolParams:
    # zero logits start the operator at exact mean pooling
    del rng
    return PoolParams(max_rank=max_rank, rank_logits=parameter(np.zeros(max_rank)))


def init_visual_params(
    region_dim: int,
    dim: int,
    heads: int,
    max_rank: int,
    rng: np.random.Generator,
    identity_start: bool = True,
) -> VisualEncoderParams:
    """identity_start zeroes the attention output and hidden-MLP weights so
    the tower begins as a plain linear projection of the regions; the mixing
    paths then grow from the gradient signal. Short runs converge much
    faster that way. Pass False for fully random weights."""
    if dim % heads != 0:
        raise ValueError(f"head count {heads} must divide dim {dim}")

    def maybe_zero(w: np.ndarray) -> np.ndarray:
        return np.zeros_like(w) if identity_start else w

    return VisualEncoderParams(
        w_in=parameter(glorot(rng, region_dim, dim)),
        b_in=parameter(np.zeros(dim)),
        w_hidden=parameter(maybe_zero(glorot(rng, dim, dim))),
        b_hidden=parameter(np.zeros(dim)),
        attn=AttentionParams(
            heads=heads,
            w_query=parameter(glorot(rng, dim, dim)),
            w_key=parameter(glorot(rng, dim, dim)),
            w_value=parameter(glorot(rng, dim, dim)),
            w_out=parameter(maybe_zero(glorot(rng, dim, dim))),
        ),
        pool=init_pool_params(max_rank, rng),
    )


# --------------------------------------------------------------- text side


def _tokenize(phrase) -> list[str]:
    if isinstance(phrase, str):
        phrase = phrase.split()
    return list(phrase)


def encode_concepts(phrases: list, params: ConceptEncoderParams) -> Tensor:
    """Encode a list of phrases into a (P, dim) block: mean of word rows,
    then affine projection. Unknown tokens map to the <unk> row."""
    token_lists = [_tokenize(p) for p in phrases]
    if not token_lists or any(len(t) == 0 for t in token_lists):
        raise ValueError("cannot encode an empty phrase")
    flat_ids = [params.vocab.id(t) for toks in token_lists for t in toks]
    seg = np.repeat(np.arange(len(token_lists)), [len(t) for t in token_lists])
    counts = np.array([len(t) for t in token_lists], dtype=np.float64)
    rows = gather_rows(params.embedding, np.asarray(flat_ids))
    means = segment_sum(rows, seg, len(token_lists)) / as_tensor(counts[:, None])
    return means @ params.proj_w + params.proj_b


def encode_concept(phrase, params: ConceptEncoderParams) -> Tensor:
    """Encode one phrase to a (dim,) vector."""
    return encode_concepts([phrase], params)[0]


# --------------------------------------------------------------- pooling


def _interp_weights(n: int, max_rank: int) -> np.ndarray:
    """(n, max_rank) matrix linearly resampling max_rank logits to n positions."""
    m = np.zeros((n, max_rank))
    if n == 1:
        m[0, 0] = 1.0
        return m
    positions = np.linspace(0.0, max_rank - 1.0, n)
    lo = np.floor(positions).astype(int)
    hi = np.minimum(lo + 1, max_rank - 1)
    frac = positions - lo
    for k in range(n):
        m[k, lo[k]] += 1.0 - frac[k]
        if hi[k] != lo[k]:
            m[k, hi[k]] += frac[k]
    return m


def pool_set(features, pool: PoolParams) -> Tensor:
    """Permutation-invariant learned pooling of a nonempty feature set."""
    if isinstance(features, (list, tuple)):
        if len(features) == 0:
            raise ValueError("cannot pool an empty set")
        features = ag.stack([as_tensor(f) for f in features], axis=0)
    else:
        features = as_tensor(features)
    n = features.shape[0]
    if n == 0:
        raise ValueError("cannot pool an empty set")
    if n > pool.max_rank:
        raise ValueError(f"set size {n} exceeds max_rank {pool.max_rank}")
    order = np.argsort(-features.data, axis=0, kind="stable")
    ranked = ag.take_along_axis(features, order, axis=0)
    logits = as_tensor(_interp_weights(n, pool.max_rank)) @ pool.rank_logits
    weights = ag.softmax(logits, axis=-1)
    return weights @ ranked


# --------------------------------------------------------------- image side


def _multi_head_attention(x: Tensor, attn: AttentionParams) -> Tensor:
    """Scaled dot-product self-attention over (batch, set, dim)."""
    b, n, d = x.shape
    h = attn.heads
    dh = d // h

    def split_heads(t: Tensor) -> Tensor:
        return ag.transpose(t.reshape((b, n, h, dh)), (0, 2, 1, 3))  # (b,h,n,dh)

    q = split_heads(x @ attn.w_query)
    k = split_heads(x @ attn.w_key)
    v = split_heads(x @ attn.w_value)
    scores = (q @ ag.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    weights = ag.softmax(scores, axis=-1)
    mixed = ag.transpose(weights @ v, (0, 2, 1, 3)).reshape((b, n, d))
    return mixed @ attn.w_out


def self_attention(features, params: VisualEncoderParams) -> Tensor:
    """Residual multi-head self-attention over an (N, dim) feature set."""
    x = as_tensor(features)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("self_attention expects a nonempty (N, dim) block")
    x3 = x.reshape((1,) + x.shape)
    return (x3 + _multi_head_attention(x3, params.attn))[0]


def _region_mlp(rows: Tensor, params: VisualEncoderParams) -> Tensor:
    h = rows @ params.w_in + params.b_in
    return h + ag.relu(h) @ params.w_hidden + params.b_hidden


def encode_image(regions, params: VisualEncoderParams) -> Tensor:
    """Region set (N, region_dim) -> MLP -> self-attention -> pooled (dim,)."""
    counters.bump("encode_image")
    x = as_tensor(regions)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("encode_image expects a nonempty (N, region_dim) block")
    contextualized = self_attention(_region_mlp(x, params), params)
    return pool_set(contextualized, params.pool)


def encode_image_batch(region_sets: list, params: VisualEncoderParams) -> Tensor:
    """Encode many images at once, grouping equal-size sets for the
    attention step; returns (B, dim) in input order."""
    counters.bump("encode_image", by=len(region_sets))
    sets = [as_tensor(r) for r in region_sets]
    if any(s.ndim != 2 or s.shape[0] < 1 for s in sets):
        raise ValueError("every region set must be a nonempty (N, region_dim) block")
    counts = [s.shape[0] for s in sets]
    flat = _region_mlp(concat(sets, axis=0), params)

    offsets = np.cumsum([0] + counts)
    by_count: dict[int, list[int]] = {}
    for i, c in enumerate(counts):
        by_count.setdefault(c, []).append(i)

    pooled: list[Tensor | None] = [None] * len(sets)
    for c, members in by_count.items():
        idx = np.concatenate([np.arange(offsets[i], offsets[i] + c) for i in members])
        block = gather_rows(flat, idx).reshape((len(members), c, flat.shape[1]))
        attended = block + _multi_head_attention(block, params.attn)
        for j, i in enumerate(members):
            pooled[i] = pool_set(attended[j], params.pool)
    return ag.stack(pooled, axis=0)


def augment_regions(
    regions: np.ndarray, drop_rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Keep each region with probability 1 - drop_rate; at least one survives
    (the last, in the astronomically unlikely all-dropped draw)."""
    if not (0.0 <= drop_rate < 1.0):
        raise ValueError("drop_rate must be in [0, 1)")
    regions = np.asarray(regions)
    if regions.ndim != 2 or regions.shape[0] < 1:
        raise ValueError("regions must be a nonempty (N, region_dim) array")
    keep = rng.random(regions.shape[0]) >= drop_rate
    if not keep.any():
        keep[-1] = True
    return regions[keep]


# --------------------------------------------------------------- file formats


def write_region_file(
    path: str | Path, ids: list[str], feature_sets: list[np.ndarray], manifest_path=None
) -> None:
    """Binary region-feature cache plus a sidecar id manifest (one id per line)."""
    if len(ids) != len(feature_sets):
        raise ValueError("ids and feature sets differ in length")
    dims = {np.asarray(f).shape[1] for f in feature_sets}
    if len(dims) > 1:
        raise ValueError(f"inconsistent feature dims: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    path = Path(path)
    with open(path, "wb") as f:
        f.write(REGION_MAGIC)
        f.write(struct.pack("<II", len(feature_sets), dim))
        for feats in feature_sets:
            feats = np.asarray(feats, dtype=np.float32)
            f.write(struct.pack("<I", feats.shape[0]))
            f.write(feats.tobytes(order="C"))
    manifest = Path(manifest_path) if manifest_path else Path(str(path) + ".ids")
    manifest.write_text("".join(i + "\n" for i in ids), encoding="utf-8")


def read_region_file(path: str | Path, manifest_path=None):
    """Read the binary region cache; returns (ids, list of float32 (N, dim))."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != REGION_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    count, dim = struct.unpack_from("<II", raw, 4)
    offset = 12
    sets = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        feats = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=offset)
        offset += n * dim * 4
        sets.append(feats.reshape(n, dim).copy())
    manifest = Path(manifest_path) if manifest_path else Path(str(path) + ".ids")
    ids = manifest.read_text(encoding="utf-8").splitlines()
    if len(ids) != count:
        raise ValueError(f"manifest lists {len(ids)} ids for {count} images")
    return ids, sets
