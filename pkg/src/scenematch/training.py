"""Optimization loop: decoupled-weight-decay Adam, the epoch sampler with
augmentation, line-delimited loss logging, and the binary checkpoint format.

Checkpoint layout (little-endian):
    magic "CORK" | u32 version | 32-byte sha256 config hash |
    repeated until EOF: u32 name_len | name utf8 | u32 rank | u32 dims... |
    float64 payload (row-major)
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .encoders import Vocab, augment_regions
from .losses import total_loss
from .model import ModelParams, encode_pairs, init_model
from .numcore import Tensor
from .sgparse import SceneGraph, mask_tokens, subsample_graph
from .utils import rng_stream

CHECKPOINT_MAGIC = b"CORK"
CHECKPOINT_VERSION = 1


# ------------------------------------------------------------------ data


@dataclass
class PairDataset:
    images: dict[str, np.ndarray]          # image_id -> (N, region_dim)
    graphs: dict[str, SceneGraph]          # caption_id -> scene graph
    pairs: list[tuple[str, str]]           # (image_id, caption_id)

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class TrainBatch:
    image_ids: list[str]
    caption_ids: list[str]
    regions: list[np.ndarray]
    graphs: list[SceneGraph]


def _mask_graph(g: SceneGraph, rate: float, rng: np.random.Generator) -> SceneGraph:
    if rate == 0.0:
        return g

    def mask_phrase(p: str) -> str:
        return " ".join(mask_tokens(p.split(), rate, rng))

    return SceneGraph(
        objects=[(i, mask_phrase(p)) for i, p in g.objects],
        attributes=[(i, mask_phrase(p)) for i, p in g.attributes],
        oa_edges=list(g.oa_edges),
        oo_edges=[(s, mask_phrase(r), o) for s, r, o in g.oo_edges],
    )


def make_batches(
    dataset: PairDataset,
    cfg: TrainConfig,
    sampler_rng: np.random.Generator,
    augment_rng: np.random.Generator,
) -> list[TrainBatch]:
    """Epoch-shuffled fixed-size batches with augmentation applied; the last
    partial batch is dropped (hardest-negative mining degrades when tiny)."""
    if len(dataset) < cfg.batch_size:
        raise ValueError(
            f"dataset of {len(dataset)} pairs is smaller than one batch ({cfg.batch_size})"
        )
    order = sampler_rng.permutation(len(dataset))
    batches = []
    for start in range(0, len(order) - cfg.batch_size + 1, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        image_ids, caption_ids, regions, graphs = [], [], [], []
        for k in idx:
            img_id, cap_id = dataset.pairs[k]
            image_ids.append(img_id)
            caption_ids.append(cap_id)
            feats = np.asarray(dataset.images[img_id], dtype=np.float64)
            regions.append(augment_regions(feats, cfg.region_drop, augment_rng))
            g = dataset.graphs[cap_id]
            if cfg.graph_drop > 0.0:
                g = subsample_graph(g, cfg.graph_drop, cfg.graph_drop, augment_rng)
            graphs.append(_mask_graph(g, cfg.token_mask, augment_rng))
        batches.append(TrainBatch(image_ids, caption_ids, regions, graphs))
    return batches


# ------------------------------------------------------------------ optimizer


class AdamW:
    """Adam with decoupled weight decay and bias-corrected moments.

    lr_multipliers maps parameter-name prefixes to per-group factors (the
    hook for down-scaling pretrained components); unlisted names use 1.0.
    """

    def __init__(
        self,
        named_params: list[tuple[str, Tensor]],
        lr: float,
        weight_decay: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.99),
        eps: float = 1e-8,
        lr_multipliers: dict[str, float] | None = None,
    ):
        self.named_params = list(named_params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.moments = {
            name: (np.zeros_like(t.data), np.zeros_like(t.data))
            for name, t in self.named_params
        }
        self._multipliers = dict(lr_multipliers or {})

    def _multiplier(self, name: str) -> float:
        for prefix, mult in self._multipliers.items():
            if name.startswith(prefix):
                return mult
        return 1.0

    def zero_grad(self) -> None:
        for _, t in self.named_params:
            t.grad = None

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        decay = 1.0 - self.lr * self.weight_decay
        for name, t in self.named_params:
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            m, v = self.moments[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            t.data *= decay
            t.data -= (self.lr * self._multiplier(name)) * (
                (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            )


# ------------------------------------------------------------------ stepping


def _first_nonfinite_block(params: ModelParams) -> str | None:
    for name, t in params.named_parameters():
        if not np.all(np.isfinite(t.data)):
            return name
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            return name + ".grad"
    return None


def train_step(
    batch: TrainBatch, params: ModelParams, opt: AdamW, cfg: TrainConfig
) -> float:
    """One forward/backward/update; returns the pre-update loss."""
    params.zero_grad()
    emb = encode_pairs(batch.regions, batch.graphs, params, cfg)
    loss = total_loss(emb)
    value = float(loss.data)
    if not math.isfinite(value):
        block = _first_nonfinite_block(params) or "loss graph"
        raise FloatingPointError(f"non-finite loss; first offending block: {block}")
    loss.backward()
    block = _first_nonfinite_block(params)
    if block is not None:
        raise FloatingPointError(f"non-finite gradient in block: {block}")
    opt.step()
    return value


def train(
    dataset: PairDataset,
    params: ModelParams,
    cfg: TrainConfig,
    log_path: str | Path | None = None,
) -> list[dict]:
    """Full training run; returns (and optionally logs) per-step records."""
    opt = AdamW(
        params.named_parameters(), lr=cfg.base_lr, weight_decay=cfg.weight_decay
    )
    history: list[dict] = []
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        step = 0
        for epoch in range(1, cfg.epochs + 1):
            opt.lr = cfg.lr_at(epoch)
            batches = make_batches(
                dataset,
                cfg,
                rng_stream(cfg.seed, f"sampler.{epoch}"),
                rng_stream(cfg.seed, f"augment.{epoch}"),
            )
            for batch in batches:
                loss = train_step(batch, params, opt, cfg)
                step += 1
                record = {"epoch": epoch, "step": step, "loss": loss, "lr": opt.lr}
                history.append(record)
                if log_file:
                    log_file.write(json.dumps(record) + "\n")
    finally:
        if log_file:
            log_file.close()
    return history


# ------------------------------------------------------------------ checkpoints


def save_checkpoint(params: ModelParams, cfg: TrainConfig, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(cfg.hash_bytes())
        for name, t in params.named_parameters():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", t.data.ndim))
            f.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            f.write(t.data.astype("<f8").tobytes(order="C"))


def read_checkpoint_tensors(path: str | Path) -> tuple[bytes, dict[str, np.ndarray]]:
    """Raw view of a checkpoint: (config hash, name -> float64 array)."""
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    stored_hash = raw[8:40]
    offset = 40
    tensors: dict[str, np.ndarray] = {}
    while offset < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        tensors[name] = data.reshape(dims).copy()
    return stored_hash, tensors


def load_checkpoint(path: str | Path, cfg: TrainConfig, vocab: Vocab) -> ModelParams:
    """Rebuild ModelParams from a checkpoint; the config must hash to the
    stored value and every tensor must match its expected shape."""
    stored_hash, tensors = read_checkpoint_tensors(path)
    if stored_hash != cfg.hash_bytes():
        raise ValueError(f"{path}: config hash mismatch")
    params = init_model(cfg, vocab, rng_stream(cfg.seed, "init"))
    expected = dict(params.named_parameters())
    if set(expected) != set(tensors):
        missing = sorted(set(expected) ^ set(tensors))
        raise ValueError(f"{path}: tensor name mismatch: {missing}")
    for name, t in expected.items():
        if tensors[name].shape != t.data.shape:
            raise ValueError(
                f"{path}: {name} has shape {tensors[name].shape}, expected {t.data.shape}"
            )
        t.data = tensors[name]
    return params
