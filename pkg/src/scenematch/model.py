"""Both towers' parameters in one named container, plus the batch forward."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .encoders import (
    ConceptEncoderParams,
    VisualEncoderParams,
    Vocab,
    encode_image_batch,
    init_concept_params,
    init_visual_params,
)
from .graphnet import SceneEncoderParams, encode_caption, init_scene_params
from .losses import BatchEmbeddings
from .numcore import Tensor, stack
from .sgparse import SceneGraph


@dataclass
class ModelParams:
    concept: ConceptEncoderParams
    visual: VisualEncoderParams
    scene: SceneEncoderParams

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [("concept." + n, t) for n, t in self.concept.named_parameters()]
        out += [("visual." + n, t) for n, t in self.visual.named_parameters()]
        out += [("scene." + n, t) for n, t in self.scene.named_parameters()]
        return out

    def zero_grad(self) -> None:
        for _, t in self.named_parameters():
            t.grad = None


def init_model(
    cfg: TrainConfig,
    vocab: Vocab,
    rng: np.random.Generator,
    identity_start: bool = True,
) -> ModelParams:
    return ModelParams(
        concept=init_concept_params(vocab, cfg.word_dim, cfg.dim, rng),
        visual=init_visual_params(
            cfg.region_dim, cfg.dim, cfg.heads, cfg.max_rank, rng,
            identity_start=identity_start,
        ),
        scene=init_scene_params(
            cfg.dim, cfg.oa_layers, cfg.oo_layers, cfg.max_rank, rng,
            identity_start=identity_start,
        ),
    )


def encode_pairs(
    region_sets: list[np.ndarray],
    graphs: list[SceneGraph],
    params: ModelParams,
    cfg: TrainConfig,
) -> BatchEmbeddings:
    """Forward both towers over aligned image/caption lists."""
    if len(region_sets) != len(graphs):
        raise ValueError("one region set per caption graph required")
    images = encode_image_batch(region_sets, params.visual)
    captions = []
    entities = []
    for g in graphs:
        enc = encode_caption(g, params.concept, params.scene)
        captions.append(enc.embedding)
        entities.append([e for _, e in enc.entities])
    return BatchEmbeddings(
        images=images,
        captions=stack(captions, axis=0),
        entities=entities,
        margin=cfg.margin,
        temperature=cfg.temperature,
        contrastive_weight=cfg.contrastive_weight,
        specificity_weight=cfg.specificity_weight,
    )
