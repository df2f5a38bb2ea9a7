"""Training objectives over a batch of image / caption / entity embeddings.

All three losses run on cosine similarities, so they are invariant to
positive rescaling of any embedding. Everything returns a scalar Tensor;
gradients flow through the tape.

  triplet_hardest   two-directional hinge against the hardest in-batch
                    negative (ties break toward the lowest index)
  contrastive       temperature-scaled alignment of each image with its
                    caption and entity units against the units/images of
                    other batch indices
  specificity       hinge pushing the full caption above any single entity
                    for the matching image (raw cosine, no temperature)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numcore import Tensor, as_tensor, concat, l2_normalize_rows
from .numcore import autograd as ag

DEFAULT_MARGIN = 0.4
DEFAULT_TEMPERATURE = 0.01
DEFAULT_CONTRASTIVE_WEIGHT = 0.25
DEFAULT_SPECIFICITY_WEIGHT = 3.0


@dataclass
class BatchEmbeddings:
    images: Tensor                       # (N, D)
    captions: Tensor                     # (N, D)
    entities: list[list[Tensor]] = field(default_factory=list)  # per caption
    margin: float = DEFAULT_MARGIN
    temperature: float = DEFAULT_TEMPERATURE
    contrastive_weight: float = DEFAULT_CONTRASTIVE_WEIGHT
    specificity_weight: float = DEFAULT_SPECIFICITY_WEIGHT

    def __post_init__(self):
        self.images = as_tensor(self.images)
        self.captions = as_tensor(self.captions)
        if self.images.shape != self.captions.shape or self.images.ndim != 2:
            raise ValueError("images and captions must both be (N, D)")
        if not self.entities:
            self.entities = [[] for _ in range(self.images.shape[0])]
        if len(self.entities) != self.images.shape[0]:
            raise ValueError("one entity list per caption required")
        self.entities = [[as_tensor(e) for e in ents] for ents in self.entities]
        if self.margin <= 0.0:
            raise ValueError("margin must be positive")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


def _cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    return l2_normalize_rows(a) @ ag.transpose(l2_normalize_rows(b))


def _units(b: BatchEmbeddings) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Stack caption + entity vectors into one (M, D) block.

    Returns (units, owner, is_entity): owner[u] is the batch index the unit
    belongs to, is_entity flags entity rows (the caption unit itself is not).
    """
    rows: list[Tensor] = []
    owner: list[int] = []
    is_entity: list[bool] = []
    n = b.captions.shape[0]
    for i in range(n):
        rows.append(b.captions[i])
        owner.append(i)
        is_entity.append(False)
        for e in b.entities[i]:
            rows.append(e)
            owner.append(i)
            is_entity.append(True)
    return ag.stack(rows, axis=0), np.asarray(owner), np.asarray(is_entity)


def triplet_hardest(b: BatchEmbeddings) -> Tensor:
    """Hinge loss against the hardest negative caption and image per pair."""
    n = b.images.shape[0]
    if n < 2:
        raise ValueError("hardest-negative mining needs a batch of at least 2")
    sims = _cosine_matrix(b.images, b.captions)
    diag_mask = np.eye(n)
    pos = (sims * as_tensor(diag_mask)).sum(axis=1)
    off = sims + as_tensor(-1e9 * diag_mask)     # exclude the positive pair
    hardest_caption = off.max(axis=1)            # per image
    hardest_image = off.max(axis=0)              # per caption
    loss_i = ag.relu(hardest_caption - pos + b.margin).sum()
    loss_t = ag.relu(hardest_image - pos + b.margin).sum()
    return loss_i + loss_t


def contrastive(b: BatchEmbeddings) -> Tensor:
    """Two-directional temperature-scaled alignment of images with their
    semantic units (caption + entities); negatives are the units / images
    belonging to other batch indices."""
    units, owner, _ = _units(b)
    n = b.images.shape[0]
    sims = _cosine_matrix(b.images, units) * (1.0 / b.temperature)   # (N, M)
    exp_sims = ag.exp(sims)
    own = (owner[None, :] == np.arange(n)[:, None]).astype(np.float64)  # (N, M)

    # unit-side denominator: the unit itself plus every foreign unit
    foreign_mass = (exp_sims * as_tensor(1.0 - own)).sum(axis=1, keepdims=True)
    unit_terms = sims - ag.log(exp_sims + foreign_mass)

    # image-side denominator: the matching image plus every other image
    image_mass = exp_sims.sum(axis=0, keepdims=True)
    image_terms = sims - ag.log(image_mass)

    matched = as_tensor(own)
    return -((unit_terms + image_terms) * matched).sum()


def specificity(b: BatchEmbeddings) -> Tensor:
    """Hinge enforcing sim(image, caption) >= sim(image, entity) + margin."""
    units, owner, is_entity = _units(b)
    n = b.images.shape[0]
    ent_mask = (owner[None, :] == np.arange(n)[:, None]) & is_entity[None, :]
    if not ent_mask.any():
        return as_tensor(0.0)
    sims = _cosine_matrix(b.images, units)                     # raw cosine
    caption_sims = _cosine_matrix(b.images, b.captions)
    pos = (caption_sims * as_tensor(np.eye(n))).sum(axis=1, keepdims=True)
    hinges = ag.relu(sims - pos + b.margin)
    return (hinges * as_tensor(ent_mask.astype(np.float64))).sum()


def total_loss(b: BatchEmbeddings) -> Tensor:
    """Weighted sum: triplet + contrastive_weight * contrastive
    + specificity_weight * specificity."""
    return (
        triplet_hardest(b)
        + b.contrastive_weight * contrastive(b)
        + b.specificity_weight * specificity(b)
    )
