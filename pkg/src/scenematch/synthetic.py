"""Prototype-based synthetic image/caption pairs for end-to-end runs.

Each pair draws a handful of concept prototypes. The image gets one noisy
region per prototype; regions are modulated by the attribute and relation
choices (a relation leaves a trace of the passive prototype on the active
region), so the caption's graph structure genuinely describes the image.
The caption is a scene graph naming those prototypes, with the sampled
attributes and relations.
"""

from __future__ import annotations

import numpy as np

from .encoders import Vocab
from .sgparse import SceneGraph
from .training import PairDataset
from .utils import rng_stream


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def make_synthetic_data(
    n_train: int = 200,
    n_test: int = 50,
    n_prototypes: int = 20,
    region_dim: int = 2048,
    n_attributes: int = 8,
    n_relations: int = 4,
    regions_per_image: tuple[int, int] = (4, 8),
    attr_prob: float = 0.6,
    attr_scale: float = 0.25,
    rel_scale: float = 0.25,
    noise: float = 0.2,
    seed: int = 0,
) -> tuple[PairDataset, PairDataset, Vocab]:
    """Build (train, test, vocab); train/test share prototypes, not pairs."""
    world = rng_stream(seed, "synthetic.world")
    prototypes = _unit_rows(world, n_prototypes, region_dim)
    attr_dirs = _unit_rows(world, n_attributes, region_dim)
    rel_dirs = _unit_rows(world, n_relations, region_dim)

    vocab = Vocab.build(
        [f"p{i:02d}" for i in range(n_prototypes)]
        + [f"a{j}" for j in range(n_attributes)]
        + [f"r{j}" for j in range(n_relations)]
    )

    def build_split(name: str, count: int) -> PairDataset:
        rng = rng_stream(seed, f"synthetic.{name}")
        images: dict[str, np.ndarray] = {}
        graphs: dict[str, SceneGraph] = {}
        pairs: list[tuple[str, str]] = []
        lo, hi = regions_per_image
        for k in range(count):
            n_obj = int(rng.integers(lo, hi + 1))
            chosen = rng.choice(n_prototypes, size=n_obj, replace=False)

            objects = [(i, f"p{p:02d}") for i, p in enumerate(chosen)]
            attributes: list[tuple[int, str]] = []
            oa_edges: list[tuple[int, int]] = []
            attr_of: dict[int, int] = {}
            next_id = n_obj
            for i in range(n_obj):
                if rng.random() < attr_prob:
                    j = int(rng.integers(n_attributes))
                    attributes.append((next_id, f"a{j}"))
                    oa_edges.append((next_id, i))
                    attr_of[i] = j
                    next_id += 1

            oo_edges: list[tuple[int, str, int]] = []
            rel_of: list[tuple[int, int, int]] = []
            for _ in range(int(rng.integers(1, 3))):
                s, o = rng.choice(n_obj, size=2, replace=False)
                j = int(rng.integers(n_relations))
                edge = (int(s), f"r{j}", int(o))
                if edge not in oo_edges:
                    oo_edges.append(edge)
                    rel_of.append((int(s), j, int(o)))

            regions = prototypes[chosen].copy()
            for i, j in attr_of.items():
                regions[i] += attr_scale * attr_dirs[j]
            for s, j, o in rel_of:
                regions[s] += rel_scale * 0.5 * (rel_dirs[j] + prototypes[chosen[o]])
            # noise scale is relative to the unit prototype norm
            regions += (noise / np.sqrt(region_dim)) * rng.standard_normal(regions.shape)

            img_id, cap_id = f"{name}_img{k}", f"{name}_cap{k}"
            images[img_id] = regions
            graph = SceneGraph(objects, attributes, oa_edges, oo_edges)
            graph.validate()
            graphs[cap_id] = graph
            pairs.append((img_id, cap_id))
        return PairDataset(images=images, graphs=graphs, pairs=pairs)

    return build_split("train", n_train), build_split("test", n_test), vocab
