"""Training-time graph and token augmentation.

Both functions take an explicit numpy Generator; draw order is fixed
(attributes, then objects, then relation edges) so runs are reproducible.
"""

from __future__ import annotations

import numpy as np

from .graph import SceneGraph

MASK_TOKEN = "<mask>"


def subsample_graph(
    g: SceneGraph, node_drop: float, edge_drop: float, rng: np.random.Generator
) -> SceneGraph:
    """Independently drop attribute nodes / relation edges; objects keep a floor.

    An object is only dropped when at least two objects would remain, so the
    output always keeps min(len(objects), 2) objects. Dangling oa_edges are
    removed together with their attribute node.
    """
    if not (0.0 <= node_drop < 1.0 and 0.0 <= edge_drop < 1.0):
        raise ValueError("drop rates must be in [0, 1)")
    if not g.objects:
        raise ValueError("graph must have at least one object")

    attr_kept = {a_id: rng.random() >= node_drop for a_id, _ in g.attributes}

    remaining = len(g.objects)
    obj_kept: dict[int, bool] = {}
    for o_id, _ in g.objects:
        drop = rng.random() < node_drop
        if drop and remaining - 1 >= 2:
            obj_kept[o_id] = False
            remaining -= 1
        else:
            obj_kept[o_id] = True

    edge_kept = [rng.random() >= edge_drop for _ in g.oo_edges]

    objects = [(i, p) for i, p in g.objects if obj_kept[i]]
    oa_edges = [(a, o) for a, o in g.oa_edges if attr_kept[a] and obj_kept[o]]
    live_attrs = {a for a, _ in oa_edges}
    attributes = [(i, p) for i, p in g.attributes if i in live_attrs]
    oo_edges = [
        e for e, keep in zip(g.oo_edges, edge_kept) if keep and obj_kept[e[0]] and obj_kept[e[2]]
    ]

    out = SceneGraph(objects=objects, attributes=attributes, oa_edges=oa_edges, oo_edges=oo_edges)
    out.validate()
    return out


def mask_tokens(
    phrase: list[str], rate: float, rng: np.random.Generator, mask_token: str = MASK_TOKEN
) -> list[str]:
    """Replace each token by the mask with probability rate; never all of them.

    When every token draws a mask, the last one is kept (the "last survivor").
    """
    if not phrase:
        raise ValueError("cannot mask an empty phrase")
    if not (0.0 <= rate < 1.0):
        raise ValueError("mask rate must be in [0, 1)")
    masked = rng.random(len(phrase)) < rate
    if masked.all():
        masked[-1] = False
    return [mask_token if m else tok for tok, m in zip(phrase, masked)]
