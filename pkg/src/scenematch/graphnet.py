"""Two-stage scene-graph encoder.

Stage 1 composes each object with its attributes (bipartite attention with
a self-edge per object), producing one "entity" vector per object node.
Stage 2 folds directed relation edges into the entities (each edge feature
is the relation phrase embedding concatenated with the passive-side
entity, projected separately for the active and passive endpoint), then
runs attention over the object-object graph and pools everything into the
caption embedding.

Attention layers follow the two-step scoring
    score(i, j) = a . leaky_relu([h_i || h_j] @ W)
    h'_i = relu(sum_j alpha_ij (h_j @ W_right))
where W is (2d, d) row-convention, W_right its bottom d rows and alpha the
per-destination softmax of the scores. Nodes without neighbors fall back
to their own transformed features (equivalent to a single self-edge).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import counters
from .encoders import ConceptEncoderParams, PoolParams, encode_concept, encode_concepts, glorot, init_pool_params, pool_set
from .numcore import Tensor, as_tensor, concat, gather_rows, parameter, segment_sum
from .numcore import autograd as ag
from .sgparse import SceneGraph


@dataclass
class GatLayerParams:
    pair_weight: Tensor      # (2*dim, dim); rows [:dim] act on the destination
    score_weight: Tensor     # (dim,)

    def named_parameters(self):
        return [("pair_weight", self.pair_weight), ("score_weight", self.score_weight)]


@dataclass
class SceneEncoderParams:
    oa_layers: list[GatLayerParams]
    oo_layers: list[GatLayerParams]
    active_proj: Tensor      # (2*dim, dim), subject-side edge projection
    passive_proj: Tensor     # (2*dim, dim), object-side edge projection
    pool: PoolParams
    leaky_slope: float = 0.2

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.oa_layers):
            out += [(f"oa.{i}.{n}", t) for n, t in layer.named_parameters()]
        for i, layer in enumerate(self.oo_layers):
            out += [(f"oo.{i}.{n}", t) for n, t in layer.named_parameters()]
        out += [("active_proj", self.active_proj), ("passive_proj", self.passive_proj)]
        out += [("pool." + n, t) for n, t in self.pool.named_parameters()]
        return out


@dataclass
class CaptionEncoding:
    embedding: Tensor                          # (dim,)
    entities: list[tuple[int, Tensor]]         # (object_id, (dim,)) per object node


def init_gat_layer(
    dim: int, rng: np.random.Generator, identity_start: bool = False
) -> GatLayerParams:
    """Random glorot weights by default; identity_start instead begins as a
    uniform-attention mean of the neighbors (right block = identity, zero
    scores) so stacked layers do not scramble features before training."""
    if identity_start:
        pair = np.zeros((2 * dim, dim))
        pair[dim:, :] = np.eye(dim)
        return GatLayerParams(
            pair_weight=parameter(pair), score_weight=parameter(np.zeros(dim))
        )
    return GatLayerParams(
        pair_weight=parameter(glorot(rng, 2 * dim, dim)),
        score_weight=parameter(rng.uniform(-0.5, 0.5, size=dim)),
    )


def init_scene_params(
    dim: int,
    oa_layers: int,
    oo_layers: int,
    max_rank: int,
    rng: np.random.Generator,
    leaky_slope: float = 0.2,
    identity_start: bool = True,
) -> SceneEncoderParams:
    """identity_start (the training default) makes every attention layer an
    initial mean-of-neighbors and zeroes the edge projections, so a fresh
    caption tower reduces to pooled concept means; short desk-scale runs
    need that calm starting point."""
    if oa_layers < 1 or oo_layers < 1:
        raise ValueError("layer counts must be >= 1")

    def maybe_zero(w: np.ndarray) -> np.ndarray:
        return np.zeros_like(w) if identity_start else w

    return SceneEncoderParams(
        oa_layers=[init_gat_layer(dim, rng, identity_start) for _ in range(oa_layers)],
        oo_layers=[init_gat_layer(dim, rng, identity_start) for _ in range(oo_layers)],
        active_proj=parameter(maybe_zero(glorot(rng, 2 * dim, dim))),
        passive_proj=parameter(maybe_zero(glorot(rng, 2 * dim, dim))),
        pool=init_pool_params(max_rank, rng),
        leaky_slope=leaky_slope,
    )


# ------------------------------------------------------------------ layers


def gat_layer(
    feats,
    neighbors: list[list[int]],
    params: GatLayerParams,
    slope: float = 0.2,
    return_attention: bool = False,
):
    """One attention layer over per-node incoming neighbor lists.

    neighbors[i] lists the source nodes feeding node i; an empty list means
    the node keeps its own transformed features (self-fallback).
    """
    h = as_tensor(feats)
    n, dim = h.shape
    if len(neighbors) != n:
        raise ValueError(f"{len(neighbors)} neighbor lists for {n} nodes")
    if params.pair_weight.shape != (2 * dim, dim):
        raise ValueError(
            f"pair_weight shape {params.pair_weight.shape} inconsistent with dim {dim}"
        )

    dst_list: list[int] = []
    src_list: list[int] = []
    for i, srcs in enumerate(neighbors):
        use = srcs if srcs else [i]
        for j in use:
            if not (0 <= j < n):
                raise ValueError(f"neighbor index {j} out of range")
            dst_list.append(i)
            src_list.append(j)
    dst = np.asarray(dst_list, dtype=np.intp)
    src = np.asarray(src_list, dtype=np.intp)

    h_dst = gather_rows(h, dst)
    h_src = gather_rows(h, src)
    pair = concat([h_dst, h_src], axis=1)
    scores = ag.leaky_relu(pair @ params.pair_weight, slope) @ params.score_weight

    # per-destination softmax (constant max-shift keeps the exp well-scaled)
    shift = np.full(n, -np.inf)
    np.maximum.at(shift, dst, scores.data)
    exp_scores = ag.exp(scores - as_tensor(shift[dst]))
    denom = segment_sum(exp_scores.reshape((-1, 1)), dst, n)
    alpha = exp_scores / gather_rows(denom, dst).reshape((-1,))

    right = params.pair_weight[dim:, :]
    messages = (h_src @ right) * alpha.reshape((-1, 1))
    out = ag.relu(segment_sum(messages, dst, n))
    if return_attention:
        return out, (dst, src, alpha.data.copy())
    return out


def oa_neighbor_lists(g: SceneGraph, node_row: dict[int, int]) -> list[list[int]]:
    """Object rows receive their attributes plus a self-edge; attribute rows
    are left isolated (self-fallback keeps them defined across layers)."""
    lists: list[list[int]] = [[] for _ in range(len(node_row))]
    for o_id, _ in g.objects:
        lists[node_row[o_id]].append(node_row[o_id])
    for a_id, o_id in g.oa_edges:
        lists[node_row[o_id]].append(node_row[a_id])
    return lists


def obj_att_gat(
    g: SceneGraph,
    node_feats: dict[int, np.ndarray | Tensor],
    params: SceneEncoderParams,
) -> list[tuple[int, Tensor]]:
    """Run the object-attribute stage; returns (object_id, entity) pairs."""
    if not g.objects:
        raise ValueError("graph has no objects (fallback is handled upstream)")
    order = [i for i, _ in g.objects] + [i for i, _ in g.attributes]
    node_row = {node_id: row for row, node_id in enumerate(order)}
    h = ag.stack([as_tensor(node_feats[i]) for i in order], axis=0)
    h = _run_oa(g, h, node_row, params)
    return [(o_id, h[node_row[o_id]]) for o_id, _ in g.objects]


def _run_oa(g: SceneGraph, h: Tensor, node_row: dict[int, int], params: SceneEncoderParams) -> Tensor:
    lists = oa_neighbor_lists(g, node_row)
    for layer in params.oa_layers:
        h = gat_layer(h, lists, layer, slope=params.leaky_slope)
    return h


def edge_feature(relation_vec, passive_entity) -> Tensor:
    """Concatenate a relation embedding with the passive-side entity."""
    r = as_tensor(relation_vec)
    e = as_tensor(passive_entity)
    if r.shape != e.shape or r.ndim != 1:
        raise ValueError(f"shape mismatch: {r.shape} vs {e.shape}")
    return concat([r, e], axis=0)


def contextualize_entities(
    entities: list[tuple[int, Tensor]],
    oo_edges: list[tuple[int, str, int]],
    relation_feats: list,
    active_proj,
    passive_proj,
) -> list[Tensor]:
    """Add the mean projected edge features of each entity's active and
    passive relations; entities with no edges pass through unchanged."""
    if len(relation_feats) != len(oo_edges):
        raise ValueError("one relation feature required per edge")
    ids = [i for i, _ in entities]
    row = {node_id: r for r, node_id in enumerate(ids)}
    ent = ag.stack([as_tensor(v) for _, v in entities], axis=0)
    k = ent.shape[0]
    if not oo_edges:
        return [ent[i] for i in range(k)]

    subj = np.asarray([row[s] for s, _, _ in oo_edges], dtype=np.intp)
    obj = np.asarray([row[o] for _, _, o in oo_edges], dtype=np.intp)
    rels = ag.stack([as_tensor(r) for r in relation_feats], axis=0)
    edge_feats = concat([rels, gather_rows(ent, obj)], axis=1)   # [r_ij || e_j]

    active_counts = np.bincount(subj, minlength=k).astype(np.float64)
    passive_counts = np.bincount(obj, minlength=k).astype(np.float64)
    active_sum = segment_sum(edge_feats @ as_tensor(active_proj), subj, k)
    passive_sum = segment_sum(edge_feats @ as_tensor(passive_proj), obj, k)
    out = (
        ent
        + active_sum / as_tensor(np.maximum(active_counts, 1.0)[:, None])
        + passive_sum / as_tensor(np.maximum(passive_counts, 1.0)[:, None])
    )
    return [out[i] for i in range(k)]


def oo_neighbor_lists(object_ids: list[int], oo_edges) -> list[list[int]]:
    """Directed relation edges message both ways, plus a self-edge per node."""
    row = {node_id: r for r, node_id in enumerate(object_ids)}
    lists: list[list[int]] = [[r] for r in range(len(object_ids))]
    for s, _, o in oo_edges:
        rs, ro = row[s], row[o]
        if ro not in lists[rs]:
            lists[rs].append(ro)
        if rs not in lists[ro]:
            lists[ro].append(rs)
    return lists


def encode_caption(
    g: SceneGraph,
    concept_params: ConceptEncoderParams,
    scene_params: SceneEncoderParams,
    fallback_tokens: list[str] | None = None,
) -> CaptionEncoding:
    """Full caption pipeline: concepts -> object-attribute attention ->
    edge contextualization -> object-object attention -> pooled embedding.

    A graph with zero objects needs fallback_tokens (the whole caption);
    its encoding is then the plain phrase embedding with no entities.
    """
    counters.bump("encode_caption")
    if not g.objects:
        if fallback_tokens is None:
            raise ValueError("zero-object graph and no fallback tokens")
        return CaptionEncoding(embedding=encode_concept(fallback_tokens, concept_params), entities=[])

    object_ids = [i for i, _ in g.objects]
    phrases = (
        [p for _, p in g.objects]
        + [p for _, p in g.attributes]
        + [r for _, r, _ in g.oo_edges]
    )
    encoded = encode_concepts(phrases, concept_params)
    n_obj, n_att = len(g.objects), len(g.attributes)

    order = object_ids + [i for i, _ in g.attributes]
    node_row = {node_id: row for row, node_id in enumerate(order)}
    node_block = encoded[: n_obj + n_att]
    h = _run_oa(g, node_block, node_row, scene_params)
    entities = [(o_id, h[node_row[o_id]]) for o_id in object_ids]

    relation_feats = [encoded[n_obj + n_att + i] for i in range(len(g.oo_edges))]
    contextual = contextualize_entities(
        entities, g.oo_edges, relation_feats,
        scene_params.active_proj, scene_params.passive_proj,
    )

    feats = ag.stack(contextual, axis=0)
    lists = oo_neighbor_lists(object_ids, g.oo_edges)
    for layer in scene_params.oo_layers:
        feats = gat_layer(feats, lists, layer, slope=scene_params.leaky_slope)

    return CaptionEncoding(embedding=pool_set(feats, scene_params.pool), entities=entities)
