"""Caption ingestion and scene-graph compilation."""

from .augment import MASK_TOKEN, mask_tokens, subsample_graph
from .conllu import ConlluParseError, DepToken, parse_conllu
from .extract import extract_scene_graph
from .graph import SceneGraph, canonical_json, graphs_from_json, graphs_to_json

__all__ = [
    "MASK_TOKEN",
    "ConlluParseError",
    "DepToken",
    "SceneGraph",
    "canonical_json",
    "extract_scene_graph",
    "graphs_from_json",
    "graphs_to_json",
    "mask_tokens",
    "parse_conllu",
    "subsample_graph",
]
