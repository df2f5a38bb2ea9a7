"""Scene graph value type and its JSON wire format.

The JSON schema (the contract every downstream consumer reads):

    {"objects":    [{"id": int, "phrase": str}, ...],
     "attributes": [{"id": int, "phrase": str}, ...],
     "oa_edges":   [[attribute_id, object_id], ...],
     "oo_edges":   [[subject_id, relation_phrase, object_id], ...]}

Ids are non-negative integers, unique across objects and attributes.
Canonical form sorts objects/attributes by id and edges lexicographically,
which makes serialized golden files byte-comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class SceneGraph:
    objects: list[tuple[int, str]] = field(default_factory=list)
    attributes: list[tuple[int, str]] = field(default_factory=list)
    oa_edges: list[tuple[int, int]] = field(default_factory=list)
    oo_edges: list[tuple[int, str, int]] = field(default_factory=list)

    def object_ids(self) -> list[int]:
        return [i for i, _ in self.objects]

    def attribute_ids(self) -> list[int]:
        return [i for i, _ in self.attributes]

    def validate(self) -> None:
        """Raise ValueError on any structural invariant violation."""
        obj_ids = self.object_ids()
        att_ids = self.attribute_ids()
        all_ids = obj_ids + att_ids
        if len(set(all_ids)) != len(all_ids):
            raise ValueError("node ids are not unique")
        if any(i < 0 for i in all_ids):
            raise ValueError("negative node id")
        obj_set, att_set = set(obj_ids), set(att_ids)
        for a, o in self.oa_edges:
            if a not in att_set:
                raise ValueError(f"oa_edge attribute {a} is not an attribute node")
            if o not in obj_set:
                raise ValueError(f"oa_edge object {o} is not an object node")
        attrs_with_edge = {a for a, _ in self.oa_edges}
        for a in att_ids:
            if a not in attrs_with_edge:
                raise ValueError(f"attribute {a} has no oa_edge")
        for s, _, o in self.oo_edges:
            if s not in obj_set or o not in obj_set:
                raise ValueError(f"oo_edge ({s},{o}) endpoint is not an object node")
            if s == o:
                raise ValueError(f"self-loop oo_edge on {s}")
        for _, phrase in self.objects + self.attributes:
            if not phrase:
                raise ValueError("empty phrase")

    def canonical(self) -> "SceneGraph":
        return SceneGraph(
            objects=sorted(self.objects),
            attributes=sorted(self.attributes),
            oa_edges=sorted(self.oa_edges),
            oo_edges=sorted(self.oo_edges),
        )

    def to_dict(self) -> dict:
        g = self.canonical()
        return {
            "objects": [{"id": i, "phrase": p} for i, p in g.objects],
            "attributes": [{"id": i, "phrase": p} for i, p in g.attributes],
            "oa_edges": [[a, o] for a, o in g.oa_edges],
            "oo_edges": [[s, r, o] for s, r, o in g.oo_edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGraph":
        g = cls(
            objects=[(int(o["id"]), str(o["phrase"])) for o in d["objects"]],
            attributes=[(int(a["id"]), str(a["phrase"])) for a in d["attributes"]],
            oa_edges=[(int(a), int(o)) for a, o in d["oa_edges"]],
            oo_edges=[(int(s), str(r), int(o)) for s, r, o in d["oo_edges"]],
        )
        g.validate()
        return g

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def graphs_to_json(graphs: list[SceneGraph]) -> str:
    """Order-preserving JSON array of canonical graph objects."""
    return canonical_json([g.to_dict() for g in graphs])


def graphs_from_json(text: str) -> list[SceneGraph]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("expected a JSON array of scene graphs")
    return [SceneGraph.from_dict(d) for d in data]
