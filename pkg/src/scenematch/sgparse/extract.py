"""Rule-based caption -> scene graph compilation over a dependency parse.

Rule inventory (fixed; phrases are lemmatized and lower-cased):

  R1 object nouns       NOUN/PROPN tokens that are not themselves a
                        compound/flat modifier; the phrase is the head noun
                        expanded with its compound/flat subtree in token
                        order ("construction worker", "ice cream").
  R2 attributes
     R2a adjectival     amod children of an object noun.
     R2b participial    acl verb on a noun with no direct object and no
                        prepositional object ("a worker sitting").
     R2c predicative    adjective with a copula child and a noun subject
                        ("the flag is red").
     R2d intransitive   verb with a noun subject but no object of any kind
                        ("a dog sleeps") becomes an attribute of the subject.
  R3 relations (directed subject -> object)
     R3a verb + obj     (subject, verb[+particle], direct object); for an
                        acl verb the modified noun is the subject
                        ("a man holding a cup").
     R3b verb + obl     (subject, verb + preposition, oblique noun), e.g.
                        "jump over", "sit on".
     R3c bare prep      nmod between two nouns via a case marker:
                        (head noun, preposition, dependent noun),
                        e.g. "flag above building".

Conjoined nouns distribute post-head modifiers and relation roles: a
participial/predicative/intransitive attribute of the first conjunct
attaches to every conjunct (one node, several oa_edges), and relation
endpoints expand across conjuncts. Prenominal amod adjectives stay with
their own noun ("a red bus and a yellow taxi"). Sentences with no
extractable nouns yield a graph with zero objects; the caller decides the
fallback.
"""

from __future__ import annotations

from .conllu import DepToken
from .graph import SceneGraph

_NOUN_POS = {"NOUN", "PROPN"}
_COMPOUND_RELS = {"compound", "flat"}


def _children(sentence: list[DepToken]) -> dict[int, list[DepToken]]:
    by_head: dict[int, list[DepToken]] = {}
    for tok in sentence:
        by_head.setdefault(tok.head, []).append(tok)
    for kids in by_head.values():
        kids.sort(key=lambda t: t.index)
    return by_head


def _is_object_head(tok: DepToken) -> bool:
    return tok.upos in _NOUN_POS and tok.deprel not in _COMPOUND_RELS


def _compound_span(tok: DepToken, kids: dict[int, list[DepToken]]) -> list[DepToken]:
    span = [tok]
    frontier = [tok]
    while frontier:
        cur = frontier.pop()
        for c in kids.get(cur.index, []):
            if c.deprel in _COMPOUND_RELS:
                span.append(c)
                frontier.append(c)
    span.sort(key=lambda t: t.index)
    return span


def _lemma(tok: DepToken) -> str:
    return tok.lemma.lower()


def _phrase(tokens: list[DepToken]) -> str:
    return " ".join(_lemma(t) for t in tokens)


def _particles(verb: DepToken, kids: dict[int, list[DepToken]]) -> list[DepToken]:
    return [c for c in kids.get(verb.index, []) if c.deprel == "compound:prt"]


def _verb_phrase(verb: DepToken, kids: dict[int, list[DepToken]]) -> str:
    return _phrase([verb] + _particles(verb, kids))


def _case_phrase(case_tok: DepToken, kids: dict[int, list[DepToken]]) -> str:
    fixed = [c for c in kids.get(case_tok.index, []) if c.deprel == "fixed"]
    return _phrase([case_tok] + fixed)


def extract_scene_graph(sentence: list[DepToken]) -> SceneGraph:
    """Compile one dependency-parsed sentence into a SceneGraph."""
    kids = _children(sentence)

    object_heads = [t for t in sentence if _is_object_head(t)]
    obj_id: dict[int, int] = {t.index: i for i, t in enumerate(object_heads)}
    objects = [(obj_id[t.index], _phrase(_compound_span(t, kids))) for t in object_heads]

    def expand_conj(tok: DepToken) -> list[DepToken]:
        out = [tok]
        for c in kids.get(tok.index, []):
            if c.deprel == "conj" and _is_object_head(c):
                out.append(c)
        return out

    def targets_of(tok: DepToken) -> list[int]:
        return [obj_id[t.index] for t in expand_conj(tok) if t.index in obj_id]

    # attribute records keyed by the modifier token so shared modifiers make
    # one node with several oa_edges; insertion order = token order.
    attr_records: dict[int, tuple[str, list[int]]] = {}

    def add_attribute(
        source: DepToken, phrase: str, owner: DepToken, distribute: bool = True
    ) -> None:
        owners = targets_of(owner) if distribute else (
            [obj_id[owner.index]] if owner.index in obj_id else []
        )
        if not owners:
            return
        if source.index not in attr_records:
            attr_records[source.index] = (phrase, [])
        for oid in owners:
            if oid not in attr_records[source.index][1]:
                attr_records[source.index][1].append(oid)

    oo_edges: list[tuple[int, str, int]] = []

    def add_relation(subj: DepToken, rel: str, obj: DepToken) -> None:
        for s in targets_of(subj):
            for o in targets_of(obj):
                if s != o and (s, rel, o) not in oo_edges:
                    oo_edges.append((s, rel, o))

    def subject_of_verb(verb: DepToken) -> DepToken | None:
        for c in kids.get(verb.index, []):
            if c.deprel in ("nsubj",):
                return c
        if verb.deprel in ("acl", "acl:relcl") and verb.head > 0:
            return sentence[verb.head - 1]
        return None

    for tok in sorted(sentence, key=lambda t: t.index):
        if tok.upos == "ADJ" and tok.deprel == "amod":
            head = sentence[tok.head - 1] if tok.head > 0 else None
            if head is not None and head.index in obj_id:
                add_attribute(tok, _lemma(tok), head, distribute=False)  # R2a

        elif tok.upos == "ADJ":
            has_cop = any(c.deprel == "cop" for c in kids.get(tok.index, []))
            subj = next((c for c in kids.get(tok.index, []) if c.deprel == "nsubj"), None)
            if has_cop and subj is not None and subj.index in obj_id:
                add_attribute(tok, _lemma(tok), subj)  # R2c

        elif tok.upos == "VERB":
            subj = subject_of_verb(tok)
            if subj is None or subj.index not in obj_id:
                continue
            direct_objs = [
                c for c in kids.get(tok.index, []) if c.deprel == "obj" and c.index in obj_id
            ]
            obliques = []
            for c in kids.get(tok.index, []):
                if c.deprel == "obl" and c.index in obj_id:
                    case = next((k for k in kids.get(c.index, []) if k.deprel == "case"), None)
                    if case is not None:
                        obliques.append((c, case))
            if direct_objs or obliques:
                for o in direct_objs:  # R3a
                    add_relation(subj, _verb_phrase(tok, kids), o)
                for o, case in obliques:  # R3b
                    add_relation(subj, _verb_phrase(tok, kids) + " " + _case_phrase(case, kids), o)
            else:
                add_attribute(tok, _verb_phrase(tok, kids), subj)  # R2b / R2d

        elif tok.deprel == "nmod" and tok.index in obj_id:
            head = sentence[tok.head - 1] if tok.head > 0 else None
            case = next((k for k in kids.get(tok.index, []) if k.deprel == "case"), None)
            if head is not None and head.index in obj_id and case is not None:
                add_relation(head, _case_phrase(case, kids), tok)  # R3c

    attributes: list[tuple[int, str]] = []
    oa_edges: list[tuple[int, int]] = []
    next_id = len(objects)
    for _, (phrase, owners) in sorted(attr_records.items()):
        attributes.append((next_id, phrase))
        for oid in owners:
            oa_edges.append((next_id, oid))
        next_id += 1

    g = SceneGraph(objects=objects, attributes=attributes, oa_edges=oa_edges, oo_edges=oo_edges)
    g.validate()
    return g
