"""SocAoG and parse graph data model.

A parse graph stores one value per Or-node slot: an attribute value for every
(human entity, subtype) pair and a relation label for every ordered pair of
distinct entities.  Values are kept as integer indices into the schemas;
``-1`` marks an unset attribute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .schema import AttributeSchema, RelationSchema, SchemaError

CLS = "[CLS]"
SEP = "[SEP]"
UNSET = -1


@dataclass(frozen=True)
class Entity:
    id: str
    display_name: str = ""
    is_human: bool = True

    def __post_init__(self):
        if not self.id:
            raise ValueError("entity id must be non-empty")
        if not self.display_name:
            object.__setattr__(self, "display_name", self.id)


class Slot(NamedTuple):
    kind: str  # "attr" or "rel"
    a: int  # entity index (attr) or source index (rel)
    b: int  # subtype index (attr) or target index (rel)

    def key(self, aog: "SocAoG") -> str:
        if self.kind == "attr":
            return f"attr:{aog.entities[self.a].id}:{aog.attribute_schema.subtypes[self.b]}"
        return f"rel:{aog.entities[self.a].id}:{aog.entities[self.b].id}"


@dataclass(frozen=True, eq=False)
class SocAoG:
    """The society grammar: entities grouped under communities plus the schemas."""

    entities: tuple[Entity, ...]
    relation_schema: RelationSchema
    attribute_schema: AttributeSchema
    communities: tuple[tuple[str, ...], ...] = ()
    root: str = "S"

    def __post_init__(self):
        entities = tuple(self.entities)
        ids = [e.id for e in entities]
        if len(set(ids)) != len(ids):
            raise ValueError("entity identifiers must be unique")
        object.__setattr__(self, "entities", entities)
        communities = tuple(tuple(c) for c in self.communities) or (tuple(ids),)
        members = [m for c in communities for m in c]
        if sorted(members) != sorted(ids):
            raise ValueError("every entity must belong to exactly one community")
        object.__setattr__(self, "communities", communities)
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(ids)})
        human = np.array([e.is_human for e in entities], dtype=bool)
        object.__setattr__(self, "human", human)
        M = len(self.attribute_schema)
        attr_slots = [Slot("attr", i, m) for i in range(len(entities)) if human[i] for m in range(M)]
        rel_slots = [
            Slot("rel", i, j) for i in range(len(entities)) for j in range(len(entities)) if i != j
        ]
        object.__setattr__(self, "attr_slots", tuple(attr_slots))
        object.__setattr__(self, "rel_slots", tuple(rel_slots))
        K = len(entities)
        assert len(attr_slots) == int(human.sum()) * M
        assert len(rel_slots) == K * (K - 1)

    @property
    def K(self) -> int:
        return len(self.entities)

    @property
    def M(self) -> int:
        return len(self.attribute_schema)

    @property
    def slots(self) -> tuple[Slot, ...]:
        return self.attr_slots + self.rel_slots

    def index(self, entity_id: str) -> int:
        try:
            return self._index[entity_id]
        except KeyError:
            raise KeyError(f"unknown entity {entity_id!r}") from None

    def slot_arity(self, slot: Slot) -> int:
        if slot.kind == "attr":
            return self.attribute_schema.arities[slot.b]
        return len(self.relation_schema)

    def support_size(self) -> int:
        n = 1
        for a in self.attribute_schema.arities:
            n *= a ** int(self.human.sum())
        return n * len(self.relation_schema) ** (self.K * (self.K - 1))

    def same_as(self, other: "SocAoG") -> bool:
        return self is other or (
            [e for e in self.entities] == [e for e in other.entities]
            and self.relation_schema == other.relation_schema
            and self.attribute_schema == other.attribute_schema
        )


class ParseGraph:
    """One instantiation of a :class:`SocAoG`.

    ``attrs`` is a ``(K, M)`` integer array (rows of non-human entities are
    ignored and kept at ``-1``); ``rels`` is ``(K, K)`` with ``-1`` on the
    diagonal.
    """

    __slots__ = ("aog", "attrs", "rels")

    def __init__(self, aog: SocAoG, attrs: np.ndarray, rels: np.ndarray):
        self.aog = aog
        self.attrs = attrs
        self.rels = rels

    # -- value semantics -------------------------------------------------
    def copy(self) -> "ParseGraph":
        return ParseGraph(self.aog, self.attrs.copy(), self.rels.copy())

    def __eq__(self, other):
        if not isinstance(other, ParseGraph):
            return NotImplemented
        return (
            self.aog.same_as(other.aog)
            and np.array_equal(self.attrs, other.attrs)
            and np.array_equal(self.rels, other.rels)
        )

    def __hash__(self):
        return hash((self.attrs.tobytes(), self.rels.tobytes()))

    def __repr__(self):
        return f"ParseGraph({self.to_dict()!r})"

    # -- slot access -----------------------------------------------------
    def get(self, slot: Slot) -> int:
        if slot.kind == "attr":
            return int(self.attrs[slot.a, slot.b])
        return int(self.rels[slot.a, slot.b])

    def set(self, slot: Slot, value: int) -> None:
        if slot.kind == "attr":
            self.attrs[slot.a, slot.b] = value
        else:
            self.rels[slot.a, slot.b] = value

    def slot_vector(self) -> np.ndarray:
        """Values of all slots in ``aog.slots`` order."""
        aog = self.aog
        out = np.empty(len(aog.attr_slots) + len(aog.rel_slots), dtype=np.int64)
        for n, s in enumerate(aog.slots):
            out[n] = self.get(s)
        return out

    def attribute(self, entity_id: str, subtype: str) -> str:
        aog = self.aog
        m = aog.attribute_schema.subtype_index(subtype)
        i = aog.index(entity_id)
        if not aog.human[i]:
            raise KeyError(f"entity {entity_id!r} carries no attributes")
        return aog.attribute_schema.value_name(subtype, int(self.attrs[i, m]))

    def relation(self, src: str, dst: str) -> str:
        i, j = self.aog.index(src), self.aog.index(dst)
        if i == j:
            raise KeyError("no relation slot from an entity to itself")
        return self.aog.relation_schema.labels[int(self.rels[i, j])]

    def set_attribute(self, entity_id: str, subtype: str, value: str) -> None:
        aog = self.aog
        i = aog.index(entity_id)
        if not aog.human[i]:
            raise KeyError(f"entity {entity_id!r} carries no attributes")
        m = aog.attribute_schema.subtype_index(subtype)
        self.attrs[i, m] = aog.attribute_schema.value_index(subtype, value)

    def set_relation(self, src: str, dst: str, label: str) -> None:
        i, j = self.aog.index(src), self.aog.index(dst)
        if i == j:
            raise KeyError("no relation slot from an entity to itself")
        self.rels[i, j] = self.aog.relation_schema.index(label)

    def validate(self) -> None:
        aog = self.aog
        K, M = aog.K, aog.M
        if self.attrs.shape != (K, M) or self.rels.shape != (K, K):
            raise SchemaError("parse graph arrays do not match the SocAoG")
        for i, m in ((s.a, s.b) for s in aog.attr_slots):
            v = self.attrs[i, m]
            if not (v == UNSET or 0 <= v < aog.attribute_schema.arities[m]):
                raise SchemaError(f"attribute slot ({i}, {m}) holds invalid value {v}")
        R = len(aog.relation_schema)
        for s in aog.rel_slots:
            if not 0 <= self.rels[s.a, s.b] < R:
                raise SchemaError(f"relation slot ({s.a}, {s.b}) holds invalid label")

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        aog = self.aog
        attributes = {}
        for i, e in enumerate(aog.entities):
            if aog.human[i]:
                attributes[e.id] = {
                    s: aog.attribute_schema.value_name(s, int(self.attrs[i, m]))
                    for m, s in enumerate(aog.attribute_schema.subtypes)
                }
        relations = [
            [aog.entities[s.a].id, aog.entities[s.b].id, aog.relation_schema.labels[self.rels[s.a, s.b]]]
            for s in aog.rel_slots
        ]
        return {"attributes": attributes, "relations": relations}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, aog: SocAoG, doc: dict) -> "ParseGraph":
        pg = new_parse_graph(aog)
        for entity, values in doc.get("attributes", {}).items():
            for subtype, value in values.items():
                pg.set_attribute(entity, subtype, value)
        for src, dst, label in doc.get("relations", []):
            pg.set_relation(src, dst, label)
        return pg


def new_parse_graph(aog: SocAoG) -> ParseGraph:
    """All attributes unknown, every relation slot holding the unanswerable label."""
    attrs = np.full((aog.K, aog.M), UNSET, dtype=np.int64)
    rels = np.full((aog.K, aog.K), aog.relation_schema.unanswerable_index, dtype=np.int64)
    np.fill_diagonal(rels, -1)
    return ParseGraph(aog, attrs, rels)


def is_unset(pg: ParseGraph, slot: Slot) -> bool:
    """True for slots that render as ``[CLS]``: unknown attributes, unanswerable relations."""
    if slot.kind == "attr":
        return pg.attrs[slot.a, slot.b] == UNSET
    return pg.rels[slot.a, slot.b] == pg.aog.relation_schema.unanswerable_index


def flatten(pg: ParseGraph, dialogue_prefix: Sequence[str] = ()) -> list[str]:
    """``[CLS] D [SEP]`` followed by relation triples and entity attribute blocks."""
    aog = pg.aog
    rs, ats = aog.relation_schema, aog.attribute_schema
    out = [CLS, *dialogue_prefix, SEP]
    for s in aog.rel_slots:
        label = int(pg.rels[s.a, s.b])
        out.append(aog.entities[s.a].id)
        out.append(CLS if label == rs.unanswerable_index else rs.labels[label])
        out.append(aog.entities[s.b].id)
    for i, e in enumerate(aog.entities):
        out.append(e.id)
        if aog.human[i]:
            for m, sub in enumerate(ats.subtypes):
                v = int(pg.attrs[i, m])
                out.append(CLS if v == UNSET else ats.domain[sub][v])
    out.append(SEP)
    return out


@dataclass
class ParseGraphDiff:
    changed_slots: list[tuple[Slot, int, int]] = field(default_factory=list)

    def __len__(self):
        return len(self.changed_slots)

    def __bool__(self):
        return bool(self.changed_slots)

    def apply(self, pg: ParseGraph) -> ParseGraph:
        out = pg.copy()
        for slot, old, new in self.changed_slots:
            if out.get(slot) != old:
                raise ValueError(f"diff does not apply: slot {slot} holds {out.get(slot)}, expected {old}")
            out.set(slot, new)
        return out


def diff(a: ParseGraph, b: ParseGraph) -> ParseGraphDiff:
    if not a.aog.same_as(b.aog):
        raise SchemaError("parse graphs belong to different SocAoGs")
    changes = []
    for s in a.aog.slots:
        va, vb = a.get(s), b.get(s)
        if va != vb:
            changes.append((s, va, vb))
    return ParseGraphDiff(changes)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(pg: ParseGraph, name: str = "pg", include_unanswerable: bool = False) -> str:
    """DOT digraph: entities as nodes with their attributes, relation labels on edges."""
    aog = pg.aog
    rs = aog.relation_schema
    lines = [f"digraph {_dot_quote(name)} {{"]
    for i, e in enumerate(aog.entities):
        rows = [e.display_name]
        if aog.human[i]:
            for m, sub in enumerate(aog.attribute_schema.subtypes):
                rows.append(f"{sub}: {aog.attribute_schema.value_name(sub, int(pg.attrs[i, m]))}")
        label = "\\n".join(r.replace("\\", "\\\\").replace('"', '\\"') for r in rows)
        shape = "box" if aog.human[i] else "ellipse"
        lines.append(f'  {_dot_quote(e.id)} [shape={shape}, label="{label}"];')
    for s in aog.rel_slots:
        label = int(pg.rels[s.a, s.b])
        if label == rs.unanswerable_index and not include_unanswerable:
            continue
        lines.append(
            f"  {_dot_quote(aog.entities[s.a].id)} -> {_dot_quote(aog.entities[s.b].id)}"
            f" [label={_dot_quote(rs.labels[label])}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def make_aog(
    entity_ids: Iterable[str | Entity],
    relation_schema: RelationSchema,
    attribute_schema: AttributeSchema,
) -> SocAoG:
    entities = tuple(e if isinstance(e, Entity) else Entity(e) for e in entity_ids)
    return SocAoG(entities, relation_schema, attribute_schema)
