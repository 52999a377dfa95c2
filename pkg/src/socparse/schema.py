"""Relation and attribute ontologies.

Schema documents are plain UTF-8 text split into sections::

    # comment
    [relations]
    per:children
    per:parents
    [inverses]
    per:children = per:parents
    [interpersonal]
    per:children
    [attributes]
    gender: male, female

A document may hold any subset of the sections; the relation loader reads
``[relations]``, ``[inverses]`` and ``[interpersonal]``, the attribute loader
reads ``[attributes]``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

UNANSWERABLE = "unanswerable"
UNKNOWN_VALUE = "<unknown>"

SECTIONS = ("relations", "inverses", "interpersonal", "attributes")


class SchemaError(ValueError):
    """Raised for malformed or inconsistent schema documents."""


@dataclass(frozen=True)
class RelationSchema:
    labels: tuple[str, ...]
    inverse: Mapping[str, str] = field(default_factory=dict)
    interpersonal: frozenset[str] = frozenset()
    unanswerable_label: str = UNANSWERABLE

    def __post_init__(self):
        labels = tuple(self.labels)
        seen = set()
        for label in labels:
            if label in seen:
                raise SchemaError(f"duplicate relation label {label!r}")
            seen.add(label)
        if self.unanswerable_label not in seen:
            labels = labels + (self.unanswerable_label,)
            seen.add(self.unanswerable_label)
        object.__setattr__(self, "labels", labels)
        inverse = dict(self.inverse)
        for left, right in inverse.items():
            for name in (left, right):
                if name not in seen:
                    raise SchemaError(f"inverse references unknown label {name!r}")
            if inverse.get(right) != left:
                raise SchemaError(f"inverse pair {left!r} -> {right!r} is not involutive")
        if self.unanswerable_label in inverse:
            raise SchemaError("the unanswerable label cannot have an inverse")
        object.__setattr__(self, "inverse", inverse)
        unknown = set(self.interpersonal) - seen
        if unknown:
            raise SchemaError(f"interpersonal flags reference unknown labels {sorted(unknown)}")
        object.__setattr__(self, "interpersonal", frozenset(self.interpersonal))
        object.__setattr__(self, "_index", {label: i for i, label in enumerate(labels)})

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise SchemaError(f"unknown relation label {label!r}") from None

    @property
    def relation_types(self) -> tuple[str, ...]:
        """Labels excluding the unanswerable label."""
        return tuple(l for l in self.labels if l != self.unanswerable_label)

    @property
    def unanswerable_index(self) -> int:
        return self._index[self.unanswerable_label]

    def inverse_of(self, label: str) -> str | None:
        self.index(label)
        return self.inverse.get(label)

    def to_text(self) -> str:
        lines = ["[relations]", *self.labels]
        written = set()
        lines.append("[inverses]")
        for label in self.labels:
            other = self.inverse.get(label)
            if other is not None and other not in written:
                lines.append(f"{label} = {other}")
                written.add(label)
        lines.append("[interpersonal]")
        lines.extend(l for l in self.labels if l in self.interpersonal)
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AttributeSchema:
    subtypes: tuple[str, ...] = ()
    domain: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    unknown_value: str = UNKNOWN_VALUE

    def __post_init__(self):
        subtypes = tuple(self.subtypes)
        if len(set(subtypes)) != len(subtypes):
            raise SchemaError("duplicate attribute subtype")
        domain = {}
        for name in subtypes:
            values = tuple(self.domain.get(name, ()))
            if not values:
                raise SchemaError(f"attribute subtype {name!r} has an empty value domain")
            if self.unknown_value in values:
                raise SchemaError(f"subtype {name!r} uses the reserved token {self.unknown_value!r}")
            if len(set(values)) != len(values):
                raise SchemaError(f"subtype {name!r} lists a value twice")
            domain[name] = values
        object.__setattr__(self, "subtypes", subtypes)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(
            self,
            "_index",
            {name: {v: i for i, v in enumerate(vals)} for name, vals in domain.items()},
        )

    def __len__(self):
        return len(self.subtypes)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(len(self.domain[s]) for s in self.subtypes)

    def subtype_index(self, subtype: str) -> int:
        try:
            return self.subtypes.index(subtype)
        except ValueError:
            raise SchemaError(f"unknown attribute subtype {subtype!r}") from None

    def value_index(self, subtype: str, value: str) -> int:
        """Index of ``value`` in the subtype domain; ``-1`` for the unknown value."""
        if value == self.unknown_value:
            return -1
        try:
            return self._index[subtype][value]
        except KeyError:
            raise SchemaError(f"value {value!r} is not in the {subtype!r} domain") from None

    def value_name(self, subtype: str, index: int) -> str:
        if index < 0:
            return self.unknown_value
        return self.domain[subtype][index]

    def to_text(self) -> str:
        lines = ["[attributes]"]
        lines.extend(f"{s}: {', '.join(self.domain[s])}" for s in self.subtypes)
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _read_source(source) -> str:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    if isinstance(source, str) and "\n" not in source and Path(source).is_file():
        return Path(source).read_text(encoding="utf-8")
    return str(source)


def parse_sections(text: str) -> dict[str, list[tuple[int, str]]]:
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SECTIONS:
                raise SchemaError(f"line {lineno}: unknown section [{current}]")
            sections.setdefault(current, [])
            continue
        if current is None:
            raise SchemaError(f"line {lineno}: entry outside any section")
        sections[current].append((lineno, line))
    return sections


def load_relation_schema(source) -> RelationSchema:
    """Load a :class:`RelationSchema` from a path or document text."""
    sections = parse_sections(_read_source(source))
    labels = [line for _, line in sections.get("relations", [])]
    inverse: dict[str, str] = {}
    for lineno, line in sections.get("inverses", []):
        left, sep, right = line.partition("=")
        if not sep:
            raise SchemaError(f"line {lineno}: expected 'label = label'")
        left, right = left.strip(), right.strip()
        for a, b in ((left, right), (right, left)):
            if inverse.setdefault(a, b) != b:
                raise SchemaError(f"line {lineno}: conflicting inverse for {a!r}")
    interpersonal = frozenset(line for _, line in sections.get("interpersonal", []))
    return RelationSchema(tuple(labels), inverse, interpersonal)


def load_attribute_schema(source) -> AttributeSchema:
    """Load an :class:`AttributeSchema` from a path or document text."""
    sections = parse_sections(_read_source(source))
    subtypes: list[str] = []
    domain: dict[str, tuple[str, ...]] = {}
    for lineno, line in sections.get("attributes", []):
        name, sep, values = line.partition(":")
        name = name.strip()
        if not sep or not name:
            raise SchemaError(f"line {lineno}: expected 'subtype: value, value'")
        if name in domain:
            raise SchemaError(f"line {lineno}: duplicate attribute subtype {name!r}")
        subtypes.append(name)
        domain[name] = tuple(v.strip() for v in values.split(",") if v.strip())
    return AttributeSchema(tuple(subtypes), domain)


def inverse_of(schema: RelationSchema, label: str) -> str | None:
    return schema.inverse_of(label)


def fixture_path(name: str) -> Path:
    """Path of a bundled schema fixture (``dialogre.schema``, ``moviegraph.schema``)."""
    return Path(str(resources.files("socparse") / "data" / name))


def load_fixture(name: str) -> tuple[RelationSchema, AttributeSchema]:
    path = fixture_path(name)
    return load_relation_schema(path), load_attribute_schema(path)


def make_relation_schema(labels: Iterable[str], inverse_pairs=(), interpersonal=()) -> RelationSchema:
    inverse = {}
    for a, b in inverse_pairs:
        inverse[a] = b
        inverse[b] = a
    return RelationSchema(tuple(labels), inverse, frozenset(interpersonal))
