"""Discrete attribute schemas, partially observed attribute vectors, and the
query string grammar shared by the library and the CLI."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, QueryError


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attributes, each with named categories (cardinality >= 2)."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        attrs = tuple((str(n), tuple(str(v) for v in vals)) for n, vals in self.attributes)
        if any(len(vals) < 2 for _, vals in attrs):
            raise DimensionError("every attribute needs cardinality >= 2")
        if len({n for n, _ in attrs}) != len(attrs):
            raise DimensionError("attribute names must be unique")
        object.__setattr__(self, "attributes", attrs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.attributes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(len(vals) for _, vals in self.attributes)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def concept_count(self) -> int:
        return int(np.prod(self.cardinalities))

    def index_of(self, name: str) -> int:
        for i, (n, _) in enumerate(self.attributes):
            if n == name:
                return i
        raise QueryError(f"unknown attribute {name!r}; schema has {', '.join(self.names)}")

    def value_index(self, attr_index: int, value: str) -> int:
        _, vals = self.attributes[attr_index]
        if value not in vals:
            name = self.attributes[attr_index][0]
            raise QueryError(f"unknown value {value!r} for attribute {name!r}; choices: {', '.join(vals)}")
        return vals.index(value)

    def all_concepts(self) -> list[tuple[int, ...]]:
        """Every fully specified attribute vector, in lexicographic order."""
        return list(itertools.product(*(range(c) for c in self.cardinalities)))

    def one_hot(self, attr_index: int, values: np.ndarray) -> np.ndarray:
        """(B,) category indices -> (B, cardinality) one-hot float64."""
        card = self.cardinalities[attr_index]
        values = np.asarray(values, dtype=np.int64)
        out = np.zeros((values.shape[0], card))
        out[np.arange(values.shape[0]), values] = 1.0
        return out

    def to_dict(self) -> dict:
        return {"attributes": [[n, list(vals)] for n, vals in self.attributes]}

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeSchema":
        return cls(tuple((n, tuple(vals)) for n, vals in d["attributes"]))


@dataclass(frozen=True)
class PartialAttributeVector:
    """Per-attribute category index or None for unobserved."""

    values: tuple[int | None, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(None if v is None else int(v) for v in self.values))

    @property
    def observed(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.values) if v is not None)

    @property
    def missing(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.values) if v is None)

    @property
    def is_full(self) -> bool:
        return not self.missing

    def validate(self, schema: AttributeSchema) -> None:
        if len(self.values) != schema.n_attributes:
            raise DimensionError(f"query has {len(self.values)} attributes, schema has {schema.n_attributes}")
        for i, v in enumerate(self.values):
            if v is not None and not (0 <= v < schema.cardinalities[i]):
                raise QueryError(f"value index {v} out of range for attribute {schema.names[i]!r}")

    @classmethod
    def full(cls, values) -> "PartialAttributeVector":
        return cls(tuple(int(v) for v in values))

    def restrict(self, keep: tuple[int, ...]) -> "PartialAttributeVector":
        """Keep only the given attribute indices observed."""
        keep_set = set(keep)
        return PartialAttributeVector(tuple(v if i in keep_set else None for i, v in enumerate(self.values)))


def parse_query(text: str, schema: AttributeSchema) -> PartialAttributeVector:
    """Parse `name=value` pairs, comma separated; omitted attributes or
    `name=*` mean unobserved."""
    values: list[int | None] = [None] * schema.n_attributes
    text = text.strip()
    if text:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise QueryError(f"bad query fragment {part!r}; expected name=value")
            name, value = (s.strip() for s in part.split("=", 1))
            idx = schema.index_of(name)
            if value == "*":
                values[idx] = None
            else:
                values[idx] = schema.value_index(idx, value)
    pav = PartialAttributeVector(tuple(values))
    pav.validate(schema)
    return pav


def format_query(pav: PartialAttributeVector, schema: AttributeSchema) -> str:
    parts = []
    for i, v in enumerate(pav.values):
        name, vals = schema.attributes[i]
        parts.append(f"{name}={'*' if v is None else vals[v]}")
    return ",".join(parts)


def mnista_schema() -> AttributeSchema:
    """The 10x2x3x4 = 240-concept schema: class, scale, orientation, location."""
    return AttributeSchema(
        (
            ("class", tuple(str(i) for i in range(10))),
            ("scale", ("big", "small")),
            ("orientation", ("clockwise", "upright", "anticlockwise")),
            ("location", ("top-left", "top-right", "bottom-left", "bottom-right")),
        )
    )


def mnist2bit_schema() -> AttributeSchema:
    """Two binary attributes derived from the digit label: parity and magnitude."""
    return AttributeSchema(
        (
            ("parity", ("even", "odd")),
            ("magnitude", ("low", "high")),
        )
    )
