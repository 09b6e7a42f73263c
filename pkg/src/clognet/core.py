"""Type domain, values, multisets and the read-only catalog."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional


class Value(NamedTuple):
    """A typed data value.

    ``kind`` is 0 for a named constant (``payload`` is its name) and 1 for a
    value drawn from the type's unbounded pool (``payload`` is the index).
    Ordering is total: by type, then constants before pool values.
    """

    type: str
    kind: int
    payload: object

    def __str__(self) -> str:
        if self.kind == POOL:
            return f"{self.type}#{self.payload}"
        return str(self.payload)

    @property
    def is_pool(self) -> bool:
        return self.kind == POOL


CONST = 0
POOL = 1


def const(type_name: str, name: str) -> Value:
    return Value(type_name, CONST, name)


def pool(type_name: str, index: int) -> Value:
    if index < 0:
        raise ValueError(f"pool index must be non-negative, got {index}")
    return Value(type_name, POOL, index)


@dataclass(frozen=True)
class DataType:
    name: str
    # finite enumeration of named constants, or None for an unbounded pool
    values: Optional[tuple[str, ...]] = None

    @property
    def unbounded(self) -> bool:
        return self.values is None

    def contains(self, v: Value) -> bool:
        if v.type != self.name:
            return False
        if v.kind == POOL:
            return self.values is None
        return self.values is None or v.payload in self.values


@dataclass(frozen=True)
class TypeDomain:
    types: tuple[DataType, ...] = ()

    def __post_init__(self):
        names = [t.name for t in self.types]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate type names in {names}")

    def __contains__(self, name: str) -> bool:
        return any(t.name == name for t in self.types)

    def __getitem__(self, name: str) -> DataType:
        for t in self.types:
            if t.name == name:
                return t
        raise KeyError(name)

    def names(self) -> list[str]:
        return [t.name for t in self.types]


class Multiset:
    """Immutable finite multiset; zero counts are never stored."""

    __slots__ = ("_items", "_hash")

    def __init__(self, items: Iterable | Mapping | None = None):
        if items is None:
            data: dict = {}
        elif isinstance(items, Mapping):
            data = {k: c for k, c in items.items() if c > 0}
            if any(c < 0 for c in items.values()):
                raise ValueError("negative multiplicity")
        else:
            data = dict(Counter(items))
        self._items = data
        self._hash = None

    @classmethod
    def _raw(cls, data: dict) -> "Multiset":
        m = cls.__new__(cls)
        m._items = data
        m._hash = None
        return m

    def __getitem__(self, elem) -> int:
        return self._items.get(elem, 0)

    def __contains__(self, elem) -> bool:
        return elem in self._items

    def __iter__(self) -> Iterator:
        """Iterate over the support in sorted order."""
        return iter(sorted(self._items))

    def elements(self) -> Iterator:
        for e in sorted(self._items):
            for _ in range(self._items[e]):
                yield e

    def items(self) -> list[tuple[object, int]]:
        return sorted(self._items.items())

    def support(self) -> frozenset:
        return frozenset(self._items)

    def __len__(self) -> int:
        return sum(self._items.values())

    def __bool__(self) -> bool:
        return bool(self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._items == other._items

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._items.items()))
        return self._hash

    def __le__(self, other: "Multiset") -> bool:
        return all(other._items.get(e, 0) >= c for e, c in self._items.items())

    def __lt__(self, other: "Multiset") -> bool:
        return self <= other and self != other

    def __add__(self, other: "Multiset") -> "Multiset":
        data = dict(self._items)
        for e, c in other._items.items():
            data[e] = data.get(e, 0) + c
        return Multiset._raw(data)

    def __sub__(self, other: "Multiset") -> "Multiset":
        if not other <= self:
            raise ValueError("multiset difference requires inclusion")
        data = dict(self._items)
        for e, c in other._items.items():
            left = data[e] - c
            if left:
                data[e] = left
            else:
                del data[e]
        return Multiset._raw(data)

    def __rmul__(self, k: int) -> "Multiset":
        if k < 0:
            raise ValueError("negative scalar")
        if k == 0:
            return Multiset()
        return Multiset._raw({e: c * k for e, c in self._items.items()})

    __mul__ = __rmul__

    def __repr__(self) -> str:
        parts = []
        for e, c in self.items():
            s = _fmt_elem(e)
            parts.append(s if c == 1 else f"{s}^{c}")
        return "{" + ", ".join(parts) + "}"


def _fmt_elem(e) -> str:
    if isinstance(e, tuple) and not isinstance(e, Value):
        return "<" + ", ".join(str(x) for x in e) + ">"
    return str(e)


@dataclass(frozen=True)
class RelationSchema:
    name: str
    attributes: tuple[tuple[str, str], ...]
    # (attribute index, target relation name)
    fks: tuple[tuple[int, str], ...] = ()
    # position of an explicitly declared key; only 0 is legal
    key_index: int = 0

    @property
    def arity(self) -> int:
        return len(self.attributes)

    @property
    def key_type(self) -> str:
        return self.attributes[0][1]

    def attr_index(self, attr: str) -> int:
        for i, (a, _) in enumerate(self.attributes):
            if a == attr:
                return i
        raise KeyError(f"{self.name} has no attribute {attr}")

    def types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.attributes)


@dataclass(frozen=True)
class CatalogSchema:
    domain: TypeDomain
    relations: tuple[RelationSchema, ...] = ()

    def __getitem__(self, name: str) -> RelationSchema:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(r.name == name for r in self.relations)

    def with_relation(self, rel: RelationSchema, new_types: Iterable[DataType] = ()) -> "CatalogSchema":
        types = self.domain.types + tuple(t for t in new_types if t.name not in self.domain)
        return CatalogSchema(TypeDomain(types), self.relations + (rel,))


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    severity: str = "error"
    span: object = None
    # (kind, name) of the offending element, used to locate it in source
    subject: Optional[tuple[str, str]] = None

    def __str__(self) -> str:
        loc = f"{self.span}: " if self.span is not None else ""
        return f"{loc}{self.severity}[{self.code}]: {self.message}"


@dataclass
class ValidationReport:
    entries: list[Diagnostic] = field(default_factory=list)

    def add(self, code: str, message: str, severity: str = "error", span=None, subject=None) -> None:
        self.entries.append(Diagnostic(code, message, severity, span, subject))

    def extend(self, other: "ValidationReport") -> None:
        self.entries.extend(other.entries)

    @property
    def errors(self) -> list[Diagnostic]:
        return [e for e in self.entries if e.severity == "error"]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [e for e in self.entries if e.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [e.code for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def validate_schema(schema: CatalogSchema) -> ValidationReport:
    report = ValidationReport()
    seen: dict[str, str] = {}
    for rel in schema.relations:
        if rel.name in seen:
            report.add("duplicate-relation", f"relation {rel.name} declared twice")
            continue
        seen[rel.name] = rel.key_type if rel.attributes else ""
        subj = ("relation", rel.name)
        if not rel.attributes:
            report.add("empty-relation", f"relation {rel.name} has no attributes", subject=subj)
            continue
        if rel.key_index != 0:
            report.add("non-first-pk", f"{rel.name}: primary key must be the first attribute", subject=subj)
        for attr, ty in rel.attributes:
            if ty not in schema.domain:
                report.add("unknown-type", f"{rel.name}.{attr} has undeclared type {ty}", subject=subj)
    key_owner: dict[str, str] = {}
    for rel in schema.relations:
        if not rel.attributes:
            continue
        kt = rel.key_type
        if kt in key_owner and key_owner[kt] != rel.name:
            report.add(
                "pk-type-clash",
                f"primary keys of {key_owner[kt]} and {rel.name} share type {kt}",
                subject=("relation", rel.name),
            )
        else:
            key_owner.setdefault(kt, rel.name)
    for rel in schema.relations:
        subj = ("relation", rel.name)
        for idx, target in rel.fks:
            if idx == 0:
                report.add("fk-on-key", f"{rel.name}: foreign key on the primary key attribute", subject=subj)
                continue
            if not 0 < idx < rel.arity:
                report.add("fk-bad-attribute", f"{rel.name}: foreign key attribute #{idx} out of range", subject=subj)
                continue
            if target not in schema:
                report.add("fk-dangling-target", f"{rel.name}.{rel.attributes[idx][0]} references unknown relation {target}",
                           subject=subj)
                continue
            tgt = schema[target]
            if not tgt.attributes:
                continue
            if rel.attributes[idx][1] != tgt.key_type:
                report.add(
                    "fk-type-mismatch",
                    f"{rel.name}.{rel.attributes[idx][0]}: {rel.attributes[idx][1]} "
                    f"does not match {target} key type {tgt.key_type}",
                    subject=subj,
                )
    return report


def fk_graph_acyclic(schema: CatalogSchema) -> bool:
    """True iff foreign keys form no referential cycle (self-references included)."""
    edges = {r.name: {t for _, t in r.fks} for r in schema.relations}
    state: dict[str, int] = {}

    def visit(n: str) -> bool:
        state[n] = 1
        for m in edges.get(n, ()):
            s = state.get(m, 0)
            if s == 1:
                return False
            if s == 0 and m in edges and not visit(m):
                return False
        state[n] = 2
        return True

    return all(state.get(n) == 2 or visit(n) for n in sorted(edges))


class CatalogInstance:
    """Finite set of facts over a schema. Facts are kept sorted per relation."""

    __slots__ = ("schema", "_facts", "_adom")

    def __init__(self, schema: CatalogSchema, facts: Mapping[str, Iterable[tuple[Value, ...]]] | None = None):
        self.schema = schema
        data = {r.name: frozenset() for r in schema.relations}
        for rel, rows in (facts or {}).items():
            if rel not in data:
                raise KeyError(f"unknown relation {rel}")
            data[rel] = frozenset(tuple(row) for row in rows)
        self._facts = {k: tuple(sorted(v)) for k, v in data.items()}
        self._adom = None

    def facts(self, rel: str) -> tuple[tuple[Value, ...], ...]:
        return self._facts[rel]

    def relations(self) -> list[str]:
        return list(self._facts)

    def all_facts(self) -> Iterator[tuple[str, tuple[Value, ...]]]:
        for rel in self._facts:
            for row in self._facts[rel]:
                yield rel, row

    def __len__(self) -> int:
        return sum(len(v) for v in self._facts.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, CatalogInstance) and self._facts == other._facts

    def __hash__(self) -> int:
        return hash(tuple(sorted(self._facts.items())))

    def values(self) -> frozenset[Value]:
        if self._adom is None:
            self._adom = frozenset(v for _, row in self.all_facts() for v in row)
        return self._adom

    def __repr__(self) -> str:
        parts = []
        for rel, rows in self._facts.items():
            for row in rows:
                parts.append(f"{rel}({', '.join(str(v) for v in row)})")
        return "Cat{" + ", ".join(parts) + "}"


def validate_instance(cat: CatalogInstance) -> ValidationReport:
    report = ValidationReport()
    schema = cat.schema
    for rel in schema.relations:
        keys: dict[Value, tuple] = {}
        for row in cat.facts(rel.name):
            if len(row) != rel.arity:
                report.add("arity", f"{rel.name}{_fmt_elem(row)} has arity {len(row)}, expected {rel.arity}")
                continue
            bad = False
            for (attr, ty), v in zip(rel.attributes, row):
                if not isinstance(v, Value) or v.type != ty or (ty in schema.domain and not schema.domain[ty].contains(v)):
                    report.add("type", f"{rel.name}.{attr} = {v} is not a value of {ty}")
                    bad = True
            if bad:
                continue
            if row[0] in keys:
                report.add("duplicate-pk", f"{rel.name}: key {row[0]} used by {_fmt_elem(keys[row[0]])} and {_fmt_elem(row)}")
            else:
                keys[row[0]] = row
    for rel in schema.relations:
        for idx, target in rel.fks:
            if target not in schema or not 0 < idx < rel.arity:
                continue
            target_keys = {row[0] for row in cat.facts(target)}
            for row in cat.facts(rel.name):
                if len(row) == rel.arity and row[idx] not in target_keys:
                    report.add(
                        "dangling-fk",
                        f"{rel.name}{_fmt_elem(row)}: {rel.attributes[idx][0]} = {row[idx]} not a key of {target}",
                    )
    return report


def active_domain(cat: CatalogInstance) -> dict[str, frozenset[Value]]:
    """Values of each declared type occurring in some fact."""
    out: dict[str, set[Value]] = {t: set() for t in cat.schema.domain.names()}
    for _, row in cat.all_facts():
        for v in row:
            out.setdefault(v.type, set()).add(v)
    return {t: frozenset(vs) for t, vs in out.items()}
