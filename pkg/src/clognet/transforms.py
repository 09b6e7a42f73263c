"""Conservative-net classification and nu-variable elimination."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .core import CatalogSchema, DataType, RelationSchema, Value, const
from .net import Fresh, Inscription, Marking, Net, Place, Transition
from .query import ConjunctiveQuery, Literal, RelAtom, UnionQuery, Var


@dataclass(frozen=True)
class NuOccurrence:
    transition: str
    place: str
    position: int
    variable: str

    def __str__(self) -> str:
        return f"({self.transition}, {self.place}, nu {self.variable} at {self.position})"


def classify_conservative(net: Net) -> tuple[bool, list[NuOccurrence]]:
    """A net is conservative iff no output inscription carries a nu-variable."""
    found = []
    for t in net.transitions:
        for place, ins in t.outputs:
            for i in ins:
                for pos, term in enumerate(i.terms):
                    if isinstance(term, Fresh):
                        found.append(NuOccurrence(t.name, place, pos, term.name))
    return not found, found


@dataclass
class Conservativized:
    net: Net
    new_relations: list[str] = field(default_factory=list)
    new_places: list[str] = field(default_factory=list)
    # tokens to add to the initial marking (provision mode)
    marking_delta: dict[str, list[tuple[Value, ...]]] = field(default_factory=dict)

    def initial_marking(self, m0: Marking) -> Marking:
        data = {p: list(m0[p].elements()) for p in m0.places()}
        for p, toks in self.marking_delta.items():
            data.setdefault(p, []).extend(toks)
        return Marking(data)


def created_relation(type_name: str) -> str:
    return f"Cr{type_name}"


def provision_place(type_name: str) -> str:
    return f"provision_{type_name}"


def _unfresh(ins: Inscription) -> Inscription:
    return Inscription(tuple(Var(t.name, t.type) if isinstance(t, Fresh) else t for t in ins.terms), ins.k)


def conservativize(net: Net, mode: str = "catalog", b: Optional[int] = None) -> Conservativized:
    """Remove nu-variables.

    ``catalog``: every nu-variable of type D becomes a normal variable drawn
    from a new key-only relation ``CrD`` through an added guard atom.
    ``provision``: a place seeded with ``b`` distinct values per type replaces
    fresh generation; transitions consume from it.
    """
    ok, occ = classify_conservative(net)
    if ok:
        return Conservativized(net)
    if mode == "catalog":
        return _via_catalog(net)
    if mode == "provision":
        if b is None or b < 1:
            raise ValueError("provision mode requires b >= 1")
        return _via_provision(net, b)
    raise ValueError(f"unknown mode {mode!r}")


def _via_catalog(net: Net) -> Conservativized:
    schema = net.schema
    types = sorted({f.type for t in net.transitions for f in t.fresh_vars()})
    keyed = {r.key_type: r.name for r in schema.relations if r.attributes}
    new_rels = []
    for ty in types:
        name = created_relation(ty)
        if name in schema:
            raise ValueError(f"relation {name} already exists")
        if ty in keyed:
            raise ValueError(f"type {ty} already keys relation {keyed[ty]}")
        schema = schema.with_relation(RelationSchema(name, (("id", ty),)))
        new_rels.append(name)
    transitions = []
    for t in net.transitions:
        fresh = t.fresh_vars()
        if not fresh:
            transitions.append(t)
            continue
        atoms = tuple(Literal(RelAtom(created_relation(f.type), (Var(f.name, f.type),))) for f in fresh)
        if t.query is None:
            query = UnionQuery((ConjunctiveQuery(atoms),))
        else:
            query = UnionQuery(tuple(
                ConjunctiveQuery(d.literals + atoms, d.condition, d.exists) for d in t.query.disjuncts
            ))
        outputs = tuple((p, tuple(_unfresh(i) for i in ins)) for p, ins in t.outputs)
        transitions.append(Transition(t.name, t.inputs, outputs, query, t.condition))
    return Conservativized(Net(schema, net.places, tuple(transitions)), new_relations=new_rels)


def _via_provision(net: Net, b: int) -> Conservativized:
    types = sorted({f.type for t in net.transitions for f in t.fresh_vars()})
    existing = set(net.place_names())
    places = list(net.places)
    delta = {}
    for ty in types:
        name = provision_place(ty)
        if name in existing:
            raise ValueError(f"place {name} already exists")
        places.append(Place(name, (ty,)))
        delta[name] = [(const(ty, f"prov_{ty}_{i}"),) for i in range(b)]
    transitions = []
    for t in net.transitions:
        fresh = t.fresh_vars()
        if not fresh:
            transitions.append(t)
            continue
        inputs = list(t.inputs)
        for f in fresh:
            inputs.append((provision_place(f.type), (Inscription((Var(f.name, f.type),)),)))
        merged: dict[str, tuple[Inscription, ...]] = {}
        for p, ins in inputs:
            merged[p] = merged.get(p, ()) + ins
        outputs = tuple((p, tuple(_unfresh(i) for i in ins)) for p, ins in t.outputs)
        transitions.append(Transition(t.name, tuple(merged.items()), outputs, t.query, t.condition))
    return Conservativized(Net(net.schema, tuple(places), tuple(transitions)),
                           new_places=sorted(delta), marking_delta=delta)
