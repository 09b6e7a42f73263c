"""Data-aware coverability properties over markings and catalogs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Union

from .core import CatalogInstance, Value
from .net import Marking, Net
from .query import (
    TOP,
    Condition,
    Const,
    RelAtom,
    Substitution,
    Term,
    Var,
    condition_consts,
    condition_eqs,
    condition_vars,
    evaluate_condition,
)


@dataclass(frozen=True)
class PlaceAtom:
    """``[p >= c]`` when ``args`` is None, otherwise ``[p(args) >= c]``."""

    place: str
    args: Optional[tuple[Term, ...]] = None
    c: int = 1

    def vars(self) -> set[Var]:
        return {a for a in self.args or () if isinstance(a, Var)}

    def __str__(self) -> str:
        if self.args is None:
            return f"[{self.place} >= {self.c}]"
        return f"[{self.place}({', '.join(str(a) for a in self.args)}) >= {self.c}]"


Atom = Union[PlaceAtom, RelAtom]


@dataclass(frozen=True)
class PropLiteral:
    atom: Atom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"not {self.atom}"


@dataclass(frozen=True)
class Property:
    name: str
    exists: tuple[Var, ...]
    literals: tuple[PropLiteral, ...]
    condition: Condition = TOP

    def vars(self) -> set[Var]:
        out = set(self.exists) | condition_vars(self.condition)
        for lit in self.literals:
            out |= lit.atom.vars()
        return out

    def consts(self) -> set[Value]:
        out = condition_consts(self.condition)
        for lit in self.literals:
            out |= {a.value for a in getattr(lit.atom, "args", None) or () if isinstance(a, Const)}
        return out

    def place_atoms(self) -> list[PlaceAtom]:
        return [l.atom for l in self.literals if isinstance(l.atom, PlaceAtom)]

    def __str__(self) -> str:
        parts = [str(l) for l in self.literals]
        if not isinstance(self.condition, type(TOP)):
            parts.append(str(self.condition))
        body = " and ".join(parts)
        if self.exists:
            return f"exists {', '.join(v.name for v in self.exists)}. {body}"
        return body


class PropertyError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def typecheck_property(net: Net, prop: Property) -> None:
    errors: list[str] = []
    places = {p.name: p.color for p in net.places}
    schema = net.schema
    for lit in prop.literals:
        a = lit.atom
        if isinstance(a, PlaceAtom):
            if a.place not in places:
                errors.append(f"unknown place {a.place} in {a}")
                continue
            if a.c < 0:
                errors.append(f"negative threshold in {a}")
            if a.args is None:
                continue
            color = places[a.place]
            if len(a.args) != len(color):
                errors.append(f"{a}: arity {len(a.args)} but {a.place} has color arity {len(color)}")
                continue
            for arg, ty in zip(a.args, color):
                if arg.type != ty:
                    errors.append(f"{a}: {arg} has type {arg.type}, expected {ty}")
        else:
            if a.relation not in schema:
                errors.append(f"unknown relation in {a}")
                continue
            rel = schema[a.relation]
            if len(a.args) != rel.arity:
                errors.append(f"{a}: arity {len(a.args)}, expected {rel.arity}")
                continue
            for arg, ty in zip(a.args, rel.types()):
                if arg.type != ty:
                    errors.append(f"{a}: {arg} has type {arg.type}, expected {ty}")
    for eq in condition_eqs(prop.condition):
        if eq.left.type != eq.right.type:
            errors.append(f"type mismatch in {eq}")
    in_places = set()
    for pa in prop.place_atoms():
        in_places |= {v.name for v in pa.vars()}
    stray = sorted(v.name for v in prop.vars() if v.name not in in_places)
    if stray:
        errors.append(f"variables {stray} occur in no place atom")
    declared = {v.name for v in prop.exists}
    undeclared = sorted({v.name for v in prop.vars()} - declared)
    if undeclared:
        errors.append(f"variables {undeclared} are not existentially quantified")
    if errors:
        raise PropertyError(errors)


def _holds(lit: PropLiteral, m: Marking, cat: CatalogInstance, theta: dict[str, Value]) -> bool:
    a = lit.atom
    if isinstance(a, PlaceAtom):
        if a.args is None:
            res = len(m[a.place]) >= a.c
        else:
            tok = tuple(x.value if isinstance(x, Const) else theta[x.name] for x in a.args)
            res = m[a.place][tok] >= a.c
    else:
        row = tuple(x.value if isinstance(x, Const) else theta[x.name] for x in a.args)
        res = row in cat.facts(a.relation)
    return res == lit.positive


def eval_property(prop: Property, m: Marking, cat: CatalogInstance) -> Optional[Substitution]:
    """A witnessing assignment for the property in ``m``, or None.

    Positive place atoms drive the search; remaining variables range over the
    typed values of the marking and the catalog.
    """
    drivers = [l.atom for l in prop.literals if l.positive and isinstance(l.atom, PlaceAtom) and l.atom.args]
    all_vars = {v.name: v.type for v in prop.vars()}
    domain: dict[str, list[Value]] = {}
    for v in sorted(m.values() | cat.values()):
        domain.setdefault(v.type, []).append(v)

    def finish(b: dict[str, Value]) -> Optional[Substitution]:
        rest = sorted(n for n in all_vars if n not in b)
        for combo in itertools.product(*(domain.get(all_vars[n], []) for n in rest)):
            full = dict(b)
            full.update(zip(rest, combo))
            if all(_holds(l, m, cat, full) for l in prop.literals) and evaluate_condition(prop.condition, full):
                return Substitution(full)
        return None

    def drive(i: int, b: dict[str, Value]) -> Optional[Substitution]:
        if i == len(drivers):
            return finish(b)
        atom = drivers[i]
        for tok, count in m[atom.place].items():
            if count < atom.c:
                continue
            nb = dict(b)
            ok = True
            for arg, v in zip(atom.args, tok):
                if isinstance(arg, Const):
                    ok = arg.value == v
                elif nb.setdefault(arg.name, v) != v:
                    ok = False
                if not ok:
                    break
            if ok:
                res = drive(i + 1, nb)
                if res is not None:
                    return res
        return None

    return drive(0, {})
