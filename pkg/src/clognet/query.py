"""Conditions, conjunctive queries with atomic negation, and their unions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

from .core import CatalogInstance, CatalogSchema, Value, active_domain


@dataclass(frozen=True, order=True)
class Var:
    name: str
    type: Optional[str] = None

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Const:
    value: Value

    @property
    def type(self) -> str:
        return self.value.type

    def __str__(self) -> str:
        return str(self.value)


Term = Union[Var, Const]


# conditions


@dataclass(frozen=True)
class Top:
    def __str__(self) -> str:
        return "true"


TOP = Top()


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class Not:
    arg: "Condition"

    def __str__(self) -> str:
        if isinstance(self.arg, Eq):
            return f"{self.arg.left} != {self.arg.right}"
        return f"not ({self.arg})"


@dataclass(frozen=True)
class And:
    args: tuple["Condition", ...]

    def __str__(self) -> str:
        return " and ".join(f"({a})" if isinstance(a, And) else str(a) for a in self.args)


Condition = Union[Top, Eq, Not, And]


def conj(*conds: Condition) -> Condition:
    parts: list[Condition] = []
    for c in conds:
        if isinstance(c, Top):
            continue
        if isinstance(c, And):
            parts.extend(c.args)
        else:
            parts.append(c)
    if not parts:
        return TOP
    if len(parts) == 1:
        return parts[0]
    return And(tuple(parts))


def neq(a: Term, b: Term) -> Condition:
    return Not(Eq(a, b))


def condition_vars(c: Condition) -> set[Var]:
    if isinstance(c, Eq):
        return {t for t in (c.left, c.right) if isinstance(t, Var)}
    if isinstance(c, Not):
        return condition_vars(c.arg)
    if isinstance(c, And):
        out: set[Var] = set()
        for a in c.args:
            out |= condition_vars(a)
        return out
    return set()


def condition_consts(c: Condition) -> set[Value]:
    if isinstance(c, Eq):
        return {t.value for t in (c.left, c.right) if isinstance(t, Const)}
    if isinstance(c, Not):
        return condition_consts(c.arg)
    if isinstance(c, And):
        out: set[Value] = set()
        for a in c.args:
            out |= condition_consts(a)
        return out
    return set()


def condition_eqs(c: Condition) -> Iterator[Eq]:
    if isinstance(c, Eq):
        yield c
    elif isinstance(c, Not):
        yield from condition_eqs(c.arg)
    elif isinstance(c, And):
        for a in c.args:
            yield from condition_eqs(a)


class UnboundVariable(KeyError):
    pass


def _term_value(t: Term, theta: Mapping[str, Value]) -> Value:
    if isinstance(t, Const):
        return t.value
    try:
        return theta[t.name]
    except KeyError:
        raise UnboundVariable(t.name) from None


def evaluate_condition(c: Condition, theta: Mapping[str, Value]) -> bool:
    if isinstance(c, Eq):
        return _term_value(c.left, theta) == _term_value(c.right, theta)
    if isinstance(c, Not):
        return not evaluate_condition(c.arg, theta)
    if isinstance(c, And):
        return all(evaluate_condition(a, theta) for a in c.args)
    if isinstance(c, Top):
        return True
    raise TypeError(f"not a condition: {c!r}")


# queries


@dataclass(frozen=True)
class RelAtom:
    relation: str
    args: tuple[Term, ...]

    def vars(self) -> set[Var]:
        return {a for a in self.args if isinstance(a, Var)}

    def __str__(self) -> str:
        return f"{self.relation}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Literal:
    atom: RelAtom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"not {self.atom}"


@dataclass(frozen=True)
class ConjunctiveQuery:
    literals: tuple[Literal, ...] = ()
    condition: Condition = TOP
    exists: tuple[Var, ...] = ()

    def vars(self) -> set[Var]:
        out = set(self.exists) | condition_vars(self.condition)
        for lit in self.literals:
            out |= lit.atom.vars()
        return out

    def free(self) -> set[Var]:
        bound = {v.name for v in self.exists}
        return {v for v in self.vars() if v.name not in bound}

    def consts(self) -> set[Value]:
        out = condition_consts(self.condition)
        for lit in self.literals:
            out |= {a.value for a in lit.atom.args if isinstance(a, Const)}
        return out

    def __str__(self) -> str:
        parts = [str(l) for l in self.literals]
        if not isinstance(self.condition, Top) or not parts:
            parts.append(str(self.condition))
        body = " and ".join(parts)
        if self.exists:
            return f"exists {', '.join(v.name for v in self.exists)}. {body}"
        return body


@dataclass(frozen=True)
class UnionQuery:
    disjuncts: tuple[ConjunctiveQuery, ...]

    def __post_init__(self):
        if not self.disjuncts:
            raise ValueError("a union query needs at least one disjunct")

    def vars(self) -> set[Var]:
        out: set[Var] = set()
        for d in self.disjuncts:
            out |= d.vars()
        return out

    def free(self) -> set[Var]:
        out: set[Var] = set()
        for d in self.disjuncts:
            out |= d.free()
        return out

    def consts(self) -> set[Value]:
        out: set[Value] = set()
        for d in self.disjuncts:
            out |= d.consts()
        return out

    def relations(self) -> set[str]:
        return {l.atom.relation for d in self.disjuncts for l in d.literals}

    def __str__(self) -> str:
        return " or ".join(str(d) for d in self.disjuncts)


def as_union(q: Union[ConjunctiveQuery, UnionQuery]) -> UnionQuery:
    return q if isinstance(q, UnionQuery) else UnionQuery((q,))


class Substitution(Mapping):
    """Immutable, hashable map from variable names to values."""

    __slots__ = ("_items", "_map")

    def __init__(self, items: Mapping[str, Value] | Iterable[tuple[str, Value]] = ()):
        pairs = items.items() if isinstance(items, (dict, Mapping)) else items
        self._items = tuple(sorted(pairs))
        self._map = dict(self._items)

    def __getitem__(self, k: str) -> Value:
        return self._map[k]

    def __iter__(self):
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return hash(self._items)

    def __eq__(self, other) -> bool:
        if isinstance(other, Substitution):
            return self._items == other._items
        return isinstance(other, Mapping) and dict(self._map) == dict(other)

    def __lt__(self, other: "Substitution") -> bool:
        return self._items < other._items

    def __repr__(self) -> str:
        if not self._items:
            return "<>"
        return "{" + ", ".join(f"{k}->{v}" for k, v in self._items) + "}"


EMPTY = Substitution()


class QueryTypeError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class TypedQuery:
    query: UnionQuery
    free: tuple[Var, ...] = field(default=())

    def __str__(self) -> str:
        return str(self.query)


def typecheck_query(schema: CatalogSchema, q: Union[ConjunctiveQuery, UnionQuery]) -> TypedQuery:
    """Check arity and typing of every atom; raise QueryTypeError listing all problems."""
    q = as_union(q)
    errors: list[str] = []
    free_sets = []
    for d in q.disjuncts:
        seen: dict[str, str] = {}

        def note(v: Var, where: str) -> None:
            if v.type is None:
                errors.append(f"variable {v.name} has no type in {where}")
                return
            if v.type not in schema.domain:
                errors.append(f"variable {v.name} has undeclared type {v.type}")
            if seen.setdefault(v.name, v.type) != v.type:
                errors.append(f"variable {v.name} used with types {seen[v.name]} and {v.type} in {where}")

        for lit in d.literals:
            atom = lit.atom
            if atom.relation not in schema:
                errors.append(f"unknown relation in atom {atom}")
                continue
            rel = schema[atom.relation]
            if len(atom.args) != rel.arity:
                errors.append(f"arity mismatch at atom {atom}: expected {rel.arity}, got {len(atom.args)}")
                continue
            for (attr, ty), arg in zip(rel.attributes, atom.args):
                if arg.type != ty:
                    errors.append(f"type mismatch at atom {atom}: {arg} is {arg.type}, {rel.name}.{attr} is {ty}")
                if isinstance(arg, Var):
                    note(arg, str(atom))
        for eq in condition_eqs(d.condition):
            for t in (eq.left, eq.right):
                if isinstance(t, Var):
                    note(t, str(eq))
            if eq.left.type != eq.right.type:
                errors.append(f"type mismatch in {eq}: {eq.left.type} vs {eq.right.type}")
        body = set()
        for lit in d.literals:
            body |= {v.name for v in lit.atom.vars()}
        body |= {v.name for v in condition_vars(d.condition)}
        for v in d.exists:
            if v.name not in body:
                errors.append(f"existential variable {v.name} does not occur in the body")
        free_sets.append(frozenset(d.free()))
    if len(set(free_sets)) > 1:
        sigs = [sorted(f"{v.name}:{v.type}" for v in fs) for fs in free_sets]
        errors.append(f"disjuncts have different free variables: {sigs}")
    if errors:
        raise QueryTypeError(errors)
    return TypedQuery(q, tuple(sorted(free_sets[0])))


def _match(args: tuple[Term, ...], row: tuple[Value, ...], binding: dict[str, Value]) -> Optional[dict[str, Value]]:
    out = None
    for a, v in zip(args, row):
        if isinstance(a, Const):
            if a.value != v:
                return None
            continue
        cur = binding.get(a.name) if out is None else out.get(a.name)
        if cur is None:
            if out is None:
                out = dict(binding)
            out[a.name] = v
        elif cur != v:
            return None
    return binding if out is None else out


def _ground(args: tuple[Term, ...], binding: Mapping[str, Value]) -> tuple[Value, ...]:
    return tuple(a.value if isinstance(a, Const) else binding[a.name] for a in args)


def _eval_cq(d: ConjunctiveQuery, cat: CatalogInstance, adom: Mapping[str, frozenset[Value]],
             free_names: list[str]) -> set[Substitution]:
    pos = [l.atom for l in d.literals if l.positive]
    neg = [l.atom for l in d.literals if not l.positive]
    pos.sort(key=lambda a: len(cat.facts(a.relation)))
    factsets = {a.relation: frozenset(cat.facts(a.relation)) for a in neg}
    all_vars = {v.name: v.type for v in d.vars()}
    out: set[Substitution] = set()

    def finish(b: dict[str, Value]) -> None:
        rest = sorted(n for n in all_vars if n not in b)
        pools = [sorted(adom.get(all_vars[n], ())) for n in rest]
        for combo in itertools.product(*pools):
            full = dict(b)
            full.update(zip(rest, combo))
            if any(_ground(a.args, full) in factsets[a.relation] for a in neg):
                continue
            if not evaluate_condition(d.condition, full):
                continue
            out.add(Substitution((n, full[n]) for n in free_names))

    def join(i: int, b: dict[str, Value]) -> None:
        if i == len(pos):
            finish(b)
            return
        atom = pos[i]
        for row in cat.facts(atom.relation):
            nb = _match(atom.args, row, b)
            if nb is not None:
                join(i + 1, nb)

    join(0, {})
    return out


def evaluate_query(q: Union[TypedQuery, ConjunctiveQuery, UnionQuery], cat: CatalogInstance) -> frozenset[Substitution]:
    """ans(q, cat): substitutions of the free variables into the active domain satisfying q.

    A boolean query yields ``{<>}`` when true and the empty set when false.
    """
    tq = q if isinstance(q, TypedQuery) else typecheck_query(cat.schema, q)
    adom = active_domain(cat)
    free_names = sorted(v.name for v in tq.free)
    answers: set[Substitution] = set()
    for d in tq.query.disjuncts:
        answers |= _eval_cq(d, cat, adom, free_names)
    vals = cat.values()
    for theta in answers:
        assert all(v in vals for v in theta.values()), "answer escapes the active domain"
    return frozenset(answers)
