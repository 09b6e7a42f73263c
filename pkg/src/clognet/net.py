"""CLog-net structure, markings, enablement and firing."""

from __future__ import annotations

import functools
import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from .core import (
    CatalogInstance,
    CatalogSchema,
    Multiset,
    ValidationReport,
    Value,
    pool,
)
from .query import (
    TOP,
    Condition,
    Const,
    QueryTypeError,
    Substitution,
    Term,
    UnionQuery,
    Var,
    condition_consts,
    condition_vars,
    evaluate_condition,
    evaluate_query,
    typecheck_query,
)


@dataclass(frozen=True, order=True)
class Fresh:
    """A nu-variable: bound to a value unused by the marking and the catalog."""

    name: str
    type: Optional[str] = None

    def __str__(self) -> str:
        return f"nu {self.name}"


ArcTerm = Union[Var, Const, Fresh]


@dataclass(frozen=True)
class Inscription:
    terms: tuple[ArcTerm, ...]
    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"inscription multiplicity must be >= 1, got {self.k}")

    def vars(self) -> set[Var]:
        return {t for t in self.terms if isinstance(t, Var)}

    def fresh(self) -> set[Fresh]:
        return {t for t in self.terms if isinstance(t, Fresh)}

    def consts(self) -> set[Value]:
        return {t.value for t in self.terms if isinstance(t, Const)}

    def __str__(self) -> str:
        body = ", ".join(str(t) for t in self.terms)
        tup = f"({body})"
        return tup if self.k == 1 else f"{self.k}*{tup}"


@dataclass(frozen=True)
class Place:
    name: str
    color: tuple[str, ...]


Arc = tuple[str, tuple[Inscription, ...]]


@dataclass(frozen=True)
class Transition:
    name: str
    inputs: tuple[Arc, ...] = ()
    outputs: tuple[Arc, ...] = ()
    query: Optional[UnionQuery] = None
    condition: Condition = TOP

    def in_vars(self) -> set[Var]:
        return {v for _, ins in self.inputs for i in ins for v in i.vars()}

    def out_vars(self) -> set[Var]:
        return {v for _, ins in self.outputs for i in ins for v in i.vars()}

    def fresh_vars(self) -> list[Fresh]:
        return sorted({f for _, ins in self.outputs for i in ins for f in i.fresh()})

    def vars(self) -> set[Var]:
        return self.in_vars() | self.out_vars()

    def input_arc(self, place: str) -> tuple[Inscription, ...]:
        return dict(self.inputs).get(place, ())

    def output_arc(self, place: str) -> tuple[Inscription, ...]:
        return dict(self.outputs).get(place, ())

    def consts(self) -> set[Value]:
        out = condition_consts(self.condition)
        if self.query is not None:
            out |= self.query.consts()
        for _, ins in self.inputs + self.outputs:
            for i in ins:
                out |= i.consts()
        return out


@dataclass(frozen=True)
class Net:
    schema: CatalogSchema
    places: tuple[Place, ...] = ()
    transitions: tuple[Transition, ...] = ()

    def place(self, name: str) -> Place:
        for p in self.places:
            if p.name == name:
                return p
        raise KeyError(f"unknown place {name}")

    def transition(self, name: str) -> Transition:
        for t in self.transitions:
            if t.name == name:
                return t
        raise KeyError(f"unknown transition {name}")

    def place_names(self) -> list[str]:
        return [p.name for p in self.places]

    def constants(self) -> frozenset[Value]:
        out: set[Value] = set()
        for t in self.transitions:
            out |= t.consts()
        return frozenset(out)

    def replace_transition(self, name: str, new: Transition) -> "Net":
        return Net(self.schema, self.places, tuple(new if t.name == name else t for t in self.transitions))


Token = tuple[Value, ...]


class Marking:
    """Immutable assignment of a multiset of value tuples to each place."""

    __slots__ = ("_data", "_key", "_values")

    def __init__(self, data: Mapping[str, Union[Multiset, Iterable[Token]]] | None = None):
        clean: dict[str, Multiset] = {}
        for p, ms in (data or {}).items():
            if not isinstance(ms, Multiset):
                ms = Multiset(tuple(tok) for tok in ms)
            if ms:
                clean[p] = ms
        self._data = clean
        self._key = None
        self._values = None

    def __getitem__(self, place: str) -> Multiset:
        return self._data.get(place, _EMPTY_MS)

    def places(self) -> list[str]:
        return sorted(self._data)

    def key(self) -> tuple:
        if self._key is None:
            self._key = tuple((p, tuple(self._data[p].items())) for p in sorted(self._data))
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, Marking) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __lt__(self, other: "Marking") -> bool:
        return self.key() < other.key()

    def values(self) -> frozenset[Value]:
        if self._values is None:
            self._values = frozenset(v for ms in self._data.values() for tok in ms.support() for v in tok)
        return self._values

    def total(self) -> int:
        return sum(len(ms) for ms in self._data.values())

    def occurrences(self) -> Iterator[tuple[str, Token, int]]:
        for p in sorted(self._data):
            for tok, c in self._data[p].items():
                yield p, tok, c

    def update(self, minus: Mapping[str, Multiset], plus: Mapping[str, Multiset]) -> "Marking":
        data = dict(self._data)
        for p, ms in minus.items():
            data[p] = data.get(p, _EMPTY_MS) - ms
        for p, ms in plus.items():
            data[p] = data.get(p, _EMPTY_MS) + ms
        return Marking(data)

    def as_dict(self) -> dict[str, Multiset]:
        return dict(self._data)

    def __repr__(self) -> str:
        parts = [f"{p} -> {self._data[p]!r}" for p in sorted(self._data)]
        return "{" + "; ".join(parts) + "}"


_EMPTY_MS = Multiset()


Binding = Substitution


# validation


def validate_net(net: Net) -> ValidationReport:
    report = ValidationReport()
    schema = net.schema
    names = [p.name for p in net.places]
    if len(set(names)) != len(names):
        report.add("duplicate-place", f"duplicate place names in {names}")
    tnames = [t.name for t in net.transitions]
    if len(set(tnames)) != len(tnames):
        report.add("duplicate-transition", f"duplicate transition names in {tnames}")
    if set(names) & set(tnames):
        report.add("place-transition-clash", f"names used for both places and transitions: {sorted(set(names) & set(tnames))}")
    colors = {}
    for p in net.places:
        if not p.color:
            report.add("empty-color", f"place {p.name} has an empty color", subject=("place", p.name))
        for ty in p.color:
            if ty not in schema.domain:
                report.add("unknown-type", f"place {p.name} uses undeclared type {ty}", subject=("place", p.name))
        colors[p.name] = p.color
    for t in net.transitions:
        _validate_transition(net, t, colors, report)
    return report


def _validate_transition(net: Net, t: Transition, colors: dict, outer: ValidationReport) -> None:
    typing: dict[str, tuple[str, bool]] = {}
    report = ValidationReport()

    def note(term, where: str) -> None:
        if isinstance(term, Const):
            return
        fresh = isinstance(term, Fresh)
        prev = typing.setdefault(term.name, (term.type, fresh))
        if prev != (term.type, fresh):
            report.add("var-typing", f"{t.name}: variable {term.name} used inconsistently in {where}")

    for side, arcs in (("input", t.inputs), ("output", t.outputs)):
        for place, ins in arcs:
            if place not in colors:
                report.add("unknown-place", f"{t.name}: {side} arc refers to unknown place {place}")
                continue
            color = colors[place]
            for i in ins:
                if len(i.terms) != len(color):
                    report.add(
                        "arity",
                        f"{t.name}: {side} inscription {i} on {place} has arity {len(i.terms)}, color has arity {len(color)}",
                    )
                    continue
                for term, ty in zip(i.terms, color):
                    if term.type != ty:
                        report.add("flow-type", f"{t.name}: {term} on {side} arc of {place} has type {term.type}, expected {ty}")
                    if side == "input" and isinstance(term, Fresh):
                        report.add("nu-on-input", f"{t.name}: nu-variable {term.name} on input arc of {place}")
                    note(term, f"{side} arc of {place}")
    in_vars = {v.name for v in t.in_vars()}
    out_vars = {v.name for v in t.out_vars()}
    fresh_names = {f.name for f in t.fresh_vars()}
    phi_vars = {v.name for v in condition_vars(t.condition)}
    if not phi_vars <= in_vars:
        report.add(
            "guard-a",
            f"{t.name}: condition variables {sorted(phi_vars - in_vars)} do not occur on input arcs",
        )
    q_free: set[str] = set()
    if t.query is not None:
        try:
            typecheck_query(net.schema, t.query)
        except QueryTypeError as exc:
            for e in exc.errors:
                report.add("guard-type", f"{t.name}: {e}")
        q_free = {v.name for v in t.query.free()}
        if q_free & fresh_names:
            report.add("guard-nu", f"{t.name}: nu-variables {sorted(q_free & fresh_names)} occur in the guard query")
        if not q_free <= in_vars | out_vars:
            report.add(
                "guard-b",
                f"{t.name}: query variables {sorted(q_free - in_vars - out_vars)} occur on no arc",
            )
        if not (q_free & out_vars) - in_vars:
            # pure filter guards (like load in the fixture) are legitimate, so this is advisory
            report.add(
                "guard-b",
                f"{t.name}: (vars(Q) & OutVars(t)) minus InVars(t) is empty; the query only filters input data",
                severity="warning",
            )
    unbound = out_vars - in_vars - q_free
    if unbound:
        report.add("unbound-output", f"{t.name}: output variables {sorted(unbound)} are bound by neither inputs nor the query")
    for d in report:
        outer.add(d.code, d.message, d.severity, subject=("transition", t.name))


# substitution


class NotEnabled(ValueError):
    pass


def _apply_term(term: ArcTerm, sigma: Mapping[str, Value]) -> Value:
    if isinstance(term, Const):
        return term.value
    try:
        return sigma[term.name]
    except KeyError:
        raise KeyError(f"unbound variable {term.name}") from None


def apply_substitution(sigma: Mapping[str, Value], omega) -> Multiset:
    """Ground an inscription, a sequence of inscriptions, or a multiset of term tuples."""
    if isinstance(omega, Inscription):
        omega = (omega,)
    if isinstance(omega, Multiset):
        pairs = [(c, tuple(e)) for e, c in omega.items()]
    else:
        pairs = [(i.k, i.terms) for i in omega]
    out: dict[Token, int] = {}
    for k, terms in pairs:
        tok = tuple(_apply_term(x, sigma) for x in terms)
        out[tok] = out.get(tok, 0) + k
    if any(k < 0 for k in out.values()):
        raise ValueError("negative multiplicity")
    return Multiset._raw({tok: k for tok, k in out.items() if k})


# fresh-value policy


@dataclass(frozen=True)
class FreshPolicy:
    kind: str = "canonical"
    n: int = 1

    @classmethod
    def parse(cls, text: str) -> "FreshPolicy":
        if text == "canonical":
            return cls()
        if text.startswith("enumerate:"):
            n = int(text.split(":", 1)[1])
            if n < 1:
                raise ValueError("enumerate:N needs N >= 1")
            return cls("enumerate", n)
        raise ValueError(f"unknown fresh policy {text!r}")

    def __str__(self) -> str:
        return "canonical" if self.kind == "canonical" else f"enumerate:{self.n}"


CANONICAL = FreshPolicy()


def fresh_candidates(type_name: str, used: frozenset[Value] | set[Value], n: int) -> list[Value]:
    """The n least pool values of a type outside ``used``."""
    out = []
    i = 0
    while len(out) < n:
        v = pool(type_name, i)
        if v not in used:
            out.append(v)
        i += 1
    return out


class FreshnessAudit:
    """Records every nu-binding handed out while active, recomputing Val(m) and Val(Cat)."""

    def __init__(self):
        self.checks = 0
        self.violations: list[tuple[str, str, Value]] = []

    def record(self, t: Transition, m: Marking, cat: CatalogInstance, sigma: Mapping[str, Value]) -> None:
        seen = {v for _, tok, _ in m.occurrences() for v in tok}
        seen |= {v for _, row in cat.all_facts() for v in row}
        for f in t.fresh_vars():
            self.checks += 1
            if sigma[f.name] in seen:
                self.violations.append((t.name, f.name, sigma[f.name]))


_AUDITS: list[FreshnessAudit] = []


@contextmanager
def freshness_audit():
    audit = FreshnessAudit()
    _AUDITS.append(audit)
    try:
        yield audit
    finally:
        _AUDITS.remove(audit)


# enablement


class _TransitionPlan:
    """Per-(transition, catalog) precomputation: flattened inputs and guard answers."""

    def __init__(self, net: Net, t: Transition, cat: CatalogInstance):
        self.t = t
        self.in_flat = [(p, i) for p, ins in t.inputs for i in ins]
        # token matching checks each inscription alone; joint inclusion matters
        # only when a place feeds several inscriptions
        self.needs_fit = len(self.in_flat) != len({p for p, _ in self.in_flat})
        self.in_names = {v.name for v in t.in_vars()}
        self.fresh = t.fresh_vars()
        self.answers: Optional[list[Substitution]] = None
        self.q_free: list[str] = []
        if t.query is not None:
            tq = typecheck_query(net.schema, t.query)
            self.q_free = [v.name for v in tq.free]
            self.answers = sorted(evaluate_query(tq, cat))
            self.q_in = [n for n in self.q_free if n in self.in_names]
            index: dict[tuple, list[Substitution]] = {}
            for a in self.answers:
                index.setdefault(tuple(a[n] for n in self.q_in), []).append(a)
            self.answer_index = index
        self.protected = net.constants() | cat.values()


_PLAN_CACHE: dict[tuple[int, int, str], _TransitionPlan] = {}


def _plan(net: Net, t: Transition, cat: CatalogInstance) -> _TransitionPlan:
    key = (id(net), id(cat), t.name)
    plan = _PLAN_CACHE.get(key)
    if plan is None or plan.t is not t:
        if len(_PLAN_CACHE) > 4096:
            _PLAN_CACHE.clear()
        plan = _TransitionPlan(net, t, cat)
        _PLAN_CACHE[key] = plan
    return plan


def _match_inputs(plan: _TransitionPlan, m: Marking) -> Iterator[dict[str, Value]]:
    flat = plan.in_flat

    def rec(i: int, b: dict[str, Value]) -> Iterator[dict[str, Value]]:
        if i == len(flat):
            yield b
            return
        place, ins = flat[i]
        for tok, count in m[place]._items.items():
            if count < ins.k:
                continue
            nb = b
            ok = True
            for term, v in zip(ins.terms, tok):
                if isinstance(term, Const):
                    if term.value != v:
                        ok = False
                        break
                    continue
                cur = nb.get(term.name)
                if cur is None:
                    if nb is b:
                        nb = dict(b)
                    nb[term.name] = v
                elif cur != v:
                    ok = False
                    break
            if ok:
                yield from rec(i + 1, nb)

    yield from rec(0, {})


def _inputs_fit(t: Transition, sigma: Mapping[str, Value], m: Marking) -> bool:
    for place, ins in t.inputs:
        if not apply_substitution(sigma, ins) <= m[place]:
            return False
    return True


def enabled_bindings(net: Net, m: Marking, cat: CatalogInstance, t: Transition | str,
                     policy: FreshPolicy = CANONICAL) -> list[Binding]:
    """All bindings enabling ``t`` in ``m`` under ``cat``, sorted.

    Under the canonical policy each nu-variable gets the least unused pool value
    of its type; under ``enumerate:n`` the n least unused values are offered,
    distinct nu-variables always receiving distinct values.
    """
    if isinstance(t, str):
        t = net.transition(t)
    plan = _plan(net, t, cat)
    partial: list[dict[str, Value]] = []
    seen_inputs = set()
    for b in _match_inputs(plan, m):
        key = tuple(sorted(b.items()))
        if key in seen_inputs:
            continue
        seen_inputs.add(key)
        if plan.needs_fit and not _inputs_fit(t, b, m):
            continue
        if not evaluate_condition(t.condition, b):
            continue
        if plan.answers is None:
            partial.append(b)
            continue
        for a in plan.answer_index.get(tuple(b[n] for n in plan.q_in), ()):
            nb = dict(b)
            nb.update(a)
            partial.append(nb)
    if not partial:
        return []
    out: list[Binding] = []
    if plan.fresh:
        used = m.values() | plan.protected
        same = {ty: sum(1 for f in plan.fresh if f.type == ty) for ty in {f.type for f in plan.fresh}}
        if policy.kind == "canonical":
            cands = {ty: fresh_candidates(ty, used, k) for ty, k in same.items()}
            counters: dict[str, int] = {}
            choice = {}
            for f in plan.fresh:
                idx = counters.get(f.type, 0)
                choice[f.name] = cands[f.type][idx]
                counters[f.type] = idx + 1
            choices = [choice]
        else:
            # n values per nu-variable, widened so same-typed nu-variables can stay distinct
            cands = {ty: fresh_candidates(ty, used, policy.n + k - 1) for ty, k in same.items()}
            choices = []
            for combo in itertools.product(*(cands[f.type] for f in plan.fresh)):
                if len(set(combo)) == len(combo):
                    choices.append(dict(zip((f.name for f in plan.fresh), combo)))
        for b in partial:
            for ch in choices:
                nb = dict(b)
                nb.update(ch)
                out.append(Substitution(nb))
    else:
        out = [Substitution(b) for b in partial]
    out = sorted(set(out))
    if _AUDITS and plan.fresh:
        for sigma in out:
            for audit in _AUDITS:
                audit.record(t, m, cat, sigma)
    return out


def is_enabled(net: Net, m: Marking, cat: CatalogInstance, t: Transition, sigma: Mapping[str, Value]) -> bool:
    """Check the enabling conditions for one binding directly."""
    names = {v.name for v in t.vars()} | {f.name for f in t.fresh_vars()}
    if t.query is not None:
        names |= {v.name for v in t.query.free()}
    if not names <= set(sigma):
        return False
    for v in t.vars():
        if sigma[v.name].type != v.type:
            return False
    if not _inputs_fit(t, sigma, m):
        return False
    if not evaluate_condition(t.condition, sigma):
        return False
    if t.query is not None:
        tq = typecheck_query(net.schema, t.query)
        restricted = Substitution((v.name, sigma[v.name]) for v in tq.free)
        if restricted not in evaluate_query(tq, cat):
            return False
    taken = m.values() | cat.values()
    fresh_vals = []
    for f in t.fresh_vars():
        v = sigma[f.name]
        if v.type != f.type or v in taken:
            return False
        fresh_vals.append(v)
    return len(set(fresh_vals)) == len(fresh_vals)


def fire(net: Net, m: Marking, cat: CatalogInstance, t: Transition | str, sigma: Mapping[str, Value],
         check: bool = True) -> Marking:
    if isinstance(t, str):
        t = net.transition(t)
    if check and not is_enabled(net, m, cat, t, sigma):
        raise NotEnabled(f"transition {t.name} is not enabled under {dict(sigma)}")
    if check:
        minus = {p: apply_substitution(sigma, ins) for p, ins in t.inputs}
        plus = {p: apply_substitution(sigma, ins) for p, ins in t.outputs}
        return m.update(minus, plus)
    return _fire_unchecked(m, t, sigma)


def _fire_unchecked(m: Marking, t: Transition, sigma: Mapping[str, Value]) -> Marking:
    """Firing for a binding known to be enabled; same result as consuming inputs then producing outputs."""
    touched: dict[str, dict[Token, int]] = {}
    for arcs, sign in ((t.inputs, -1), (t.outputs, 1)):
        for p, ins in arcs:
            counts = touched.get(p)
            if counts is None:
                counts = touched[p] = dict(m[p]._items)
            for i in ins:
                tok = tuple([x.value if isinstance(x, Const) else sigma[x.name] for x in i.terms])
                left = counts.get(tok, 0) + sign * i.k
                if left < 0:
                    raise NotEnabled(f"transition {t.name} consumes a missing token {tok}")
                if left:
                    counts[tok] = left
                else:
                    counts.pop(tok, None)
    data = dict(m._data)
    for p, counts in touched.items():
        if counts:
            data[p] = Multiset._raw(counts)
        else:
            data.pop(p, None)
    out = Marking.__new__(Marking)
    out._data = data
    out._key = None
    out._values = None
    return out


# canonical forms


def canonicalize_marking(m: Marking, protected: Iterable[Value] = ()) -> Marking:
    return canonicalize_with_map(m, frozenset(protected))[0]


@functools.lru_cache(maxsize=4096)
def _targets(type_name: str, protected: frozenset[Value], n: int) -> tuple[Value, ...]:
    return tuple(fresh_candidates(type_name, protected, n))


def canonicalize_with_map(m: Marking, protected: frozenset[Value]) -> tuple[Marking, dict[Value, Value]]:
    """Rename every unprotected value to a canonical pool representative.

    Returns the canonical marking and the renaming applied. The result is the
    lexicographically least renaming among those consistent with an
    isomorphism-invariant ordering of the renameable values, so isomorphic
    markings get identical forms.
    """
    values = m.values()
    movable = sorted(v for v in values if v not in protected)
    if not movable:
        return m, {}
    by_type: dict[str, list[Value]] = {}
    for v in movable:
        by_type.setdefault(v.type, []).append(v)
    # a value alone in its type has only one possible image
    ren0: dict[Value, Value] = {}
    contested: list[Value] = []
    targets: dict[str, tuple[Value, ...]] = {}
    for ty, vs in by_type.items():
        targets[ty] = _targets(ty, protected, len(vs))
        if len(vs) == 1:
            ren0[vs[0]] = targets[ty][0]
        else:
            contested.extend(vs)
    if not contested:
        return _marking_from_key(_renamed_key(m, ren0)), ren0

    n = len(contested)
    idx = {v: i for i, v in enumerate(contested)}
    types = [v.type for v in contested]
    # per occurrence: place, multiplicity, contested index or -1 per position
    shapes = []
    for p, ms in m._data.items():
        for tok, c in ms._items.items():
            slots = tuple([idx.get(x, -1) for x in tok])
            hits = tuple([(pos, i) for pos, i in enumerate(slots) if i >= 0])
            if hits:
                fixed = tuple([None if i >= 0 else (0, ren0.get(x, x)) for i, x in zip(slots, tok)])
                shapes.append((p, c, slots, fixed, hits))

    def refine(color: list[int]) -> list[int]:
        classes = len(set(color))
        while True:
            sig: list[list] = [[] for _ in range(n)]
            for p, c, slots, fixed, hits in shapes:
                abstract = tuple((1, color[i]) if i >= 0 else fixed[k] for k, i in enumerate(slots))
                for pos, i in hits:
                    sig[i].append((p, abstract, pos, c))
            keys = [(types[i], color[i], tuple(sorted(sig[i]))) for i in range(n)]
            order = sorted(set(keys))
            ranks = {k: r for r, k in enumerate(order)}
            new = [ranks[k] for k in keys]
            if len(order) == classes or len(order) == n:
                return new
            color, classes = new, len(order)

    def build_map(color: list[int]) -> dict[Value, Value]:
        counters: dict[str, int] = {}
        ren = dict(ren0)
        for i in sorted(range(n), key=lambda i: (types[i], color[i])):
            k = counters.get(types[i], 0)
            ren[contested[i]] = targets[types[i]][k]
            counters[types[i]] = k + 1
        return ren

    base = m.key()

    def swap_is_auto(a: int, b: int) -> bool:
        return _renamed_key(m, {contested[a]: contested[b], contested[b]: contested[a]}) == base

    best: list = [None, None]

    def search(color: list[int]) -> None:
        cells: dict[tuple, list[int]] = {}
        for i in range(n):
            cells.setdefault((types[i], color[i]), []).append(i)
        ties = [cell for _, cell in sorted(cells.items()) if len(cell) > 1]
        if ties and all(swap_is_auto(cell[0], x) for cell in ties for x in cell[1:]):
            # every tied cell is fully symmetric, so all leaves give the same key
            rank = {i: r for cell in ties for r, i in enumerate(cell)}
            color = [2 * n * color[i] + rank.get(i, 0) for i in range(n)]
            ties = []
        if not ties:
            ren = build_map(color)
            key = _renamed_key(m, ren)
            if best[0] is None or key < best[0]:
                best[0], best[1] = key, ren
            return
        reps: list[int] = []
        for i in ties[0]:
            if not any(swap_is_auto(i, r) for r in reps):
                reps.append(i)
        for i in reps:
            # individualize i ahead of its cell mates
            search(refine([2 * color[x] + (0 if x == i else 1) for x in range(n)]))

    tyrank = {ty: r for r, ty in enumerate(sorted(set(types)))}
    color = refine([tyrank[ty] for ty in types])
    if len(set(color)) == n:
        # discrete already: a single leaf
        ren = build_map(color)
        return _marking_from_key(_renamed_key(m, ren)), ren
    search(color)
    return _marking_from_key(best[0]), best[1]


def _renamed_key(m: Marking, ren: Mapping[Value, Value]) -> tuple:
    get = ren.get
    out = []
    for p in m.places():
        items: dict[Token, int] = {}
        for tok, c in m._data[p]._items.items():
            nt = tuple([get(x, x) for x in tok])
            items[nt] = items.get(nt, 0) + c
        out.append((p, tuple(sorted(items.items()))))
    return tuple(out)


def _marking_from_key(key: tuple) -> Marking:
    m = Marking({p: Multiset._raw(dict(items)) for p, items in key})
    m._key = key
    return m


def _rename_marking(m: Marking, ren: Mapping[Value, Value]) -> Marking:
    data = {}
    for p in m.places():
        items: dict[Token, int] = {}
        for tok, c in m[p].items():
            nt = tuple(ren.get(x, x) for x in tok)
            items[nt] = items.get(nt, 0) + c
        data[p] = Multiset(items)
    return Marking(data)


def rename_values(m: Marking, ren: Mapping[Value, Value]) -> Marking:
    return _rename_marking(m, ren)
