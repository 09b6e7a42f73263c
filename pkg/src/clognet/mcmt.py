"""Translation of a marked net and a property into an MCMT array-based specification.

Layout of the emitted document, in order: sort and function definitions,
constants, the ``:db_driven`` block, one ``:local`` array per place component,
the ``init_fl`` flag, the all-empty ``:initial`` state, the transition loading
the initial marking, one statement per transition alternative, and ``:unsafe``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import CatalogSchema, Diagnostic, TypeDomain, Value
from .net import Fresh, Marking, Net, Transition
from .props import PlaceAtom, Property
from .query import TOP, And, Condition, Const, Eq, Not, RelAtom, Top, Var

BUDGET_EXISTENTIAL = 2
BUDGET_UNIVERSAL = 1


class EncodeError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class Statement:
    kind: str  # smt, db_driven, local, global, initial, transition, unsafe
    lines: list[str]
    label: str = ""

    def render(self) -> str:
        return "\n".join(self.lines)


@dataclass(frozen=True)
class IndexBudget:
    transition: str
    existential: int
    universal: int

    @property
    def exceeded(self) -> bool:
        return self.existential > BUDGET_EXISTENTIAL or self.universal > BUDGET_UNIVERSAL


@dataclass
class McmtDocument:
    statements: list[Statement] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    budgets: list[IndexBudget] = field(default_factory=list)

    def render(self) -> str:
        out = []
        for st in self.statements:
            out.append(st.render())
            # declarations are grouped; blocks are separated by a blank line
            if st.kind not in ("smt", "local", "global"):
                out.append("")
        text = "\n".join(out).rstrip("\n")
        text = re.sub(r"\n{3,}", "\n\n", text)
        return text + "\n"

    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]


_RESERVED = {"true", "false", "boole", "init_fl", "j"}


def sanitize(name: str) -> str:
    s = re.sub(r"[^A-Za-z0-9_]", "_", name)
    if not s or s[0].isdigit():
        s = "v_" + s
    return s


class Namer:
    """Global identifier registry; sanitization collisions are errors."""

    def __init__(self):
        self.taken: dict[str, str] = {}
        self.exact: set[str] = set()

    def claim(self, raw: str, origin: str) -> str:
        name = sanitize(raw)
        key = name.lower()
        if key in _RESERVED or re.fullmatch(r"[xyzi][0-9]+", key) or key.startswith("null_"):
            raise EncodeError("collision", f"{origin} {raw!r} clashes with a reserved MCMT identifier")
        prev = self.taken.get(key)
        if prev is not None and prev != origin:
            raise EncodeError("collision", f"{origin} and {prev} both sanitize to {name!r}")
        self.taken[key] = origin
        self.exact.add(name)
        return name

    def known(self, name: str) -> bool:
        # MCMT identifiers are case-sensitive; element variables only clash exactly
        return name in self.exact


def null(ty: str) -> str:
    return f"NULL_{sanitize(ty)}"


def const_name(v: Value) -> str:
    return sanitize(str(v))


def array(place: str, l: int) -> str:
    return f"{sanitize(place)}_{l}"


def mem_function(rel: str) -> str:
    return f"{sanitize(rel)}_mem"


def attr_function(rel: str, attr: str) -> str:
    return f"{sanitize(rel)}_{sanitize(attr)}"


# constants


def net_constants(net: Net, m0: Marking, prop: Optional[Property] = None) -> list[Value]:
    """Guard, inscription and initial-marking constants, plus the property's."""
    vals = set(net.constants()) | set(m0.values())
    if prop is not None:
        vals |= prop.consts()
    return sorted(vals)


def _schema_statements(domain: TypeDomain, schema: CatalogSchema, constants: Iterable[Value],
                       namer: Namer, diags: list[Diagnostic]) -> list[Statement]:
    out = []
    sorts = []
    for t in domain.types:
        sorts.append(namer.claim(t.name, f"type {t.name}"))
        out.append(Statement("smt", [f":smt (define_type {sorts[-1]})"]))
    out.append(Statement("smt", [":smt (define TRUE ::BOOLE)"]))
    out.append(Statement("smt", [":smt (define FALSE ::BOOLE)"]))
    functions = []
    for r in schema.relations:
        key_sort = sanitize(r.key_type)
        if r.arity == 1:
            name = namer.claim(mem_function(r.name), f"relation {r.name}")
            diags.append(Diagnostic(
                "key-only-relation",
                f"relation {r.name} has no non-key attribute; membership is encoded by {name} :: (-> {key_sort} BOOLE)",
                "warning", subject=("relation", r.name)))
            functions.append(name)
            out.append(Statement("smt", [f":smt (define {name} ::(-> {key_sort} BOOLE))"]))
            continue
        for a, ty in r.attributes[1:]:
            name = namer.claim(attr_function(r.name, a), f"attribute {r.name}.{a}")
            functions.append(name)
            out.append(Statement("smt", [f":smt (define {name} ::(-> {key_sort} {sanitize(ty)}))"]))
    consts = []
    for v in constants:
        name = namer.claim(str(v), f"constant {v}:{v.type}")
        consts.append(name)
        out.append(Statement("smt", [f":smt (define {name} ::{sanitize(v.type)})"]))
    block = [":db_driven", f":db_sorts {','.join(sorts)}"]
    if functions:
        block.append(f":db_functions {','.join(functions)}")
    if consts:
        block.append(f":db_constants {','.join(consts)}")
    out.append(Statement("db_driven", block))
    return out


def encode_schema(domain: TypeDomain, schema: CatalogSchema, constants: Iterable[Value] = (),
                  namer: Optional[Namer] = None) -> tuple[list[Statement], list[Diagnostic]]:
    diags: list[Diagnostic] = []
    return _schema_statements(domain, schema, sorted(set(constants)), namer or Namer(), diags), diags


# places and initial state


def _arrays(net: Net) -> list[tuple[str, str, str]]:
    """(place, array name, element sort) in declaration order."""
    return [(p.name, array(p.name, l), ty) for p in net.places for l, ty in enumerate(p.color, 1)]


def encode_places(net: Net, namer: Optional[Namer] = None) -> list[Statement]:
    if not net.places:
        raise EncodeError("no-places", "the net has no places; the initial state would be vacuous")
    namer = namer or Namer()
    out = []
    for p, name, ty in _arrays(net):
        namer.claim(name, f"place {p}")
        out.append(Statement("local", [f":local {name} {sanitize(ty)}"]))
    out.append(Statement("global", [":global init_fl BOOLE"]))
    cnj = " ".join(f"(= {a}[x] {null(ty)})" for _, a, ty in _arrays(net))
    out.append(Statement("initial", [":initial", ":var x", f":cnj {cnj} (= init_fl TRUE)"]))
    return out


def _variables(net: Net) -> list[tuple[str, str]]:
    """All state variables in declaration order: locals then the flag."""
    return [(a, ty) for _, a, ty in _arrays(net)] + [("init_fl", "BOOLE")]


def encode_initial_marking(net: Net, m0: Marking) -> Statement:
    tokens = [(p, tok) for p in [pl.name for pl in net.places] for tok in m0[p].elements()]
    idx = [f"i{n}" for n in range(1, len(tokens) + 1)]
    lines = [":transition"]
    lines += [f":var {i}" for i in idx]
    lines.append(":var j")
    guard = ["(= init_fl TRUE)"]
    guard += [f"(not (= {a} {b}))" for n, a in enumerate(idx) for b in idx[n + 1:]]
    lines.append(":guard " + " ".join(guard))
    variables = _variables(net)
    cases = []
    for i, (p, tok) in zip(idx, tokens):
        written = {array(p, l): const_name(v) for l, v in enumerate(tok, 1)}
        cases.append((f"(= j {i})", written))
    cases.append(("", {}))
    lines.append(f":numcases {len(cases)}")
    for cond, written in cases:
        lines.append(f":case {cond}".rstrip())
        for a, _ in variables:
            if a == "init_fl":
                lines.append(":val FALSE")
            else:
                lines.append(f":val {written.get(a, f'{a}[j]')}")
    return Statement("transition", lines, label="initial marking")


# transitions


def _dnf(c: Condition, positive: bool = True) -> list[list[tuple[bool, Eq]]]:
    """Disjunctive normal form as alternatives of signed equalities."""
    if isinstance(c, Top):
        return [[]] if positive else []
    if isinstance(c, Eq):
        return [[(positive, c)]]
    if isinstance(c, Not):
        return _dnf(c.arg, not positive)
    if positive:
        out: list[list[tuple[bool, Eq]]] = [[]]
        for a in c.args:
            out = [x + y for x in out for y in _dnf(a, True)]
        return out
    return [alt for a in c.args for alt in _dnf(a, False)]


def _eq_atom(positive: bool, left: str, right: str) -> str:
    return f"(= {left} {right})" if positive else f"(not (= {left} {right}))"


class _TransitionEncoder:
    def __init__(self, net: Net, t: Transition, namer: Namer):
        self.net, self.t, self.namer = net, t, namer
        self.arrays = _arrays(net)
        self.colors = {p.name: p.color for p in net.places}
        self.x: list[tuple[str, str, tuple]] = []  # (index, place, terms)
        self.y: list[tuple[str, str, tuple]] = []
        for p, ins in t.inputs:
            for i in ins:
                for _ in range(i.k):
                    self.x.append((f"x{len(self.x) + 1}", p, i.terms))
        for p, ins in t.outputs:
            for i in ins:
                for _ in range(i.k):
                    self.y.append((f"y{len(self.y) + 1}", p, i.terms))
        self.cell: dict[str, str] = {}
        self.pin: list[str] = []
        for n, (x, _, _) in enumerate(self.x):
            for x2, _, _ in self.x[n + 1:]:
                self.pin.append(f"(not (= {x} {x2}))")
        for x, p, terms in self.x:
            for l, term in enumerate(terms, 1):
                cell = f"{array(p, l)}[{x}]"
                self.pin.append(f"(not (= {cell} {null(self.colors[p][l - 1])}))")
                if isinstance(term, Const):
                    self.pin.append(f"(= {cell} {const_name(term.value)})")
                elif term.name in self.cell:
                    self.pin.append(f"(= {cell} {self.cell[term.name]})")
                else:
                    self.cell[term.name] = cell
        self.pout = []
        for n, (y, _, _) in enumerate(self.y):
            for y2, _, _ in self.y[n + 1:]:
                self.pout.append(f"(not (= {y} {y2}))")
        for y, _, _ in self.y:
            self.pout += [f"(= {a}[{y}] {null(ty)})" for _, a, ty in self.arrays]
        self.fresh = t.fresh_vars()

    def eevar(self, name: str) -> str:
        ev = sanitize(name)
        if self.namer.known(ev) or ev.startswith("NULL_") or re.fullmatch(r"[xyzi][0-9]+|j|init_fl|TRUE|FALSE|BOOLE", ev):
            raise EncodeError("collision", f"{self.t.name}: variable {name!r} clashes with a declared identifier")
        return ev

    def term(self, term, q_vars: set[str]) -> str:
        if isinstance(term, Const):
            return const_name(term.value)
        if term.name in self.cell:
            return self.cell[term.name]
        if term.name in q_vars or isinstance(term, Fresh):
            return self.eevar(term.name)
        raise EncodeError("unbound", f"{self.t.name}: variable {term.name} has no value provider")

    def statements(self) -> list[Statement]:
        t = self.t
        disjuncts = t.query.disjuncts if t.query is not None else [None]
        cond_alts = _dnf(t.condition)
        out = []
        for d in disjuncts:
            for q_alt in self._query_alternatives(d):
                for c_alt in cond_alts:
                    out.append(self._statement(d, q_alt, c_alt))
        return out

    def _query_alternatives(self, d) -> list[list[str]]:
        """Encoded Q^e per alternative (negated atoms expand into several)."""
        if d is None:
            return [[]]
        q_vars = {v.name for v in d.vars()}
        base: list[str] = []
        # variables read from input cells
        for v in sorted(d.vars()):
            if v.name in self.cell:
                base.append(f"(= {self.eevar(v.name)} {self.cell[v.name]})")
        for v in sorted(d.free()):
            if v.name not in self.cell:
                base.append(f"(not (= {self.eevar(v.name)} {null(v.type)}))")
        alts: list[list[str]] = [base]
        schema = self.net.schema
        for lit in d.literals:
            a = lit.atom
            rel = schema[a.relation]
            args = [self.term(x, q_vars) for x in a.args]
            key_null = null(rel.key_type)
            if rel.arity == 1:
                conj = [f"(not (= {args[0]} {key_null}))", f"(= ({mem_function(a.relation)} {args[0]}) TRUE)"]
                neg = [[f"(= ({mem_function(a.relation)} {args[0]}) FALSE)"]]
            else:
                conj = [f"(not (= {args[0]} {key_null}))"]
                conj += [f"(= ({attr_function(a.relation, attr)} {args[0]}) {z})"
                         for (attr, _), z in zip(rel.attributes[1:], args[1:])]
                neg = [[f"(= {args[0]} {key_null})"]]
                neg += [[f"(not (= ({attr_function(a.relation, attr)} {args[0]}) {z}))"]
                        for (attr, _), z in zip(rel.attributes[1:], args[1:])]
            if lit.positive:
                alts = [x + conj for x in alts]
            else:
                alts = [x + n for x in alts for n in neg]
        cond_alts = _dnf(d.condition)
        alts = [x + [_eq_atom(pos, self.term(e.left, q_vars), self.term(e.right, q_vars)) for pos, e in ca]
                for x in alts for ca in cond_alts]
        return alts

    def _statement(self, d, q_alt: list[str], c_alt) -> Statement:
        t = self.t
        q_vars = {v.name for v in d.vars()} if d is not None else set()
        ee: list[tuple[str, str]] = []
        if d is not None:
            ee += [(self.eevar(v.name), sanitize(v.type)) for v in sorted(d.vars())]
        ee += [(self.eevar(f.name), sanitize(f.type)) for f in self.fresh]
        lines = [":transition"]
        lines += [f":var {x}" for x, _, _ in self.x]
        lines += [f":var {y}" for y, _, _ in self.y]
        lines.append(":var j")
        lines += [f":eevar {n} {ty}" for n, ty in ee]
        guard = list(self.pin) + list(self.pout)
        guard += [f"(not (= {self.eevar(f.name)} {null(f.type)}))" for f in self.fresh]
        guard += q_alt
        guard += [_eq_atom(pos, self.term(e.left, q_vars), self.term(e.right, q_vars)) for pos, e in c_alt]
        guard.append("(= init_fl FALSE)")
        guard = list(dict.fromkeys(guard))
        lines.append(":guard " + " ".join(guard))
        if self.fresh:
            ug = []
            for f in self.fresh:
                nu = self.eevar(f.name)
                ug += [f"(not (= {nu} {a}[j]))" for _, a, ty in self.arrays if ty == f.type]
            if ug:
                lines.append(":uguard " + " ".join(ug))
        variables = _variables(self.net)
        cases = []
        for y, p, terms in self.y:
            written = {array(p, l): self.term(term, q_vars) for l, term in enumerate(terms, 1)}
            cases.append((f"(= j {y})", written))
        for x, p, terms in self.x:
            written = {array(p, l): null(ty) for l, ty in enumerate(self.colors[p], 1)}
            cases.append((f"(= j {x})", written))
        cases.append(("", {}))
        lines.append(f":numcases {len(cases)}")
        for cond, written in cases:
            lines.append(f":case {cond}".rstrip())
            for a, _ in variables:
                if a == "init_fl":
                    lines.append(":val init_fl")
                else:
                    lines.append(f":val {written.get(a, f'{a}[j]')}")
        return Statement("transition", lines, label=t.name)

    def budget(self) -> IndexBudget:
        return IndexBudget(self.t.name, len(self.x) + len(self.y), 1 if self.fresh else 0)


def encode_transition(net: Net, t: Transition, namer: Optional[Namer] = None
                      ) -> tuple[list[Statement], IndexBudget, list[Diagnostic]]:
    enc = _TransitionEncoder(net, t, namer or Namer())
    stmts = enc.statements()
    budget = enc.budget()
    diags = []
    if budget.exceeded:
        diags.append(Diagnostic(
            "index-budget",
            f"transition {t.name} uses {budget.existential} existential and {budget.universal} universal index "
            f"variables; MCMT currently supports two existentially quantified and one universally quantified",
            "warning", subject=("transition", t.name)))
    if not stmts:
        diags.append(Diagnostic("unsatisfiable-guard", f"transition {t.name} has an unsatisfiable condition",
                                "warning", subject=("transition", t.name)))
    return stmts, budget, diags


# property


def encode_property(net: Net, prop: Property) -> Statement:
    colors = {p.name: p.color for p in net.places}
    idx: list[str] = []
    cnj: list[str] = []
    cell: dict[str, str] = {}
    for lit in prop.literals:
        a = lit.atom
        if not isinstance(a, PlaceAtom):
            continue
        if not lit.positive:
            raise EncodeError("negated-place-atom", f"negated place atom {a} cannot be encoded")
        mine = []
        for _ in range(a.c):
            z = f"z{len(idx) + 1}"
            idx.append(z)
            mine.append(z)
            color = colors[a.place]
            for l, ty in enumerate(color, 1):
                c = f"{array(a.place, l)}[{z}]"
                cnj.append(f"(not (= {c} {null(ty)}))")
                if a.args is None:
                    continue
                term = a.args[l - 1]
                if isinstance(term, Const):
                    cnj.append(f"(= {c} {const_name(term.value)})")
                elif term.name in cell:
                    cnj.append(f"(= {c} {cell[term.name]})")
                else:
                    cell[term.name] = c
        cnj += [f"(not (= {u} {v}))" for n, u in enumerate(mine) for v in mine[n + 1:]]

    def render(term) -> str:
        if isinstance(term, Const):
            return const_name(term.value)
        if term.name not in cell:
            raise EncodeError("unbound", f"property variable {term.name} occurs in no positive place atom")
        return cell[term.name]

    schema = net.schema
    for lit in prop.literals:
        a = lit.atom
        if isinstance(a, PlaceAtom):
            continue
        rel = schema[a.relation]
        args = [render(x) for x in a.args]
        if rel.arity == 1:
            cnj.append(f"(= ({mem_function(a.relation)} {args[0]}) {'TRUE' if lit.positive else 'FALSE'})")
            continue
        atoms = [f"(= ({attr_function(a.relation, attr)} {args[0]}) {z})"
                 for (attr, _), z in zip(rel.attributes[1:], args[1:])]
        if lit.positive:
            cnj.append(f"(not (= {args[0]} {null(rel.key_type)}))")
            cnj += atoms
        elif len(atoms) == 1:
            cnj.append(f"(not {atoms[0]})")
        else:
            raise EncodeError("disjunctive-property", f"negated atom {a} would need a disjunctive unsafe formula")
    alts = _dnf(prop.condition)
    if len(alts) != 1:
        raise EncodeError("disjunctive-property", "the property condition is not a conjunction of literals")
    cnj += [_eq_atom(pos, render(e.left), render(e.right)) for pos, e in alts[0]]
    lines = [":unsafe"] + [f":var {z}" for z in idx]
    lines.append(":cnj " + " ".join(cnj) if cnj else ":cnj (= init_fl FALSE)")
    return Statement("unsafe", lines, label=prop.name)


def encode(net: Net, m0: Marking, prop: Property) -> McmtDocument:
    namer = Namer()
    doc = McmtDocument()
    constants = net_constants(net, m0, prop)
    doc.statements += _schema_statements(net.schema.domain, net.schema, constants, namer, doc.diagnostics)
    doc.statements += encode_places(net, namer)
    doc.statements.append(encode_initial_marking(net, m0))
    for t in net.transitions:
        stmts, budget, diags = encode_transition(net, t, namer)
        doc.statements += stmts
        doc.budgets.append(budget)
        doc.diagnostics += diags
    doc.statements.append(encode_property(net, prop))
    return doc


# structural checks over rendered text

_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_KEYWORDS = {"define_type", "define", "not", "BOOLE"}


def _blocks(text: str) -> list[list[str]]:
    return [b.splitlines() for b in text.strip().split("\n\n")]


def check_declarations(text: str) -> list[str]:
    """Identifiers used before being declared; empty when the document is well formed."""
    declared: set[str] = set()
    sorts: set[str] = set()
    problems = []
    for block in _blocks(text):
        local: set[str] = set()
        for line in block:
            head, _, rest = line.partition(" ")
            if head == ":smt":
                m = re.match(r"\(define_type (\w+)\)", rest)
                if m:
                    sorts.add(m.group(1))
                    declared.add(m.group(1))
                    continue
                m = re.match(r"\(define (\w+) ::(.*)\)$", rest)
                if not m:
                    problems.append(f"malformed declaration: {line}")
                    continue
                for s in _TOKEN.findall(m.group(2)):
                    if s != "BOOLE" and s not in sorts:
                        problems.append(f"sort {s} used before declaration in {line}")
                declared.add(m.group(1))
            elif head in (":local", ":global"):
                name, ty = rest.split()
                if ty != "BOOLE" and ty not in sorts:
                    problems.append(f"sort {ty} used before declaration in {line}")
                declared.add(name)
            elif head in (":db_sorts", ":db_functions", ":db_constants"):
                for s in rest.split(","):
                    if s not in declared:
                        problems.append(f"{s} listed in {head} before declaration")
            elif head == ":var":
                local.add(rest.strip())
            elif head == ":eevar":
                name, ty = rest.split()
                if ty not in sorts:
                    problems.append(f"sort {ty} used before declaration in {line}")
                local.add(name)
            elif head in (":guard", ":uguard", ":cnj", ":case", ":val"):
                for s in _TOKEN.findall(rest):
                    if s in _KEYWORDS or s in declared or s in local:
                        continue
                    if s.startswith("NULL_") and s[5:] in sorts:
                        continue
                    problems.append(f"{s} used before declaration in {line}")
    return problems


def check_one_place_per_index(text: str, net: Net) -> list[str]:
    """Each y index is guarded null in every array; each y or i index is written in one place only."""
    arrays = _arrays(net)
    owner = {a: p for p, a, _ in arrays}
    problems = []
    for block in _blocks(text):
        if block[0] != ":transition":
            continue
        ys = [l.split()[1] for l in block if re.fullmatch(r":var y[0-9]+", l)]
        guard = next((l for l in block if l.startswith(":guard ")), "")
        for y in ys:
            for _, a, ty in arrays:
                if f"(= {a}[{y}] {null(ty)})" not in guard:
                    problems.append(f"{y} not guarded null in {a}")
        # walk cases
        order = [a for _, a, _ in arrays] + ["init_fl"]
        i = 0
        while i < len(block):
            line = block[i]
            if line.startswith(":case"):
                cond = line[5:].strip()
                vals = block[i + 1:i + 1 + len(order)]
                m = re.fullmatch(r"\(= j ([yi][0-9]+)\)", cond)
                if m:
                    places = {owner[a] for a, v in zip(order, vals) if a in owner and v != f":val {a}[j]"}
                    if len(places) > 1:
                        problems.append(f"{m.group(1)} written into several places: {sorted(places)}")
                i += 1 + len(order)
            else:
                i += 1
    return problems


def count_index_vars(text: str) -> list[tuple[int, int]]:
    """(existential, universal) per net transition statement, recounted from :var lines."""
    out = []
    for block in _blocks(text):
        if block[0] != ":transition":
            continue
        vars_ = [l.split()[1] for l in block if l.startswith(":var ")]
        if any(v.startswith("i") and v[1:].isdigit() for v in vars_):
            continue
        ex = sum(1 for v in vars_ if v != "j")
        uni = 1 if any(l.startswith(":uguard") for l in block) else 0
        out.append((ex, uni))
    return out
