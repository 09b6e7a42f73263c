"""Parser and pretty-printer for the ``.clog`` project language.

The grammar is documented in ``docs/dsl.md``. Identifiers inside transitions,
guards and properties are variables; constants there are written as string
literals (``"veg"``) or pool values (``Order#0``). Inside ``facts``,
``catalog`` and ``marking`` blocks bare identifiers are constants.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .core import (
    CatalogInstance,
    CatalogSchema,
    DataType,
    Diagnostic,
    RelationSchema,
    TypeDomain,
    ValidationReport,
    Value,
    const,
    pool,
    validate_instance,
    validate_schema,
)
from .net import Fresh, Inscription, Marking, Net, Place, Transition, validate_net
from .props import PlaceAtom, Property, PropLiteral, PropertyError, typecheck_property
from .query import (
    TOP,
    And,
    Condition,
    ConjunctiveQuery,
    Const,
    Eq,
    Literal,
    Not,
    RelAtom,
    Top,
    UnionQuery,
    Var,
    conj,
)


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    col_start: int
    col_end: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col_start}-{self.col_end}"


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


KEYWORDS = {
    "include", "type", "relation", "key", "facts", "catalog", "place", "transition",
    "in", "out", "guard", "when", "marking", "property", "exists", "and", "or", "not",
    "nu", "true",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<pool>[A-Za-z_][A-Za-z0-9_]*\#[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<string>"[^"\n]*")
  | (?P<op>->|!=|>=|[(){}\[\],;:.*+=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text: str, filename: str = "<input>") -> list[Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            span = SourceSpan(filename, line, col, col + 1)
            raise ParseError([Diagnostic("lex", f"unexpected character {text[pos]!r}", span=span)])
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "ident" and s in KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, s, SourceSpan(filename, line, col, col + len(s))))
        pos = m.end()
    toks.append(Tok("eof", "", SourceSpan(filename, line, pos - line_start + 1, pos - line_start + 1)))
    return toks


# raw syntax trees, typed after the whole project has been read


@dataclass
class RawTerm:
    kind: str  # "name", "string", "pool", "nu"
    text: str
    span: SourceSpan
    index: int = 0


@dataclass
class RawAtom:
    name: str
    args: list[RawTerm]
    span: SourceSpan


@dataclass
class RawPlaceAtom:
    place: str
    args: Optional[list[RawTerm]]
    c: int
    span: SourceSpan


@dataclass
class RawCond:
    op: str  # "eq", "neq", "not", "and", "true"
    args: list
    span: SourceSpan


@dataclass
class RawLit:
    atom: Union[RawAtom, RawPlaceAtom]
    positive: bool


@dataclass
class RawCQ:
    # (name, span, declared type or None)
    exists: list[tuple[str, SourceSpan, Optional[tuple[str, SourceSpan]]]]
    literals: list[RawLit]
    conds: list[RawCond]
    span: SourceSpan


@dataclass
class RawInscription:
    k: int
    terms: list[RawTerm]
    span: SourceSpan


@dataclass
class RawTransition:
    name: str
    span: SourceSpan
    inputs: list[tuple[str, list[RawInscription], SourceSpan]] = field(default_factory=list)
    outputs: list[tuple[str, list[RawInscription], SourceSpan]] = field(default_factory=list)
    guard: Optional[list[RawCQ]] = None
    when: Optional[list[RawCond]] = None


@dataclass
class Project:
    domain: TypeDomain
    schema: CatalogSchema
    net: Net
    catalogs: dict[str, CatalogInstance]
    markings: dict[str, Marking]
    properties: dict[str, Property]
    spans: dict[tuple[str, str], SourceSpan] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)

    def catalog(self, name: Optional[str] = None) -> CatalogInstance:
        if name is None:
            name = "default" if "default" in self.catalogs else next(iter(self.catalogs), None)
        if name is None:
            return CatalogInstance(self.schema)
        return self.catalogs[name]

    def marking(self, name: Optional[str] = None) -> Marking:
        if name is None:
            name = "initial" if "initial" in self.markings else next(iter(self.markings), None)
        if name is None:
            return Marking()
        return self.markings[name]

    def span_of(self, subject) -> Optional[SourceSpan]:
        return self.spans.get(subject) if subject else None

    def validate(self) -> ValidationReport:
        """Run every validator; diagnostics are located through their subject."""
        report = ValidationReport()
        report.extend(validate_schema(self.schema))
        report.extend(validate_net(self.net))
        for name, cat in self.catalogs.items():
            for d in validate_instance(cat):
                report.add(d.code, f"catalog {name}: {d.message}", d.severity, subject=("catalog", name))
        for name, m in self.markings.items():
            for p in m.places():
                try:
                    color = self.net.place(p).color
                except KeyError:
                    report.add("unknown-place", f"marking {name} uses unknown place {p}", subject=("marking", name))
                    continue
                for tok in m[p].support():
                    if tuple(v.type for v in tok) != color:
                        report.add("marking-type", f"marking {name}: token {tuple(map(str, tok))} does not fit {p}",
                                   subject=("marking", name))
        for name, prop in self.properties.items():
            try:
                typecheck_property(self.net, prop)
            except PropertyError as exc:
                for e in exc.errors:
                    report.add("property", f"property {name}: {e}", subject=("property", name))
        located = ValidationReport()
        for d in report:
            span = d.span or self.span_of(d.subject) or SourceSpan(self.files[0] if self.files else "<input>", 1, 1, 1)
            located.entries.append(Diagnostic(d.code, d.message, d.severity, span, d.subject))
        return located


class _Parser:
    def __init__(self, toks: list[Tok]):
        self.toks = toks
        self.i = 0

    @property
    def cur(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, expected: Iterable[str]) -> ParseError:
        exp = ", ".join(sorted(set(expected)))
        got = self.cur.text or "end of file"
        return ParseError([Diagnostic("syntax", f"expected {exp}, found {got!r}", span=self.cur.span)])

    def at(self, *texts: str) -> bool:
        return self.cur.text in texts and self.cur.kind in ("kw", "op")

    def accept(self, text: str) -> Optional[Tok]:
        if self.cur.text == text and self.cur.kind in ("kw", "op"):
            tok = self.cur
            self.i += 1
            return tok
        return None

    def expect(self, text: str) -> Tok:
        tok = self.accept(text)
        if tok is None:
            raise self.error([repr(text)])
        return tok

    def ident(self, what: str = "identifier") -> Tok:
        if self.cur.kind != "ident":
            raise self.error([what])
        tok = self.cur
        self.i += 1
        return tok

    def integer(self) -> int:
        if self.cur.kind != "int":
            raise self.error(["integer"])
        tok = self.cur
        self.i += 1
        return int(tok.text)


class _Builder:
    """Accumulates declarations from one or more files."""

    def __init__(self):
        self.types: list[DataType] = []
        self.relations: list[tuple[str, list[tuple[str, str, SourceSpan]], Optional[int], list[tuple[int, str]], SourceSpan]] = []
        self.places: list[tuple[str, list[tuple[str, SourceSpan]], SourceSpan]] = []
        self.transitions: list[RawTransition] = []
        self.catalogs: dict[str, list[tuple[str, list[tuple[int, list[RawTerm]]], SourceSpan]]] = {}
        self.markings: dict[str, list[tuple[str, list[tuple[int, list[RawTerm]]], SourceSpan]]] = {}
        self.properties: list[tuple[str, RawCQ, SourceSpan]] = []
        self.spans: dict[tuple[str, str], SourceSpan] = {}
        self.files: list[str] = []
        self.diags: list[Diagnostic] = []

    def declare(self, kind: str, name: str, span: SourceSpan) -> None:
        if (kind, name) in self.spans:
            self.diags.append(Diagnostic("duplicate", f"{kind} {name} declared twice", span=span))
        self.spans[(kind, name)] = span

    # file level

    def read_file(self, path: str, seen: tuple[str, ...] = ()) -> None:
        path = os.path.normpath(path)
        if path in seen:
            self.diags.append(Diagnostic("include-cycle", f"include cycle through {path}",
                                         span=SourceSpan(path, 1, 1, 1)))
            return
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError([Diagnostic("io", str(exc), span=SourceSpan(path, 1, 1, 1))]) from None
        self.files.append(path)
        self.read_text(text, path, seen + (path,))

    def read_text(self, text: str, filename: str, seen: tuple[str, ...] = ()) -> None:
        p = _Parser(tokenize(text, filename))
        while p.cur.kind != "eof":
            self.item(p, filename, seen)

    def item(self, p: _Parser, filename: str, seen) -> None:
        tok = p.cur
        if p.accept("include"):
            if p.cur.kind != "string":
                raise p.error(["file name string"])
            rel = p.cur.text[1:-1]
            p.i += 1
            p.expect(";")
            base = os.path.dirname(filename) if filename != "<input>" else "."
            self.read_file(os.path.join(base, rel), seen)
        elif p.accept("type"):
            name = p.ident("type name")
            values = None
            if p.accept("="):
                p.expect("{")
                values = [p.ident("constant").text]
                while p.accept(","):
                    values.append(p.ident("constant").text)
                p.expect("}")
            p.expect(";")
            self.declare("type", name.text, name.span)
            self.types.append(DataType(name.text, tuple(values) if values is not None else None))
        elif p.accept("relation"):
            self.relation(p)
        elif p.accept("facts"):
            self.facts_block(p, "default")
        elif p.accept("catalog"):
            name = "default"
            if p.cur.kind == "ident":
                name = p.ident().text
            self.declare("catalog", name, tok.span)
            self.catalogs.setdefault(name, [])
            p.expect("{")
            while not p.accept("}"):
                if p.accept("facts"):
                    self.facts_block(p, name)
                else:
                    self.facts_block(p, name)
        elif p.accept("place"):
            name = p.ident("place name")
            p.expect(":")
            color = [self._type_ref(p)]
            while p.accept("*"):
                color.append(self._type_ref(p))
            p.expect(";")
            self.declare("place", name.text, name.span)
            self.places.append((name.text, color, name.span))
        elif p.accept("transition"):
            self.transition(p)
        elif p.accept("marking"):
            name = "initial"
            if p.cur.kind == "ident":
                name = p.ident().text
            self.declare("marking", name, tok.span)
            rows = self.markings.setdefault(name, [])
            p.expect("{")
            while not p.accept("}"):
                place = p.ident("place name")
                rows.append((place.text, self.rows(p), place.span))
        elif p.accept("property"):
            name = p.ident("property name")
            p.expect(":")
            cq = self.cq(p, allow_places=True)
            p.expect(";")
            self.declare("property", name.text, name.span)
            self.properties.append((name.text, cq, name.span))
        else:
            raise p.error(["'include'", "'type'", "'relation'", "'facts'", "'catalog'", "'place'",
                           "'transition'", "'marking'", "'property'"])

    def _type_ref(self, p: _Parser) -> tuple[str, SourceSpan]:
        t = p.ident("type name")
        return t.text, t.span

    def relation(self, p: _Parser) -> None:
        name = p.ident("relation name")
        p.expect("(")
        attrs = []
        key_index = None
        fks = []
        while True:
            a = p.ident("attribute name")
            p.expect(":")
            ty = p.ident("type name")
            if p.accept("key"):
                if key_index is not None:
                    self.diags.append(Diagnostic("syntax", f"{name.text}: more than one key attribute", span=a.span))
                key_index = len(attrs)
            if p.accept("->"):
                fks.append((len(attrs), p.ident("relation name").text))
            attrs.append((a.text, ty.text, ty.span))
            if not p.accept(","):
                break
        p.expect(")")
        p.expect(";")
        self.declare("relation", name.text, name.span)
        self.relations.append((name.text, attrs, key_index, fks, name.span))

    def facts_block(self, p: _Parser, catalog: str) -> None:
        rel = p.ident("relation name")
        self.catalogs.setdefault(catalog, []).append((rel.text, self.rows(p), rel.span))

    def rows(self, p: _Parser) -> list[tuple[int, list[RawTerm]]]:
        p.expect("{")
        rows = []
        if p.accept("}"):
            return rows
        while True:
            k = 1
            if p.cur.kind == "int" and p.peek().text == "*":
                k = p.integer()
                p.expect("*")
            vals = [self.value(p)]
            while p.accept(","):
                vals.append(self.value(p))
            rows.append((k, vals))
            if p.accept("}"):
                return rows
            p.expect(";")
            if p.accept("}"):
                return rows

    def value(self, p: _Parser) -> RawTerm:
        tok = p.cur
        if tok.kind in ("ident", "string"):
            p.i += 1
            text = tok.text[1:-1] if tok.kind == "string" else tok.text
            return RawTerm("string", text, tok.span)
        if tok.kind == "pool":
            p.i += 1
            ty, idx = tok.text.split("#")
            return RawTerm("pool", ty, tok.span, int(idx))
        raise p.error(["value"])

    def term(self, p: _Parser, allow_nu: bool = False) -> RawTerm:
        tok = p.cur
        if allow_nu and p.accept("nu"):
            name = p.ident("variable name")
            return RawTerm("nu", name.text, name.span)
        if tok.kind == "ident":
            p.i += 1
            return RawTerm("name", tok.text, tok.span)
        if tok.kind == "string":
            p.i += 1
            return RawTerm("string", tok.text[1:-1], tok.span)
        if tok.kind == "pool":
            p.i += 1
            ty, idx = tok.text.split("#")
            return RawTerm("pool", ty, tok.span, int(idx))
        raise p.error(["term"] + (["'nu'"] if allow_nu else []))

    def transition(self, p: _Parser) -> None:
        name = p.ident("transition name")
        self.declare("transition", name.text, name.span)
        rt = RawTransition(name.text, name.span)
        p.expect("{")
        while not p.accept("}"):
            if p.at("in", "out"):
                side = p.cur.text
                p.i += 1
                place = p.ident("place name")
                ins = [self.inscription(p, side == "out")]
                while p.accept("+"):
                    ins.append(self.inscription(p, side == "out"))
                p.expect(";")
                (rt.inputs if side == "in" else rt.outputs).append((place.text, ins, place.span))
            elif p.at("guard"):
                if rt.guard is not None:
                    self.diags.append(Diagnostic("syntax", f"{name.text}: more than one guard clause; "
                                                 "join them with 'and' or 'or'", span=p.cur.span))
                p.i += 1
                disjuncts = [self.cq(p)]
                while p.accept("or"):
                    disjuncts.append(self.cq(p))
                p.expect(";")
                rt.guard = (rt.guard or []) + disjuncts
            elif p.accept("when"):
                conds = [self.cond_atom(p)]
                while p.accept("and"):
                    conds.append(self.cond_atom(p))
                p.expect(";")
                rt.when = (rt.when or []) + conds
            else:
                raise p.error(["'in'", "'out'", "'guard'", "'when'", "'}'"])
        self.transitions.append(rt)

    def inscription(self, p: _Parser, allow_nu: bool) -> RawInscription:
        start = p.cur.span
        k = 1
        if p.cur.kind == "int":
            k = p.integer()
            p.expect("*")
        if p.accept("("):
            terms = [self.term(p, allow_nu)]
            while p.accept(","):
                terms.append(self.term(p, allow_nu))
            p.expect(")")
        else:
            terms = [self.term(p, allow_nu)]
        return RawInscription(k, terms, start)

    def cq(self, p: _Parser, allow_places: bool = False) -> RawCQ:
        start = p.cur.span
        exists = []
        if p.accept("exists"):
            exists.append(self.binder(p))
            while p.accept(","):
                exists.append(self.binder(p))
            p.expect(".")
        lits: list[RawLit] = []
        conds: list[RawCond] = []
        while True:
            self.cq_literal(p, lits, conds, allow_places)
            if not p.accept("and"):
                break
        return RawCQ(exists, lits, conds, start)

    def binder(self, p: _Parser):
        v = p.ident("variable name")
        ty = None
        if p.accept(":"):
            t = p.ident("type name")
            ty = (t.text, t.span)
        return v.text, v.span, ty

    def cq_literal(self, p: _Parser, lits, conds, allow_places: bool) -> None:
        if p.at("not"):
            nxt = p.peek()
            if (nxt.kind == "ident" and p.peek(2).text == "(") or (allow_places and nxt.text == "["):
                p.i += 1
                lits.append(RawLit(self.atom(p, allow_places), False))
                return
        if (p.cur.kind == "ident" and p.peek().text == "(") or (allow_places and p.at("[")):
            lits.append(RawLit(self.atom(p, allow_places), True))
            return
        conds.append(self.cond_atom(p))

    def atom(self, p: _Parser, allow_places: bool):
        if allow_places and p.accept("["):
            place = p.ident("place name")
            args = None
            if p.accept("("):
                args = [self.term(p)]
                while p.accept(","):
                    args.append(self.term(p))
                p.expect(")")
            p.expect(">=")
            c = p.integer()
            p.expect("]")
            return RawPlaceAtom(place.text, args, c, place.span)
        name = p.ident("relation name")
        p.expect("(")
        args = [self.term(p)]
        while p.accept(","):
            args.append(self.term(p))
        p.expect(")")
        return RawAtom(name.text, args, name.span)

    def cond_atom(self, p: _Parser) -> RawCond:
        tok = p.cur
        if p.accept("not"):
            return RawCond("not", [self.cond_atom(p)], tok.span)
        if p.accept("true"):
            return RawCond("true", [], tok.span)
        if p.accept("("):
            parts = [self.cond_atom(p)]
            while p.accept("and"):
                parts.append(self.cond_atom(p))
            p.expect(")")
            return parts[0] if len(parts) == 1 else RawCond("and", parts, tok.span)
        left = self.term(p)
        if p.accept("="):
            op = "eq"
        elif p.accept("!="):
            op = "neq"
        else:
            raise p.error(["'='", "'!='"])
        right = self.term(p)
        return RawCond(op, [left, right], tok.span)


class _Resolver:
    """Turns raw declarations into typed model objects."""

    def __init__(self, b: _Builder):
        self.b = b
        self.diags = b.diags
        self.type_names = {t.name for t in b.types}

    def err(self, code: str, msg: str, span: SourceSpan) -> None:
        self.diags.append(Diagnostic(code, msg, span=span))

    def run(self) -> Project:
        b = self.b
        # duplicates are already reported; the first declaration wins
        first: dict[str, DataType] = {}
        for t in b.types:
            first.setdefault(t.name, t)
        domain = TypeDomain(tuple(first.values()))
        rels = []
        for name, attrs, key_index, fks, span in b.relations:
            for a, ty, tspan in attrs:
                if ty not in self.type_names:
                    self.err("unknown-type", f"unknown type {ty} for {name}.{a}", tspan)
            rels.append(RelationSchema(name, tuple((a, ty) for a, ty, _ in attrs), tuple(fks), key_index or 0))
        schema = CatalogSchema(domain, tuple(rels))
        self.schema = schema
        places = []
        self.colors = {}
        for name, color, span in b.places:
            for ty, tspan in color:
                if ty not in self.type_names:
                    self.err("unknown-type", f"unknown type {ty} in color of place {name}", tspan)
            places.append(Place(name, tuple(ty for ty, _ in color)))
            self.colors[name] = tuple(ty for ty, _ in color)
        transitions = [self.transition(rt) for rt in b.transitions]
        net = Net(schema, tuple(places), tuple(transitions))
        catalogs = {}
        for name, blocks in b.catalogs.items():
            facts: dict[str, list] = {}
            for rel, rows, span in blocks:
                if rel not in schema:
                    self.err("unknown-relation", f"facts for unknown relation {rel}", span)
                    continue
                types = schema[rel].types()
                for k, vals in rows:
                    if len(vals) != len(types):
                        self.err("arity", f"fact for {rel} has {len(vals)} value(s), {rel} has arity {len(types)}",
                                 vals[0].span)
                        continue
                    facts.setdefault(rel, []).append(tuple(self.value(v, ty) for v, ty in zip(vals, types)))
            catalogs[name] = CatalogInstance(schema, facts)
        markings = {}
        for name, rows in b.markings.items():
            data: dict[str, list] = {}
            for place, toks, span in rows:
                if place not in self.colors:
                    self.err("unknown-place", f"marking {name} refers to unknown place {place}", span)
                    continue
                color = self.colors[place]
                lst = data.setdefault(place, [])
                for k, vals in toks:
                    if len(vals) != len(color):
                        self.err("arity", f"token for {place} has arity {len(vals)}, color has arity {len(color)}",
                                 vals[0].span)
                        continue
                    tok = tuple(self.value(v, ty) for v, ty in zip(vals, color))
                    lst.extend([tok] * k)
            markings[name] = Marking(data)
        props = {}
        for name, cq, span in b.properties:
            props[name] = self.prop(name, cq)
        return Project(domain, schema, net, catalogs, markings, props, dict(b.spans), list(b.files))

    def value(self, v: RawTerm, ty: str) -> Value:
        if v.kind == "pool":
            if v.text != ty:
                self.err("type", f"pool value {v.text}#{v.index} used where {ty} is expected", v.span)
            return pool(ty, v.index)
        return const(ty, v.text)

    # typing of variables

    def _infer(self, env: dict[str, str], spans: dict[str, SourceSpan], name: str, ty: Optional[str],
               span: SourceSpan) -> None:
        if ty is None:
            return
        prev = env.get(name)
        if prev is None:
            env[name] = ty
            spans[name] = span
        elif prev != ty:
            self.err("var-typing", f"variable {name} used as {prev} and as {ty}", span)

    def _declared(self, cq: RawCQ, env: dict[str, str], spans: dict[str, SourceSpan]) -> None:
        for n, span, ty in cq.exists:
            if ty is None:
                continue
            if ty[0] not in self.type_names:
                self.err("unknown-type", f"unknown type {ty[0]} for variable {n}", ty[1])
                continue
            self._infer(env, spans, n, ty[0], span)

    def _atom_types(self, atom: RawAtom) -> Optional[tuple[str, ...]]:
        if atom.name not in self.schema:
            self.err("unknown-relation", f"unknown relation {atom.name}", atom.span)
            return None
        types = self.schema[atom.name].types()
        if len(types) != len(atom.args):
            self.err("arity", f"atom {atom.name} has {len(atom.args)} arguments, relation has arity {len(types)}",
                     atom.span)
            return None
        return types

    def _cond_infer(self, c: RawCond, env: dict[str, str], spans) -> None:
        if c.op in ("eq", "neq"):
            l, r = c.args
            lt = self._term_type(l, env)
            rt = self._term_type(r, env)
            if l.kind == "name" and rt:
                self._infer(env, spans, l.text, rt, l.span)
            if r.kind == "name" and lt:
                self._infer(env, spans, r.text, lt, r.span)
        else:
            for a in c.args:
                self._cond_infer(a, env, spans)

    def _term_type(self, t: RawTerm, env: dict[str, str]) -> Optional[str]:
        if t.kind == "pool":
            return t.text
        if t.kind in ("name", "nu"):
            return env.get(t.text)
        return None

    def _term(self, t: RawTerm, env: dict[str, str], expected: Optional[str] = None):
        if t.kind == "name":
            ty = env.get(t.text)
            if ty is None:
                self.err("untyped", f"cannot infer the type of variable {t.text}", t.span)
            return Var(t.text, ty)
        if t.kind == "nu":
            return Fresh(t.text, env.get(t.text))
        if t.kind == "pool":
            return Const(pool(t.text, t.index))
        ty = expected
        if ty is None:
            self.err("untyped", f"cannot infer the type of constant \"{t.text}\"", t.span)
            ty = "?"
        return Const(const(ty, t.text))

    def _cond(self, c: RawCond, env: dict[str, str]) -> Condition:
        if c.op == "true":
            return TOP
        if c.op == "not":
            return Not(self._cond(c.args[0], env))
        if c.op == "and":
            return conj(*(self._cond(a, env) for a in c.args))
        l, r = c.args
        lt = self._term_type(l, env)
        rt = self._term_type(r, env)
        left = self._term(l, env, rt)
        right = self._term(r, env, lt)
        eq = Eq(left, right)
        return eq if c.op == "eq" else Not(eq)

    def _cq(self, cq: RawCQ, env: dict[str, str]) -> ConjunctiveQuery:
        lits = []
        for lit in cq.literals:
            atom = lit.atom
            types = self._atom_types(atom)
            if types is None:
                continue
            args = tuple(self._term(a, env, ty) for a, ty in zip(atom.args, types))
            lits.append(Literal(RelAtom(atom.name, args), lit.positive))
        cond = conj(*(self._cond(c, env) for c in cq.conds))
        exists = tuple(Var(n, env.get(n)) for n, _, _ in cq.exists)
        return ConjunctiveQuery(tuple(lits), cond, exists)

    def transition(self, rt: RawTransition) -> Transition:
        env: dict[str, str] = {}
        spans: dict[str, SourceSpan] = {}
        for side, arcs in (("input", rt.inputs), ("output", rt.outputs)):
            for place, ins, span in arcs:
                color = self.colors.get(place)
                if color is None:
                    self.err("unknown-place", f"{rt.name}: arc to unknown place {place}", span)
                    continue
                for i in ins:
                    if len(i.terms) != len(color):
                        self.err("arity",
                                 f"{rt.name}: inscription on {place} has arity {len(i.terms)}, "
                                 f"color of {place} has arity {len(color)}", i.span)
                        continue
                    for term, ty in zip(i.terms, color):
                        if term.kind in ("name", "nu"):
                            self._infer(env, spans, term.text, ty, term.span)
        for cq in rt.guard or ():
            scoped = dict(env)
            self._declared(cq, scoped, spans)
            for lit in cq.literals:
                types = self._atom_types(lit.atom) if lit.atom.name in self.schema else None
                if types and len(types) == len(lit.atom.args):
                    for a, ty in zip(lit.atom.args, types):
                        if a.kind == "name":
                            self._infer(scoped, spans, a.text, ty, a.span)
            for c in cq.conds:
                self._cond_infer(c, scoped, spans)
            for n, v in scoped.items():
                if n not in {e for e, _, _ in cq.exists}:
                    env.setdefault(n, v)
        for c in rt.when or ():
            self._cond_infer(c, env, spans)

        def arcs(lst) -> tuple:
            out: dict[str, tuple[Inscription, ...]] = {}
            for place, ins, _ in lst:
                color = self.colors.get(place)
                if color is None:
                    continue
                built = []
                for i in ins:
                    if len(i.terms) != len(color):
                        continue
                    built.append(Inscription(tuple(self._term(t, env, ty) for t, ty in zip(i.terms, color)), i.k))
                out[place] = out.get(place, ()) + tuple(built)
            return tuple(out.items())

        query = None
        condition: Condition = TOP
        disjuncts = []
        for cq in rt.guard or ():
            scoped = dict(env)
            for n, _, ty in cq.exists:
                if ty is not None and ty[0] in self.type_names:
                    scoped[n] = ty[0]
            for lit in cq.literals:
                if lit.atom.name in self.schema:
                    types = self.schema[lit.atom.name].types()
                    for a, ty in zip(lit.atom.args, types):
                        if a.kind == "name" and a.text in {e for e, _, _ in cq.exists}:
                            scoped[a.text] = ty
            disjuncts.append(self._cq(cq, scoped))
        if len(disjuncts) == 1 and not disjuncts[0].literals and not disjuncts[0].exists:
            # a guard made only of equalities is a condition on input data
            condition = disjuncts[0].condition
        elif disjuncts:
            query = UnionQuery(tuple(disjuncts))
        if rt.when:
            condition = conj(condition, *(self._cond(c, env) for c in rt.when))
        return Transition(rt.name, arcs(rt.inputs), arcs(rt.outputs), query, condition)

    def prop(self, name: str, cq: RawCQ) -> Property:
        env: dict[str, str] = {}
        spans: dict[str, SourceSpan] = {}
        self._declared(cq, env, spans)
        for lit in cq.literals:
            a = lit.atom
            if isinstance(a, RawPlaceAtom):
                color = self.colors.get(a.place)
                if color is None or a.args is None or len(a.args) != len(color):
                    continue
                for t, ty in zip(a.args, color):
                    if t.kind == "name":
                        self._infer(env, spans, t.text, ty, t.span)
            elif a.name in self.schema:
                types = self.schema[a.name].types()
                if len(types) == len(a.args):
                    for t, ty in zip(a.args, types):
                        if t.kind == "name":
                            self._infer(env, spans, t.text, ty, t.span)
        for c in cq.conds:
            self._cond_infer(c, env, spans)
        lits = []
        for lit in cq.literals:
            a = lit.atom
            if isinstance(a, RawPlaceAtom):
                color = self.colors.get(a.place)
                args = None
                if a.args is not None:
                    if color is not None and len(color) == len(a.args):
                        args = tuple(self._term(t, env, ty) for t, ty in zip(a.args, color))
                    else:
                        args = tuple(self._term(t, env) for t in a.args)
                lits.append(PropLiteral(PlaceAtom(a.place, args, a.c), lit.positive))
            else:
                types = self._atom_types(a)
                if types is None:
                    continue
                lits.append(PropLiteral(RelAtom(a.name, tuple(self._term(t, env, ty) for t, ty in zip(a.args, types))),
                                        lit.positive))
        cond = conj(*(self._cond(c, env) for c in cq.conds))
        exists = tuple(Var(n, env.get(n)) for n, _, _ in cq.exists)
        return Property(name, exists, tuple(lits), cond)


def parse_project(paths: Union[str, Iterable[str]]) -> Project:
    """Parse one or more project files; raise ParseError with all diagnostics."""
    if isinstance(paths, str):
        paths = [paths]
    b = _Builder()
    for path in paths:
        b.read_file(path)
    return _finish(b)


def parse_text(text: str, filename: str = "<input>") -> Project:
    b = _Builder()
    b.files.append(filename)
    b.read_text(text, filename)
    return _finish(b)


def _finish(b: _Builder) -> Project:
    project = _Resolver(b).run()
    if b.diags:
        raise ParseError(b.diags)
    return project


# pretty-printing


def _q(v: Value) -> str:
    return str(v) if v.is_pool else f'"{v.payload}"'


def _bare(v: Value) -> str:
    if v.is_pool:
        return str(v)
    s = str(v.payload)
    return s if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", s) and s not in KEYWORDS else f'"{s}"'


def _term_src(t) -> str:
    if isinstance(t, Const):
        return _q(t.value)
    if isinstance(t, Fresh):
        return f"nu {t.name}"
    return t.name


def _cond_src(c: Condition) -> str:
    if isinstance(c, Top):
        return "true"
    if isinstance(c, Eq):
        return f"{_term_src(c.left)} = {_term_src(c.right)}"
    if isinstance(c, Not):
        if isinstance(c.arg, Eq):
            return f"{_term_src(c.arg.left)} != {_term_src(c.arg.right)}"
        return f"not {_cond_src(c.arg)}"
    return "(" + " and ".join(_cond_src(a) for a in c.args) + ")"


def _atom_src(a) -> str:
    if isinstance(a, PlaceAtom):
        if a.args is None:
            return f"[{a.place} >= {a.c}]"
        return f"[{a.place}({', '.join(_term_src(t) for t in a.args)}) >= {a.c}]"
    return f"{a.relation}({', '.join(_term_src(t) for t in a.args)})"


def _body_src(exists, literals, condition) -> str:
    parts = [("" if l.positive else "not ") + _atom_src(l.atom) for l in literals]
    if isinstance(condition, And):
        parts.extend(_cond_src(c) for c in condition.args)
    elif not isinstance(condition, Top) or not parts:
        parts.append(_cond_src(condition))
    body = " and ".join(parts)
    if exists:
        return f"exists {', '.join(f'{v.name}: {v.type}' for v in exists)}. {body}"
    return body


def _rows_src(rows) -> str:
    parts = []
    for tok, c in rows:
        s = ", ".join(_bare(v) for v in tok)
        parts.append(s if c == 1 else f"{c} * {s}")
    return "{ " + "; ".join(parts) + " }" if parts else "{ }"


def format_project(project: Project) -> str:
    out = []
    for t in project.domain.types:
        if t.values is None:
            out.append(f"type {t.name};")
        else:
            out.append(f"type {t.name} = {{{', '.join(t.values)}}};")
    for r in project.schema.relations:
        fks = dict(r.fks)
        attrs = []
        for i, (a, ty) in enumerate(r.attributes):
            s = f"{a}: {ty}"
            if i == 0:
                s += " key"
            if i in fks:
                s += f" -> {fks[i]}"
            attrs.append(s)
        out.append(f"relation {r.name}({', '.join(attrs)});")
    out.append("")
    for p in project.net.places:
        out.append(f"place {p.name}: {' * '.join(p.color)};")
    out.append("")
    for t in project.net.transitions:
        out.append(f"transition {t.name} {{")
        for side, arcs in (("in", t.inputs), ("out", t.outputs)):
            for place, ins in arcs:
                rendered = []
                for i in ins:
                    body = ", ".join(_term_src(x) for x in i.terms)
                    s = f"({body})"
                    rendered.append(s if i.k == 1 else f"{i.k} * {s}")
                out.append(f"  {side} {place} {' + '.join(rendered)};")
        if t.query is not None:
            out.append("  guard " + " or ".join(_body_src(d.exists, d.literals, d.condition) for d in t.query.disjuncts) + ";")
        if not isinstance(t.condition, Top):
            conds = t.condition.args if isinstance(t.condition, And) else (t.condition,)
            out.append("  when " + " and ".join(_cond_src(c) for c in conds) + ";")
        out.append("}")
    for name, cat in project.catalogs.items():
        out.append("")
        out.append(f"catalog {name} {{")
        for rel in cat.relations():
            rows = cat.facts(rel)
            if rows:
                out.append(f"  {rel} {_rows_src([(row, 1) for row in rows])}")
        out.append("}")
    for name, m in project.markings.items():
        out.append("")
        out.append(f"marking {name} {{")
        for p in m.places():
            out.append(f"  {p} {_rows_src(m[p].items())}")
        out.append("}")
    if project.properties:
        out.append("")
    for name, prop in project.properties.items():
        out.append(f"property {name}: {_body_src(prop.exists, prop.literals, prop.condition)};")
    return "\n".join(out) + "\n"
