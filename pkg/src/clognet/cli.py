"""Command-line surface: validate, simulate, check, pcheck, encode, classify.

Exit status is 0 for ok/SAFE, 2 for UNSAFE and 1 for any error. Every command
prints either a human-readable transcript (``--format text``) or a JSON
document (``--format structured``); neither contains timings, so repeated runs
are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
from typing import Optional, Sequence

from .core import CatalogInstance, Value, const, fk_graph_acyclic, pool
from .dsl import ParseError, Project, format_project, parse_project
from .explore import (
    ExplorationLimits,
    Verdict,
    Witness,
    check_bounded,
    check_safety,
    parameterised_check,
)
from .mcmt import EncodeError, encode
from .net import (
    FreshPolicy,
    Marking,
    NotEnabled,
    enabled_bindings,
    fire,
    fresh_candidates,
    is_enabled,
)
from .query import Substitution
from .transforms import classify_conservative, conservativize

EXIT_OK, EXIT_ERROR, EXIT_UNSAFE = 0, 1, 2


class CliError(Exception):
    pass


# serialization


def marking_to_dict(m: Marking) -> dict:
    return {p: [{"token": [str(v) for v in tok], "count": n} for tok, n in m[p].items()] for p in m.places()}


def marking_to_text(m: Marking) -> str:
    parts = []
    for p in m.places():
        toks = []
        for tok, n in m[p].items():
            t = "(" + ", ".join(str(v) for v in tok) + ")"
            toks.append(t if n == 1 else f"{n}*{t}")
        parts.append(f"{p}: {' + '.join(toks)}")
    return "{" + "; ".join(parts) + "}"


def binding_to_dict(b) -> dict:
    return {k: str(v) for k, v in sorted(b.items())}


def catalog_to_dict(cat: CatalogInstance) -> dict:
    return {r: [[str(v) for v in row] for row in cat.facts(r)] for r in cat.relations()}


def witness_to_dict(w: Witness) -> dict:
    return {
        "initial": marking_to_dict(w.initial),
        "steps": [{"transition": s.transition, "binding": binding_to_dict(s.binding),
                   "marking": marking_to_dict(s.after)} for s in w.steps],
        "assignment": binding_to_dict(w.assignment),
        "catalog": catalog_to_dict(w.catalog),
        "length": len(w),
    }


def verdict_to_dict(v: Verdict) -> dict:
    out = {"verdict": v.label, "states": v.states, "exhausted": v.exhausted,
           "catalogs_checked": v.catalogs_checked, "status": v.status}
    if v.witness is not None:
        out["witness"] = witness_to_dict(v.witness)
    return out


def verdict_to_text(v: Verdict) -> str:
    lines = [f"verdict: {v.label}", f"states: {v.states}", f"exhausted: {'yes' if v.exhausted else 'no'}",
             f"catalogs checked: {v.catalogs_checked}"]
    if v.status:
        lines.append(f"status: {v.status}")
    w = v.witness
    if w is not None:
        lines.append(f"witness ({len(w)} steps):")
        lines.append(f"  m0 = {marking_to_text(w.initial)}")
        for n, s in enumerate(w.steps, 1):
            b = ", ".join(f"{k}={val}" for k, val in sorted(s.binding.items()))
            lines.append(f"  {n}. {s.transition} [{b}]")
            lines.append(f"     -> {marking_to_text(s.after)}")
        lines.append("  property assignment: " + ", ".join(f"{k}={val}" for k, val in sorted(w.assignment.items())))
        lines.append("  catalog: " + "; ".join(
            f"{r} {{{', '.join('(' + ', '.join(map(str, row)) + ')' for row in rows)}}}"
            for r, rows in ((r, w.catalog.facts(r)) for r in w.catalog.relations())))
    return "\n".join(lines)


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "structured":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


# project loading


def load_project(args) -> Project:
    try:
        project = parse_project(args.net)
    except ParseError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        raise CliError("parse failed") from None
    except OSError as exc:
        raise CliError(f"cannot read {exc.filename}: {exc.strerror}") from None
    report = project.validate()
    for d in report:
        print(d, file=sys.stderr)
    if not report.ok:
        raise CliError("validation failed")
    return project


def _pick(kind: str, table: dict, name: Optional[str]):
    if name is None:
        if len(table) == 1:
            return next(iter(table.values()))
        raise CliError(f"several {kind}s defined; choose one with --{kind}")
    if name not in table:
        raise CliError(f"unknown {kind} {name!r}; known: {', '.join(sorted(table)) or 'none'}")
    return table[name]


def _catalog(project: Project, name: Optional[str]) -> CatalogInstance:
    if name is not None and name not in project.catalogs:
        raise CliError(f"unknown catalog {name!r}; known: {', '.join(sorted(project.catalogs)) or 'none'}")
    return project.catalog(name)


def _marking(project: Project, name: Optional[str]) -> Marking:
    if name is not None and name not in project.markings:
        raise CliError(f"unknown marking {name!r}")
    return project.marking(name)


def _limits(args) -> ExplorationLimits:
    return ExplorationLimits(max_states=args.max_states, max_depth=args.depth, token_bound=args.bound)


def _policy(args) -> FreshPolicy:
    try:
        return FreshPolicy.parse(args.fresh_policy)
    except ValueError as exc:
        raise CliError(str(exc)) from None


# commands


def cmd_validate(args) -> int:
    project = load_project(args)
    net = project.net
    payload = {"ok": True, "types": len(project.domain.types), "relations": len(project.schema.relations),
               "places": len(net.places), "transitions": len(net.transitions),
               "catalogs": sorted(project.catalogs), "markings": sorted(project.markings),
               "properties": sorted(project.properties)}
    text = "\n".join([
        "ok",
        f"types: {payload['types']}, relations: {payload['relations']}, places: {payload['places']}, "
        f"transitions: {payload['transitions']}",
        f"catalogs: {', '.join(payload['catalogs']) or '-'}",
        f"markings: {', '.join(payload['markings']) or '-'}",
        f"properties: {', '.join(payload['properties']) or '-'}",
    ])
    _emit(args, payload, text)
    return EXIT_OK


def _parse_value(text: str, ty: str) -> Value:
    if "#" in text:
        head, _, idx = text.partition("#")
        if head != ty or not idx.isdigit():
            raise CliError(f"value {text!r} is not a pool value of type {ty}")
        return pool(ty, int(idx))
    return const(ty, text.strip('"'))


def parse_steps(text: str) -> list[tuple[str, dict[str, str]]]:
    """Step file: one ``transition var=value ...`` per line.

    ``#`` at line start or after whitespace begins a comment, so pool values
    such as ``Order#0`` are unaffected.
    """
    steps = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = re.split(r"(?:^|\s)#", raw, maxsplit=1)[0].replace(",", " ").strip()
        if not line:
            continue
        name, *assigns = line.split()
        b = {}
        for a in assigns:
            if "=" not in a:
                raise CliError(f"step line {n}: expected var=value, got {a!r}")
            k, v = a.split("=", 1)
            b[k] = v
        steps.append((name, b))
    return steps


def cmd_simulate(args) -> int:
    project = load_project(args)
    net = project.net
    cat = _catalog(project, args.catalog)
    m = _marking(project, args.marking)
    policy = _policy(args)
    try:
        with open(args.steps, encoding="utf-8") as fh:
            steps = parse_steps(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read {exc.filename}: {exc.strerror}") from None
    trace = [{"marking": marking_to_dict(m)}]
    lines = [f"m0 = {marking_to_text(m)}"]
    for n, (tname, given) in enumerate(steps, 1):
        try:
            t = net.transition(tname)
        except KeyError:
            raise CliError(f"step {n}: unknown transition {tname}") from None
        types = {v.name: v.type for v in t.vars()}
        if t.query is not None:
            types.update({v.name: v.type for v in t.query.free()})
        fresh = {f.name: f.type for f in t.fresh_vars()}
        types.update(fresh)
        sigma = {}
        for k, v in given.items():
            if k not in types:
                raise CliError(f"step {n}: {tname} has no variable {k}")
            sigma[k] = _parse_value(v, types[k])
        missing = [k for k in types if k not in sigma]
        if missing and all(k in fresh for k in missing):
            used = set(m.values()) | set(cat.values()) | set(net.constants())
            for k in sorted(missing):
                sigma[k] = fresh_candidates(fresh[k], used, 1)[0]
                used.add(sigma[k])
        elif missing:
            # complete from the enabled bindings when exactly one matches
            cands = [b for b in enabled_bindings(net, m, cat, t, policy)
                     if all(b[k] == v for k, v in sigma.items())]
            if len(cands) != 1:
                raise CliError(f"step {n}: binding for {tname} is ambiguous or disabled "
                               f"({len(cands)} candidates); give {', '.join(sorted(missing))}")
            sigma = dict(cands[0].items())
        binding = Substitution(sigma)
        if not is_enabled(net, m, cat, t, binding):
            raise CliError(f"step {n}: {tname} is not enabled under "
                           + ", ".join(f"{k}={v}" for k, v in sorted(binding.items())))
        try:
            m = fire(net, m, cat, t, binding)
        except NotEnabled as exc:
            raise CliError(f"step {n}: {exc}") from None
        trace.append({"transition": tname, "binding": binding_to_dict(binding), "marking": marking_to_dict(m)})
        b = ", ".join(f"{k}={v}" for k, v in sorted(binding.items()))
        lines.append(f"{n}. {tname} [{b}]")
        lines.append(f"   -> {marking_to_text(m)}")
    _emit(args, {"trace": trace}, "\n".join(lines))
    return EXIT_OK


def _write_witness(args, v: Verdict) -> None:
    if args.out and v.witness is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(verdict_to_dict(v), fh, indent=2, sort_keys=True)
            fh.write("\n")


def cmd_check(args) -> int:
    project = load_project(args)
    prop = _pick("prop", project.properties, args.prop)
    cat = _catalog(project, args.catalog)
    v = check_safety(project.net, _marking(project, args.marking), cat, prop, _limits(args), _policy(args))
    _write_witness(args, v)
    _emit(args, verdict_to_dict(v), verdict_to_text(v))
    return EXIT_OK if v.safe else EXIT_UNSAFE


def cmd_pcheck(args) -> int:
    project = load_project(args)
    prop = _pick("prop", project.properties, args.prop)
    fixed = project.catalogs[args.catalog] if args.catalog else None
    v = parameterised_check(project.net, _marking(project, args.marking), prop,
                            max_facts=args.catalog_max_facts, pool_sizes=args.pool,
                            limits=_limits(args), policy=_policy(args), fixed=fixed, jobs=args.jobs)
    _write_witness(args, v)
    _emit(args, verdict_to_dict(v), verdict_to_text(v))
    return EXIT_OK if v.safe else EXIT_UNSAFE


def cmd_encode(args) -> int:
    project = load_project(args)
    prop = _pick("prop", project.properties, args.prop)
    try:
        doc = encode(project.net, _marking(project, args.marking), prop)
    except EncodeError as exc:
        raise CliError(f"encode [{exc.code}]: {exc}") from None
    text = doc.render()
    for d in doc.diagnostics:
        span = project.span_of(d.subject)
        print(dataclasses.replace(d, span=span) if span else d, file=sys.stderr)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_classify(args) -> int:
    project = load_project(args)
    net = project.net
    conservative, occ = classify_conservative(net)
    payload: dict = {"conservative": conservative, "nu_occurrences": [dataclasses.asdict(o) for o in occ],
                     "fk_acyclic": fk_graph_acyclic(project.schema)}
    lines = [f"conservative: {'yes' if conservative else 'no'}"]
    lines += [f"  nu occurrence: {o}" for o in occ]
    lines.append(f"foreign keys acyclic: {'yes' if payload['fk_acyclic'] else 'no'}")
    if args.bound is not None:
        rep = check_bounded(net, _marking(project, args.marking), _catalog(project, args.catalog), args.bound,
                            ExplorationLimits(max_states=args.max_states, max_depth=args.depth))
        payload["bounded"] = {"bound": args.bound, "bounded": rep.bounded, "states": rep.states,
                              "exhausted": rep.exhausted, "place": rep.place}
        if rep.bounded:
            lines.append(f"bounded by {args.bound}: yes (up to limits; {rep.states} states, "
                         f"exhausted: {'yes' if rep.exhausted else 'no'})")
        else:
            lines.append(f"bounded by {args.bound}: no ({rep.place} exceeds it in {marking_to_text(rep.marking)})")
    if args.conservativize:
        try:
            res = conservativize(net, args.conservativize, args.provision)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        out = dataclasses.replace(
            project, net=res.net, schema=res.net.schema, domain=res.net.schema.domain,
            markings={k: res.initial_marking(m) for k, m in project.markings.items()},
            catalogs={k: CatalogInstance(res.net.schema, {r: c.facts(r) for r in c.relations()})
                      for k, c in project.catalogs.items()})
        src = format_project(out)
        payload["conservativized"] = {"mode": args.conservativize, "new_relations": res.new_relations,
                                      "new_places": res.new_places, "conservative": classify_conservative(res.net)[0]}
        lines.append(f"conservativized ({args.conservativize}): relations {res.new_relations or '-'}, "
                     f"places {res.new_places or '-'}")
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(src)
        else:
            lines.append(src.rstrip("\n"))
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "check": cmd_check,
    "pcheck": cmd_pcheck,
    "encode": cmd_encode,
    "classify": cmd_classify,
}


class _Parser(argparse.ArgumentParser):
    # usage errors must not look like an UNSAFE verdict
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--net", nargs="+", required=True, metavar="FILE", help="project file(s)")
    common.add_argument("--catalog", help="catalog instance name")
    common.add_argument("--marking", help="initial marking name (default: initial)")
    common.add_argument("--prop", help="property name")
    common.add_argument("--depth", type=int, default=10)
    common.add_argument("--max-states", type=int, default=5000)
    common.add_argument("--bound", type=int, default=None, help="per-place token bound")
    common.add_argument("--catalog-max-facts", type=int, default=2)
    common.add_argument("--pool", type=int, default=2, help="pool values per type for catalog enumeration")
    common.add_argument("--fresh-policy", default="canonical", help="canonical | enumerate:N")
    common.add_argument("--out", help="output file (witness, .mcmt or transformed net)")
    common.add_argument("--format", choices=("text", "structured"), default="text")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="clognet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="parse and validate a project")
    sim = sub.add_parser("simulate", parents=[common], help="fire a scripted sequence of steps")
    sim.add_argument("--steps", required=True, help="step file: 'transition var=value ...' per line")
    sub.add_parser("check", parents=[common], help="explicit safety check for one catalog")
    pc = sub.add_parser("pcheck", parents=[common], help="safety check over all small catalogs")
    pc.add_argument("--jobs", type=int, default=1)
    sub.add_parser("encode", parents=[common], help="write the MCMT encoding")
    cl = sub.add_parser("classify", parents=[common], help="conservativeness, boundedness and FK acyclicity")
    cl.add_argument("--conservativize", choices=("catalog", "provision"))
    cl.add_argument("--provision", type=int, default=None, help="values per type in provision mode")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    for name in ("depth", "max_states"):
        if getattr(args, name) < 1:
            parser.error(f"--{name.replace('_', '-')} must be positive")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
