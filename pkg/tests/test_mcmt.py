import random
from pathlib import Path

import pytest

from clognet.core import CatalogInstance
from clognet.dsl import parse_project, parse_text
from clognet.explore import ExplorationLimits, check_safety
from clognet.mcmt import (
    EncodeError,
    Namer,
    check_declarations,
    check_one_place_per_index,
    count_index_vars,
    encode,
    sanitize,
)
from clognet.net import Marking
from clognet.props import PlaceAtom, Property, PropLiteral
from clognet.query import Var

from conftest import FIXTURES, fixture_path
from mcmt_interp import Interpreter, load
from oracles import VALUES, random_catalog, random_net, seed


def first_prop(project):
    return next(iter(project.properties.values()))


def render(project, prop=None):
    return encode(project.net, project.marking(), prop or first_prop(project))


def blocks(text):
    return [b.splitlines() for b in text.strip().split("\n\n")]


def transitions(text):
    return [b for b in blocks(text) if b[0] == ":transition"]


# golden documents


@pytest.mark.parametrize("name", ["appendix_net", "order_to_delivery"])
def test_golden_bytes(name):
    project = parse_project(fixture_path(f"{name}.clog"))
    golden = (FIXTURES / f"{name}.mcmt").read_bytes()
    assert render(project).render().encode() == golden


@pytest.mark.parametrize("name", ["appendix_net", "order_to_delivery", "load_mutant", "crorder"])
def test_structure(name):
    project = parse_project(fixture_path(f"{name}.clog"))
    text = render(project).render()
    assert check_declarations(text) == []
    assert check_one_place_per_index(text, project.net) == []


def test_fixture_document_shape(otd):
    text = render(otd).render()
    assert text.count(":uguard") == 1
    init = transitions(text)[0]
    assert ":guard (= init_fl TRUE)" in init
    assert [l for l in init if l.startswith(":guard")] == [":guard (= init_fl TRUE)"]
    # every other statement runs after loading
    for block in transitions(text)[1:]:
        guard = next(l for l in block if l.startswith(":guard"))
        assert guard.endswith("(= init_fl FALSE)")
    assert len(transitions(text)) == 1 + len(otd.net.transitions)


def test_initial_marking_loader():
    proj = parse_text("""
        type L; place p: L; place q: L * L;
        marking initial { p { a } p { a } q { a, b } }
        property e: [p >= 1];
    """)
    init = transitions(render(proj).render())[0]
    assert init[:4] == [":transition", ":var i1", ":var i2", ":var i3"]
    guard = next(l for l in init if l.startswith(":guard"))
    assert guard == (":guard (= init_fl TRUE) (not (= i1 i2)) (not (= i1 i3)) (not (= i2 i3))")
    assert ":numcases 4" in init
    vals = [l for l in init if l.startswith(":val")]
    assert all(v == ":val FALSE" for v in vals[3::4])


def test_checkers_detect_damage(otd):
    text = render(otd).render()
    broken = text.replace(":smt (define fridge ::TruckType)\n", "")
    assert any("fridge" in p for p in check_declarations(broken))
    y_case = text.replace(":case (= j y1)\n:val o\n:val paid_1[j]", ":case (= j y1)\n:val o\n:val o")
    assert check_one_place_per_index(y_case, otd.net) != []


# index budget


def test_budget_recount_matches(otd, appendix):
    for project in (otd, appendix):
        doc = render(project)
        per_name = {b.transition: (b.existential, b.universal) for b in doc.budgets}
        stmts = [s for s in doc.statements if s.kind == "transition" and s.label in per_name]
        assert [per_name[s.label] for s in stmts] == count_index_vars(doc.render())


def test_budget_counts_multiplicities(otd):
    got = {b.transition: (b.existential, b.universal) for b in render(otd).budgets}
    assert got["new_order"] == (1, 1)
    assert got["add_item"] == (3, 0)
    assert got["load"] == (6, 0)
    assert got["move"] == (2, 0)


def test_budget_warning_fires_for_load_only_where_exceeded(otd, appendix):
    warned = {d.subject[1] for d in render(otd).warnings() if d.code == "index-budget"}
    assert "load" in warned and "new_order" not in warned and "move" not in warned
    msg = next(d.message for d in render(otd).warnings() if d.subject == ("transition", "load"))
    assert "two existentially quantified and one universally quantified" in msg
    assert [d for d in render(appendix).warnings() if d.code == "index-budget"] == []


# naming


def test_sanitize():
    assert sanitize("Order#0") == "Order_0"
    assert sanitize("9lives") == "v_9lives"
    assert sanitize("a-b c") == "a_b_c"


@pytest.mark.parametrize("raw", ["x1", "y12", "z3", "i4", "j", "init_fl", "TRUE", "false", "NULL_Order", "boole"])
def test_reserved_names(raw):
    with pytest.raises(EncodeError) as e:
        Namer().claim(raw, "type")
    assert e.value.code == "collision"


def test_case_insensitive_collision():
    proj = parse_text("""
        type Order; type order;
        place p: Order; place q: order;
        property e: [p >= 1];
    """)
    with pytest.raises(EncodeError) as e:
        render(proj)
    assert e.value.code == "collision"


def test_sanitization_collision():
    n = Namer()
    n.claim("a-b", "place")
    with pytest.raises(EncodeError):
        n.claim("a_b", "relation")


def test_no_constants_omits_db_constants():
    proj = parse_text("type L; place p: L; transition t { in p (x); out p (x); } property e: [p >= 1];")
    text = render(proj).render()
    assert ":db_constants" not in text and ":db_sorts L" in text and ":db_functions" not in text


def test_no_places_is_an_error():
    proj = parse_text("type L;")
    prop = Property("e", (), ())
    with pytest.raises(EncodeError) as e:
        encode(proj.net, Marking({}), prop)
    assert e.value.code == "no-places"


def test_key_only_relation_diagnostic(otd):
    diags = [d for d in render(otd).diagnostics if d.code == "key-only-relation"]
    assert [d.subject[1] for d in diags] == ["ProdCat"]
    assert ":smt (define ProdCat_mem ::(-> ProdType BOOLE))" in render(otd).render()


# properties


def test_counted_constant_property():
    proj = parse_text('type L; place p: L; marking initial { p { a } } property two: [p("a") >= 2];')
    unsafe = blocks(render(proj).render())[-1]
    assert unsafe == [
        ":unsafe", ":var z1", ":var z2",
        ":cnj (not (= p_1[z1] NULL_L)) (= p_1[z1] a) (not (= p_1[z2] NULL_L)) (= p_1[z2] a) (not (= z1 z2))",
    ]


def test_shared_property_variable(otd):
    unsafe = blocks(render(otd).render())[-1]
    assert unsafe[:3] == [":unsafe", ":var z1", ":var z2"]
    assert "(= working_1[z2] delivered_2[z1])" in unsafe[3]


def test_negated_place_atom_rejected(otd):
    o = Var("o", "Order")
    prop = Property("n", (o,), (PropLiteral(PlaceAtom("paid", (o,))), PropLiteral(PlaceAtom("working", (o,)), False)))
    with pytest.raises(EncodeError) as e:
        encode(otd.net, otd.marking(), prop)
    assert e.value.code == "negated-place-atom"


# transitions


def test_plain_transition_has_no_element_variables():
    proj = parse_text("type L; place p: L; place q: L; transition t { in p (x); out q (x); } property e: [q >= 1];")
    block = transitions(render(proj).render())[1]
    assert not any(l.startswith((":uguard", ":eevar")) for l in block)
    assert block[:4] == [":transition", ":var x1", ":var y1", ":var j"]


def test_negated_guard_atom_splits_statements():
    proj = parse_text("""
        type K; type D;
        relation R(k: K key, d: D);
        place p: K * D; place q: K;
        transition t { in p (k, d); out q (k); guard not R(k, d); }
        property e: [q >= 1];
    """)
    stmts = transitions(render(proj).render())[1:]
    guards = [next(l for l in b if l.startswith(":guard")) for b in stmts]
    assert len(guards) == 2
    assert "(= p_1[x1] NULL_K)" in guards[0]
    assert "(not (= (R_d p_1[x1]) p_2[x1]))" in guards[1]


# the emitted documents behave like the nets: explicit-state differential check


def _small(net, m0):
    slots = m0.total() + max(sum(i.k for _, ins in t.outputs for i in ins) for t in net.transitions)
    for t in net.transitions:
        k = sum(i.k for _, ins in t.inputs for i in ins)
        n = sum(i.k for _, ins in t.outputs for i in ins)
        if n > k or k + n > 4 or t.fresh_vars():
            return None
    return slots


def test_encoding_agrees_with_search():
    rng = random.Random(seed())
    outcomes = []
    attempts = 0
    while min(outcomes.count(True), outcomes.count(False)) < 10 and attempts < 20000:
        attempts += 1
        net = random_net(rng, max_places=3, max_transitions=3)
        data = {}
        for _ in range(rng.randint(1, 2)):
            p = rng.choice(net.places)
            data.setdefault(p.name, []).append(tuple(rng.choice(VALUES[ty]) for ty in p.color))
        m0 = Marking(data)
        slots = _small(net, m0)
        written = {p for t in net.transitions for p, _ in t.outputs}
        empty = [p for p in net.places if p.name not in data and p.name in written]
        if slots is None or not empty:
            continue
        cat = random_catalog(rng)
        # the target starts empty, so a hit needs at least one firing
        target = rng.choice(empty)
        vs = tuple(Var(f"w{i}", ty) for i, ty in enumerate(target.color))
        prop = Property("u", vs, (PropLiteral(PlaceAtom(target.name, vs)),))
        text = encode(net, m0, prop).render()
        assert check_declarations(text) == []
        assert check_one_place_per_index(text, net) == []
        verdict = check_safety(net, m0, cat, prop, ExplorationLimits(max_depth=50))
        got = Interpreter(load(text), cat, slots).reach_unsafe()
        assert got == (not verdict.safe), text
        outcomes.append(got)
    assert outcomes.count(True) >= 10 and outcomes.count(False) >= 10


def test_encoding_agrees_on_relabelling_net(appendix):
    text = render(appendix).render()
    got = Interpreter(load(text), appendix.catalog(), 2).reach_unsafe()
    assert got is True
