import itertools
import random

import pytest
from hypothesis import given, strategies as st

from clognet.core import CatalogInstance, Multiset, const, pool
from clognet.net import (
    FreshPolicy,
    Fresh,
    Inscription,
    Marking,
    NotEnabled,
    Transition,
    apply_substitution,
    canonicalize_marking,
    enabled_bindings,
    fire,
    freshness_audit,
    is_enabled,
    rename_values,
    validate_net,
)
from clognet.query import Const, Eq, Substitution, Var

from oracles import oracle_bindings, oracle_fire, random_catalog, random_marking, random_net


def S(x):
    return const("String", x)


def tokens(m, place):
    return {tuple(str(v) for v in tok): n for tok, n in m[place].items()}


# substitution application


def test_apply_substitution_every_occurrence():
    x, y = Var("x", "N"), Var("y", "L")
    one, a, b = const("N", "1"), const("L", "a"), const("L", "b")
    omega = (Inscription((x, y), 2), Inscription((x, Const(b))))
    got = apply_substitution({"x": one, "y": a}, omega)
    assert got == Multiset({(one, a): 2, (one, b): 1})


def test_apply_substitution_ground_and_repeated():
    a = const("L", "a")
    assert apply_substitution({}, (Inscription((Const(a),)),)) == Multiset([(a,)])
    x = Var("x", "L")
    assert apply_substitution({"x": a}, (Inscription((x, x)),)) == Multiset([(a, a)])


# validation


def test_fixture_net_is_valid(otd):
    report = validate_net(otd.net)
    assert report.ok
    # load only filters input data through the catalog; that is advisory
    assert [d.code for d in report.warnings] == ["guard-b"]


def test_condition_on_non_input_variable(appendix):
    net = appendix.net
    t = net.transitions[0]
    bad = Transition(t.name, t.inputs, t.outputs, None, Eq(Var("z", "String"), Const(S("a"))))
    assert "guard-a" in validate_net(net.replace_transition(t.name, bad)).codes()


def test_query_over_input_variables_only_is_flagged(otd):
    load = otd.net.transition("load")
    assert any(d.code == "guard-b" and d.subject == ("transition", "load") for d in validate_net(otd.net))
    assert load.query is not None


def test_inscription_arity_and_type(appendix):
    net = appendix.net
    t = net.transitions[0]
    bad = Transition(t.name, ((("p"), (Inscription((Var("x", "String"), Var("x", "String"))),)),), t.outputs)
    assert not validate_net(net.replace_transition(t.name, bad)).ok


# enablement and firing on the fixture nets


def test_appendix_single_canonical_binding(appendix):
    net, m0 = appendix.net, appendix.marking()
    cat = appendix.catalog()
    (sigma,) = enabled_bindings(net, m0, cat, "t")
    assert dict(sigma) == {"x": S("a"), "y": pool("String", 0)}
    m1 = fire(net, m0, cat, "t", sigma)
    assert tokens(m1, "p") == {("String#0",): 1}


def test_load_needs_paid_order(otd):
    net, cat = otd.net, otd.catalog("small")
    o1 = pool("Order", 0)
    veg = const("ProdType", "veg")
    m = Marking({"ready": [(veg, o1)], "in_house": [(const("Plate", "pl1"), const("TruckType", "fridge"))]})
    assert enabled_bindings(net, m, cat, "load") == []
    m = Marking({**m.as_dict(), "paid": [(o1,)]})
    assert len(enabled_bindings(net, m, cat, "load")) == 1


def test_add_item_binding(otd):
    net, cat = otd.net, otd.catalog("small")
    o1 = pool("Order", 0)
    bindings = enabled_bindings(net, Marking({"working": [(o1,)]}), cat, "add_item")
    assert [dict(b) for b in bindings] == [{"o": o1, "p": const("ProdType", "veg")}]


def test_new_order_only_touches_working(otd):
    net, cat, m0 = otd.net, otd.catalog("small"), otd.marking()
    sigma = Substitution({"o": pool("Order", 0)})
    m1 = fire(net, m0, cat, "new_order", sigma)
    assert tokens(m1, "working") == {("Order#0",): 1}
    assert all(m1[p] == m0[p] for p in net.place_names() if p != "working")


def test_read_arc_leaves_marking_unchanged(otd):
    net, cat = otd.net, otd.catalog("small")
    tok = (const("Plate", "pl1"), const("TruckType", "fridge"))
    m = Marking({"at_dest": [tok]})
    (sigma,) = enabled_bindings(net, m, cat, "move")
    assert fire(net, m, cat, "move", sigma) == m


def test_fire_rejects_disabled_binding(appendix):
    net, cat = appendix.net, appendix.catalog()
    with pytest.raises(NotEnabled):
        fire(net, Marking(), cat, "t", Substitution({"x": S("a"), "y": pool("String", 0)}))
    # a "fresh" value that is already present
    assert not is_enabled(net, appendix.marking(), cat, net.transitions[0], Substitution({"x": S("a"), "y": S("a")}))


def test_multiplicity_on_input_arcs():
    from oracles import SCHEMA
    from clognet.net import Net, Place
    x = Var("x", "A")
    t = Transition("t", (("p", (Inscription((x,), 2),)),), ())
    net = Net(SCHEMA, (Place("p", ("A",)),), (t,))
    a1 = const("A", "a1")
    cat = CatalogInstance(SCHEMA)
    assert enabled_bindings(net, Marking({"p": [(a1,)]}), cat, t) == []
    assert len(enabled_bindings(net, Marking({"p": [(a1,), (a1,)]}), cat, t)) == 1


def test_enumerate_policy_offers_n_values(appendix):
    net, m0, cat = appendix.net, appendix.marking(), appendix.catalog()
    got = enabled_bindings(net, m0, cat, "t", FreshPolicy.parse("enumerate:3"))
    assert [b["y"] for b in got] == [pool("String", i) for i in range(3)]
    with pytest.raises(ValueError):
        FreshPolicy.parse("enumerate:0")
    with pytest.raises(ValueError):
        FreshPolicy.parse("random")


def test_shared_nu_variable_is_one_value():
    from oracles import SCHEMA
    from clognet.net import Net, Place
    n = Fresh("n", "A")
    t = Transition("t", (), (("p", (Inscription((n,)),)), ("q", (Inscription((n,)),))))
    net = Net(SCHEMA, (Place("p", ("A",)), Place("q", ("A",))), (t,))
    cat = CatalogInstance(SCHEMA)
    (sigma,) = enabled_bindings(net, Marking(), cat, t)
    m = fire(net, Marking(), cat, t, sigma)
    assert m["p"] == m["q"] == Multiset([(pool("A", 0),)])


def test_distinct_nu_variables_get_distinct_values():
    from oracles import SCHEMA
    from clognet.net import Net, Place
    t = Transition("t", (), (("p", (Inscription((Fresh("n", "A"), Fresh("k", "A"))),)),))
    net = Net(SCHEMA, (Place("p", ("A", "A")),), (t,))
    cat = CatalogInstance(SCHEMA)
    for policy in ("canonical", "enumerate:2"):
        for b in enabled_bindings(net, Marking(), cat, t, FreshPolicy.parse(policy)):
            assert b["n"] != b["k"]


# oracle cross-checks


@pytest.mark.parametrize("seed", range(10))
def test_enabled_bindings_match_brute_force(seed):
    rng = random.Random(seed)
    policy = FreshPolicy.parse("enumerate:3")
    with freshness_audit() as audit:
        for _ in range(10):
            net, cat = random_net(rng), random_catalog(rng)
            m = random_marking(rng, net)
            for t in net.transitions:
                got = {tuple(sorted(b.items())) for b in enabled_bindings(net, m, cat, t, policy)}
                assert got == oracle_bindings(net, m, cat, t)
    assert audit.violations == []


@pytest.mark.parametrize("seed", range(10))
def test_firing_arithmetic(seed):
    rng = random.Random(100 + seed)
    for _ in range(10):
        net, cat = random_net(rng), random_catalog(rng)
        m = random_marking(rng, net)
        for t in net.transitions:
            for sigma in enabled_bindings(net, m, cat, t, FreshPolicy.parse("enumerate:2")):
                m2 = fire(net, m, cat, t, sigma)
                expected = oracle_fire(m, t, sigma)
                assert {p: dict(m2[p].items()) for p in m2.places()} == {p: dict(c) for p, c in expected.items()}
                grow = sum(i.k for _, ins in t.outputs for i in ins) - sum(i.k for _, ins in t.inputs for i in ins)
                assert m2.total() - m.total() == grow
                # fresh values appear only where nu-inscriptions put them
                for f in t.fresh_vars():
                    v = sigma[f.name]
                    assert v not in m.values() and v not in cat.values()
                    holders = {p for p in m2.places() for tok in m2[p].support() if v in tok}
                    assert holders <= {p for p, ins in t.outputs if any(f in i.terms for i in ins)}


# canonical forms


def test_canonical_single_value():
    m = Marking({"p": [(pool("String", 7),)]})
    assert canonicalize_marking(m) == Marking({"p": [(pool("String", 0),)]})


def test_canonical_keeps_protected_values():
    a = S("a")
    m = Marking({"p": [(a,)]})
    assert canonicalize_marking(m, {a}) == m


def _perm_variants(m: Marking, rng: random.Random):
    vals = sorted(m.values())
    by_type: dict[str, list] = {}
    for v in vals:
        by_type.setdefault(v.type, []).append(v)
    ren = {}
    for ty, vs in by_type.items():
        targets = [pool(ty, i) for i in rng.sample(range(10), len(vs))]
        ren.update(zip(vs, targets))
    return rename_values(m, ren)


def _brute_equiv(m1: Marking, m2: Marking) -> bool:
    """Is there a type-preserving bijection of values mapping m1 onto m2?"""
    v1, v2 = sorted(m1.values()), sorted(m2.values())
    if [v.type for v in v1] != [v.type for v in v2]:
        return False
    for perm in itertools.permutations(v2):
        ren = dict(zip(v1, perm))
        if all(a.type == b.type for a, b in ren.items()) and rename_values(m1, ren) == m2:
            return True
    return False


cells = st.lists(st.tuples(st.sampled_from(["p", "q"]), st.integers(0, 3), st.integers(0, 3)), max_size=5)


def _marking(cells):
    data: dict = {}
    for place, i, j in cells:
        data.setdefault(place, []).append((pool("A", i), pool("A", j)))
    return Marking(data)


@given(cells, st.randoms(use_true_random=False))
def test_canonical_invariant_under_renaming(cs, rnd):
    m = _marking(cs)
    c = canonicalize_marking(m)
    assert canonicalize_marking(c) == c
    assert canonicalize_marking(_perm_variants(m, rnd)) == c
    assert _brute_equiv(m, c)


@given(cells, cells)
def test_canonical_forms_separate_inequivalent_markings(c1, c2):
    m1, m2 = _marking(c1), _marking(c2)
    assert (canonicalize_marking(m1) == canonicalize_marking(m2)) == _brute_equiv(m1, m2)


def test_marking_update_and_ordering():
    a = (S("a"),)
    m = Marking({"p": [a]})
    assert m.update({"p": Multiset([a])}, {"q": Multiset([a])}) == Marking({"q": [a]})
    with pytest.raises(ValueError):
        m.update({"p": Multiset([a, a])}, {})
    assert Marking({"p": []}) == Marking()
