import itertools
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from clognet.core import (
    CatalogInstance,
    CatalogSchema,
    DataType,
    Multiset,
    RelationSchema,
    TypeDomain,
    active_domain,
    const,
    fk_graph_acyclic,
    pool,
    validate_instance,
    validate_schema,
)

DOMAIN = TypeDomain(tuple(DataType(n) for n in ("ProdType", "CId", "TruckType", "Plate")))
PRODCAT = RelationSchema("ProdCat", (("p", "ProdType"),))
COMP = RelationSchema("Comp", (("c", "CId"), ("p", "ProdType"), ("t", "TruckType")))
COMP_FK = RelationSchema("Comp", COMP.attributes, fks=((1, "ProdCat"),))
SCHEMA = CatalogSchema(DOMAIN, (PRODCAT, COMP))
SCHEMA_FK = CatalogSchema(DOMAIN, (PRODCAT, COMP_FK))


def P(x):
    return const("ProdType", x)


def C(x):
    return const("CId", x)


def T(x):
    return const("TruckType", x)


# values


def test_values_are_tagged_by_type():
    assert const("A", "x") != const("B", "x")
    assert pool("A", 0) != const("A", "0")
    assert str(pool("Order", 3)) == "Order#3"
    with pytest.raises(ValueError):
        pool("A", -1)


def test_constants_sort_before_pool_values():
    assert sorted([pool("A", 0), const("A", "z")]) == [const("A", "z"), pool("A", 0)]


def test_type_domain_rejects_duplicates():
    with pytest.raises(ValueError):
        TypeDomain((DataType("A"), DataType("A")))


# multisets

elems = st.sampled_from("abcd")
msets = st.lists(elems, max_size=8).map(Multiset)


@given(msets, msets)
def test_multiset_add_then_sub(s1, s2):
    assert (s1 + s2) - s1 == s2
    assert s1 <= s1 + s2


@given(msets, st.integers(0, 4))
def test_multiset_scalar(s, k):
    assert len(k * s) == k * len(s)


@given(st.lists(elems, max_size=8))
def test_multiset_matches_counter(xs):
    m = Multiset(xs)
    assert dict(m.items()) == dict(Counter(xs))
    assert list(m.elements()) == sorted(xs)


def test_multiset_difference_requires_inclusion():
    with pytest.raises(ValueError):
        Multiset("a") - Multiset("aa")
    with pytest.raises(ValueError):
        Multiset({"a": -1})


def test_multiset_equality_ignores_zero_counts():
    assert Multiset({"a": 1, "b": 0}) == Multiset("a")
    assert hash(Multiset("ab")) == hash(Multiset("ba"))


# schema validation


def test_example_schema_is_well_formed():
    assert validate_schema(SCHEMA).ok
    assert len(validate_schema(SCHEMA)) == 0


def test_pk_type_clash():
    s = CatalogSchema(DOMAIN, (COMP, RelationSchema("Other", (("c", "CId"),))))
    assert validate_schema(s).codes() == ["pk-type-clash"]


def test_fk_type_mismatch():
    bad = RelationSchema("Comp", COMP.attributes, fks=((2, "ProdCat"),))
    assert "fk-type-mismatch" in validate_schema(CatalogSchema(DOMAIN, (PRODCAT, bad))).codes()


@pytest.mark.parametrize("rel, code", [
    (RelationSchema("R", (("a", "CId"), ("b", "ProdType")), fks=((1, "Nope"),)), "fk-dangling-target"),
    (RelationSchema("R", (("a", "CId"), ("b", "ProdType")), key_index=1), "non-first-pk"),
    (RelationSchema("R", (("a", "CId"), ("b", "Missing"))), "unknown-type"),
    (RelationSchema("R", (("a", "CId"),), fks=((0, "ProdCat"),)), "fk-on-key"),
])
def test_schema_violations_are_collected(rel, code):
    report = validate_schema(CatalogSchema(DOMAIN, (PRODCAT, rel)))
    assert code in report.codes()
    assert not report.ok


def test_schema_reports_every_problem_at_once():
    r1 = RelationSchema("R", (("a", "CId"), ("b", "Missing")), fks=((1, "Nope"),))
    r2 = RelationSchema("S", (("a", "CId"),))
    codes = validate_schema(CatalogSchema(DOMAIN, (r1, r2))).codes()
    assert {"unknown-type", "fk-dangling-target", "pk-type-clash"} <= set(codes)


def test_fk_acyclicity():
    assert fk_graph_acyclic(SCHEMA_FK)
    a = RelationSchema("A", (("a", "CId"), ("b", "ProdType")), fks=((1, "B"),))
    b = RelationSchema("B", (("b", "ProdType"), ("a", "CId")), fks=((1, "A"),))
    assert not fk_graph_acyclic(CatalogSchema(DOMAIN, (a, b)))


# instances


def test_legal_instances():
    assert validate_instance(CatalogInstance(SCHEMA, {"ProdCat": [(P("veg"),), (P("fur"),)]})).ok
    # set semantics: a repeated fact is one fact
    cat = CatalogInstance(SCHEMA, {"ProdCat": [(P("veg"),), (P("veg"),)]})
    assert validate_instance(cat).ok and len(cat) == 1


def test_dangling_fk():
    cat = CatalogInstance(SCHEMA_FK, {"Comp": [(C("c1"), P("meat"), T("fridge"))]})
    assert validate_instance(cat).codes() == ["dangling-fk"]


def test_duplicate_key_and_type_errors():
    cat = CatalogInstance(SCHEMA, {"Comp": [(C("c1"), P("veg"), T("fridge")), (C("c1"), P("fur"), T("flat"))]})
    assert validate_instance(cat).codes() == ["duplicate-pk"]
    cat = CatalogInstance(SCHEMA, {"ProdCat": [(T("veg"),)]})
    assert validate_instance(cat).codes() == ["type"]
    cat = CatalogInstance(SCHEMA, {"ProdCat": [(P("veg"), P("x"))]})
    assert validate_instance(cat).codes() == ["arity"]


def test_finite_types_restrict_values():
    dom = TypeDomain((DataType("Colour", ("red", "blue")),))
    s = CatalogSchema(dom, (RelationSchema("Paint", (("c", "Colour"),)),))
    assert validate_instance(CatalogInstance(s, {"Paint": [(const("Colour", "red"),)]})).ok
    assert not validate_instance(CatalogInstance(s, {"Paint": [(const("Colour", "green"),)]})).ok
    assert not validate_instance(CatalogInstance(s, {"Paint": [(pool("Colour", 0),)]})).ok


def _brute_legal(cat: CatalogInstance) -> bool:
    """PK and FK conditions straight from their definitions."""
    for rel in cat.schema.relations:
        rows = cat.facts(rel.name)
        for r1, r2 in itertools.combinations(rows, 2):
            if r1[0] == r2[0]:
                return False
        for idx, target in rel.fks:
            keys = [row[0] for row in cat.facts(target)]
            if any(row[idx] not in keys for row in rows):
                return False
    return True


PV = [P("veg"), P("fur")]
CV = [C("c1"), C("c2")]
TV = [T("fridge")]
prodcat_rows = st.sets(st.sampled_from(PV).map(lambda v: (v,)))
comp_rows = st.sets(st.tuples(st.sampled_from(CV), st.sampled_from(PV), st.sampled_from(TV)), max_size=3)


@given(prodcat_rows, comp_rows)
def test_validate_instance_matches_brute_force(pc, cp):
    cat = CatalogInstance(SCHEMA_FK, {"ProdCat": pc, "Comp": cp})
    assert validate_instance(cat).ok == _brute_legal(cat)


@pytest.mark.parametrize("facts, expected", [
    ({}, {}),
    ({"ProdCat": [(P("veg"),)]}, {"ProdType": {P("veg")}}),
    ({"Comp": [(C("c1"), P("veg"), T("fridge"))]},
     {"CId": {C("c1")}, "ProdType": {P("veg")}, "TruckType": {T("fridge")}}),
])
def test_active_domain_examples(facts, expected):
    adom = active_domain(CatalogInstance(SCHEMA, facts))
    for ty in DOMAIN.names():
        assert adom[ty] == expected.get(ty, set())


@given(prodcat_rows, comp_rows)
def test_active_domain_is_a_fold_over_facts(pc, cp):
    cat = CatalogInstance(SCHEMA, {"ProdCat": pc, "Comp": cp})
    folded = {v for _, row in cat.all_facts() for v in row}
    adom = active_domain(cat)
    assert set().union(*adom.values()) == folded == cat.values()
    assert all(v.type == ty for ty, vs in adom.items() for v in vs)
