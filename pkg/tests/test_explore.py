import random

import pytest

from clognet.core import CatalogInstance, const, pool
from clognet.dsl import parse_text
from clognet.explore import (
    ExplorationLimits,
    check_bounded,
    check_safety,
    explore,
    parameterised_check,
    replay_witness,
)
from clognet.net import FreshPolicy, Marking, canonicalize_marking, enabled_bindings, fire
from clognet.props import PlaceAtom, Property, PropertyError, PropLiteral
from clognet.query import Var

from oracles import random_catalog, random_marking, random_net, seed


def first_prop(project):
    return next(iter(project.properties.values()))


# the one-place relabelling net


def test_appendix_single_state_up_to_renaming(appendix):
    ts = explore(appendix.net, appendix.marking(), appendix.catalog())
    assert len(ts.states) == 1 and ts.exhausted
    assert [e.transition for e in ts.edges] == ["t"]
    assert ts.edges[0].src == ts.edges[0].dst == 0


def test_appendix_without_symmetry(appendix):
    # least-unused fresh choice alternates between two pool values
    ts = explore(appendix.net, appendix.marking(), appendix.catalog(), canonical=False)
    assert [str(m["p"]) for m in ts.states] == ["{<a>}", "{<String#0>}", "{<String#1>}"]
    assert ts.exhausted
    wide = explore(appendix.net, appendix.marking(), appendix.catalog(), ExplorationLimits(),
                   FreshPolicy("enumerate", 3), canonical=False)
    # three offers out of a, then the three least unused out of each String#k
    assert len(wide.states) == 5 and wide.exhausted


def test_appendix_fresh_cap(appendix):
    # with one pool value the only fresh choice is String#0, then a is gone for good
    limits = ExplorationLimits(fresh_cap=1)
    ts = explore(appendix.net, appendix.marking(), appendix.catalog(), limits, canonical=False)
    assert len(ts.states) == 2 and ts.exhausted


def test_appendix_property_is_unsafe(appendix):
    v = check_safety(appendix.net, appendix.marking(), appendix.catalog(), first_prop(appendix))
    assert not v.safe and len(v.witness) == 0


def test_no_transitions():
    proj = parse_text("type L; place p: L; marking initial { p { a } } property e: [p >= 2];")
    ts = explore(proj.net, proj.marking(), proj.catalog())
    assert len(ts.states) == 1 and ts.edges == [] and ts.exhausted
    assert check_safety(proj.net, proj.marking(), proj.catalog(), proj.properties["e"]).safe


def test_limits_are_validated():
    with pytest.raises(ValueError):
        ExplorationLimits(max_states=0)
    with pytest.raises(ValueError):
        ExplorationLimits(fresh_cap=0)


def test_state_limit_status(otd):
    ts = explore(otd.net, otd.marking(), otd.catalog("small"), ExplorationLimits(max_states=20))
    assert len(ts.states) == 20 and ts.status == "state-limit" and not ts.exhausted


def test_unknown_place_rejected_before_search(otd):
    o = Var("o", "Order")
    bad = Property("bad", (o,), (PropLiteral(PlaceAtom("nowhere", (o,))),))
    with pytest.raises(PropertyError):
        check_safety(otd.net, otd.marking(), otd.catalog("small"), bad)


# fixture verdicts


def test_fixture_safe_under_small_catalog(otd):
    v = check_safety(otd.net, otd.marking(), otd.catalog("small"), first_prop(otd))
    assert v.safe and v.witness is None


def test_mutant_witness_replays(mutant):
    v = check_safety(mutant.net, mutant.marking(), mutant.catalog("small"), first_prop(mutant))
    assert not v.safe
    w = v.witness
    assert replay_witness(mutant.net, first_prop(mutant), w)
    assert [s.transition for s in w.steps] == ["new_order", "add_item", "use", "load", "drive", "deliver"]
    # loaded without being paid, so the order is still working
    assert w.assignment["o"] == pool("Order", 0)


def test_mutant_witness_tamper_is_rejected(mutant):
    prop = first_prop(mutant)
    v = check_safety(mutant.net, mutant.marking(), mutant.catalog("small"), prop)
    w = v.witness
    w.steps = w.steps[1:]
    assert not replay_witness(mutant.net, prop, w)


def test_mutant_unsafe_under_enumeration(mutant):
    v = parameterised_check(mutant.net, mutant.marking(), first_prop(mutant), max_facts=1, pool_sizes=1)
    assert not v.safe and len(v.witness) <= 7
    assert replay_witness(mutant.net, first_prop(mutant), v.witness)


def test_empty_catalog_blocks_fixture(otd):
    # without products nothing is ever ready
    empty = CatalogInstance(otd.schema, {})
    ts = explore(otd.net, otd.marking(), empty, ExplorationLimits(max_depth=6))
    assert all(len(m["ready"]) == 0 for m in ts.states)


def test_state_count_snapshot(otd):
    ts = explore(otd.net, otd.marking(), otd.catalog("small"))
    assert (len(ts.states), ts.status) == (710, "depth-limit")


def test_exploration_is_deterministic(otd):
    a = explore(otd.net, otd.marking(), otd.catalog("small"), ExplorationLimits(max_depth=6))
    b = explore(otd.net, otd.marking(), otd.catalog("small"), ExplorationLimits(max_depth=6))
    assert a.states == b.states
    assert [(e.src, e.transition, e.binding, e.dst) for e in a.edges] == \
        [(e.src, e.transition, e.binding, e.dst) for e in b.edges]


# symmetry reduction is sound and complete on small random nets


def test_symmetry_reduction_matches_plain_enumeration():
    rng = random.Random(seed())
    compared = 0
    for _ in range(120):
        net = random_net(rng)
        cat = random_catalog(rng)
        m0 = random_marking(rng, net)
        limits = ExplorationLimits(max_states=500, max_depth=3)
        plain = explore(net, m0, cat, limits, FreshPolicy("enumerate", 3), canonical=False)
        reduced = explore(net, m0, cat, limits)
        if plain.status == "state-limit" or reduced.status == "state-limit":
            continue
        protected = net.constants() | cat.values()
        classes = {canonicalize_marking(m, protected) for m in plain.states}
        assert classes == set(reduced.states)
        compared += 1
    assert compared >= 100


# boundedness


def test_appendix_is_one_bounded(appendix):
    r = check_bounded(appendix.net, appendix.marking(), appendix.catalog(), 1)
    assert r.bounded and r.exhausted


def test_fixture_is_not_one_bounded(otd):
    r = check_bounded(otd.net, otd.marking(), otd.catalog("small"), 1)
    assert not r.bounded and r.place == "working"
    assert len(r.marking["working"]) == 2


def test_zero_bound_fails_on_initial_tokens(appendix):
    r = check_bounded(appendix.net, appendix.marking(), appendix.catalog(), 0)
    assert not r.bounded and r.place == "p" and r.marking == appendix.marking()


def test_negative_bound_rejected(appendix):
    with pytest.raises(ValueError):
        check_bounded(appendix.net, appendix.marking(), appendix.catalog(), -1)


def test_token_bound_prunes(otd):
    limits = ExplorationLimits(max_depth=30, token_bound=1)
    ts = explore(otd.net, otd.marking(), otd.catalog("small"), limits)
    assert ts.exhausted and len(ts.states) == 28
    assert all(len(m[p]) <= 1 for m in ts.states for p in m.places())
