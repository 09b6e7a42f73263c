"""Explicit-state exploration, safety and boundedness checking."""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

from .catalogs import enumerate_catalogs
from .core import CatalogInstance, CatalogSchema, Value
from .net import (
    CANONICAL,
    Binding,
    FreshPolicy,
    Marking,
    Net,
    Transition,
    canonicalize_with_map,
    enabled_bindings,
    fire,
    fresh_candidates,
    is_enabled,
)
from .props import Property, eval_property, typecheck_property
from .query import Substitution

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplorationLimits:
    max_states: int = 5000
    max_depth: int = 10
    token_bound: Optional[int] = None
    # fresh values must have a pool index below this cap
    fresh_cap: Optional[int] = None

    def __post_init__(self):
        for name in ("max_states", "max_depth", "token_bound", "fresh_cap"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass
class Edge:
    src: int
    transition: str
    binding: Binding
    dst: int


@dataclass
class TransitionSystem:
    states: list[Marking]
    edges: list[Edge]
    depth: list[int]
    exhausted: bool
    initial: int = 0
    status: str = "complete"

    def successors(self, i: int) -> list[Edge]:
        return [e for e in self.edges if e.src == i]


@dataclass
class Step:
    before: Marking
    transition: str
    binding: Binding
    after: Marking


@dataclass
class Witness:
    initial: Marking
    steps: list[Step]
    assignment: Substitution
    catalog: CatalogInstance

    @property
    def final(self) -> Marking:
        return self.steps[-1].after if self.steps else self.initial

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class Verdict:
    safe: bool
    states: int
    exhausted: bool
    witness: Optional[Witness] = None
    catalogs_checked: int = 1
    status: str = ""

    @property
    def label(self) -> str:
        return "SAFE-up-to-limits" if self.safe else "UNSAFE"


class _Explorer:
    """BFS over canonical markings; shared by exploration and checking."""

    def __init__(self, net: Net, cat: CatalogInstance, limits: ExplorationLimits,
                 policy: FreshPolicy = CANONICAL, canonical: bool = True,
                 protected: Iterable[Value] = ()):
        self.net = net
        self.cat = cat
        self.limits = limits
        self.policy = policy
        self.canonical = canonical
        self.protected = frozenset(protected) | net.constants() | cat.values()
        self._canon: dict[Marking, tuple[Marking, dict]] = {}
        self._fresh = [(t, t.fresh_vars()) for t in net.transitions]

    def canon(self, m: Marking) -> tuple[Marking, dict]:
        if not self.canonical:
            return m, {}
        hit = self._canon.get(m)
        if hit is None:
            hit = self._canon[m] = canonicalize_with_map(m, self.protected)
        return hit

    def successors(self, m: Marking) -> Iterator[tuple[Transition, Binding, Marking]]:
        cap = self.limits.fresh_cap
        for t, fresh in self._fresh:
            for sigma in enabled_bindings(self.net, m, self.cat, t, self.policy):
                if cap is not None and any(sigma[f.name].is_pool and sigma[f.name].payload >= cap for f in fresh):
                    continue
                m2 = fire(self.net, m, self.cat, t, sigma, check=False)
                bound = self.limits.token_bound
                if bound is not None and any(len(m2[p]) > bound for p in m2.places()):
                    continue
                yield t, sigma, m2

    def run(self, m0: Marking, visit=None):
        """BFS; ``visit(index, marking)`` may return a truthy value to stop early."""
        s0, _ = self.canon(m0)
        states = [s0]
        index = {s0: 0}
        depth = [0]
        parent: list[Optional[tuple[int, str, Binding]]] = [None]
        edges: list[Edge] = []
        hit = visit(0, s0) if visit else None
        if hit is not None:
            return states, edges, depth, parent, True, "stopped", (0, hit)
        queue = deque([0])
        exhausted = True
        status = "complete"
        while queue:
            i = queue.popleft()
            if depth[i] >= self.limits.max_depth:
                exhausted = False
                status = "depth-limit"
                continue
            for t, sigma, m2 in self.successors(states[i]):
                # canonical forms are idempotent, so an unchanged state maps to itself
                c = states[i] if m2 == states[i] else self.canon(m2)[0]
                j = index.get(c)
                if j is None:
                    if len(states) >= self.limits.max_states:
                        exhausted = False
                        status = "state-limit"
                        break
                    j = len(states)
                    index[c] = j
                    states.append(c)
                    depth.append(depth[i] + 1)
                    parent.append((i, t.name, sigma))
                    queue.append(j)
                    edges.append(Edge(i, t.name, sigma, j))
                    hit = visit(j, c) if visit else None
                    if hit is not None:
                        return states, edges, depth, parent, False, "stopped", (j, hit)
                else:
                    edges.append(Edge(i, t.name, sigma, j))
            else:
                continue
            break
        return states, edges, depth, parent, exhausted, status, None


def explore(net: Net, m0: Marking, cat: CatalogInstance, limits: ExplorationLimits = ExplorationLimits(),
            policy: FreshPolicy = CANONICAL, canonical: bool = True,
            protected: Iterable[Value] = ()) -> TransitionSystem:
    ex = _Explorer(net, cat, limits, policy, canonical, protected)
    states, edges, depth, _, exhausted, status, _ = ex.run(m0)
    return TransitionSystem(states, edges, depth, exhausted, status=status)


def _concretize(ex: _Explorer, states: list[Marking], parent, target: int, m0: Marking) -> list[Step]:
    """Replay the BFS path to ``target`` from the concrete initial marking."""
    path = []
    j = target
    while parent[j] is not None:
        i, tname, sigma = parent[j]
        path.append((i, tname, sigma, j))
        j = i
    path.reverse()
    net, cat = ex.net, ex.cat
    m = m0
    _, ren = ex.canon(m)
    steps = []
    for i, tname, sigma, j in path:
        t = net.transition(tname)
        if not ex.canonical:
            m2 = fire(net, m, cat, t, sigma)
            steps.append(Step(m, tname, sigma, m2))
            m = m2
            continue
        inv = {v: k for k, v in ren.items()}
        fresh_names = {f.name for f in t.fresh_vars()}
        conc = {}
        for name, v in sigma.items():
            if name not in fresh_names:
                conc[name] = inv.get(v, v)
        used = m.values() | ex.protected
        taken: set[Value] = set()
        for f in t.fresh_vars():
            cands = fresh_candidates(f.type, used | taken, 1)
            conc[f.name] = cands[0]
            taken.add(cands[0])
        conc_sigma = Substitution(conc)
        m2 = fire(net, m, cat, t, conc_sigma)
        c2, ren = ex.canon(m2)
        if c2 != states[j]:
            raise AssertionError(f"witness replay diverged at {tname}")
        steps.append(Step(m, tname, conc_sigma, m2))
        m = m2
    return steps


def check_safety(net: Net, m0: Marking, cat: CatalogInstance, prop: Property,
                 limits: ExplorationLimits = ExplorationLimits(), policy: FreshPolicy = CANONICAL,
                 canonical: bool = True) -> Verdict:
    """Search for a reachable marking satisfying the (unsafe) property."""
    typecheck_property(net, prop)
    ex = _Explorer(net, cat, limits, policy, canonical, prop.consts())
    states, _, _, parent, exhausted, status, hit = ex.run(m0, lambda i, m: eval_property(prop, m, cat))
    if hit is None:
        return Verdict(True, len(states), exhausted, status=status)
    j, _ = hit
    steps = _concretize(ex, states, parent, j, m0)
    final = steps[-1].after if steps else m0
    assignment = eval_property(prop, final, cat)
    witness = Witness(m0, steps, assignment, cat)
    if not replay_witness(net, prop, witness):
        raise AssertionError("witness does not replay")
    return Verdict(False, len(states), False, witness, status="unsafe")


def replay_witness(net: Net, prop: Property, w: Witness) -> bool:
    m = w.initial
    for step in w.steps:
        t = net.transition(step.transition)
        if step.before != m or not is_enabled(net, m, w.catalog, t, step.binding):
            return False
        m = fire(net, m, w.catalog, t, step.binding)
        if m != step.after:
            return False
    return eval_property(prop, m, w.catalog) is not None


def _check_one(args):
    net, m0, cat, prop, limits, policy = args
    return check_safety(net, m0, cat, prop, limits, policy)


def parameterised_check(net: Net, m0: Marking, prop: Property, schema: Optional[CatalogSchema] = None,
                        max_facts: Mapping[str, int] | int = 2, pool_sizes: Mapping[str, int] | int = 2,
                        limits: ExplorationLimits = ExplorationLimits(), policy: FreshPolicy = CANONICAL,
                        fixed: Optional[CatalogInstance] = None, jobs: int = 1) -> Verdict:
    """Run check_safety under every enumerated catalog; the first unsafe one wins.

    Catalog values are the pool values plus every named constant of the net,
    the initial marking and the property.
    """
    schema = schema or net.schema
    typecheck_property(net, prop)
    consts = set(net.constants()) | set(m0.values()) | set(prop.consts())
    cats = list(enumerate_catalogs(schema, max_facts, pool_sizes, consts, fixed))
    total_states = 0
    exhausted = True
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool_:
            results = pool_.map(_check_one, [(net, m0, c, prop, limits, policy) for c in cats])
            for n, v in enumerate(results, 1):
                total_states += v.states
                if not v.safe:
                    v.catalogs_checked = n
                    v.states = total_states
                    return v
                exhausted &= v.exhausted
        return Verdict(True, total_states, exhausted, catalogs_checked=len(cats))
    for n, cat in enumerate(cats, 1):
        v = check_safety(net, m0, cat, prop, limits, policy)
        log.debug("catalog %d/%d: %s after %d states", n, len(cats), v.label, v.states)
        total_states += v.states
        if not v.safe:
            v.catalogs_checked = n
            v.states = total_states
            return v
        exhausted &= v.exhausted
    return Verdict(True, total_states, exhausted, catalogs_checked=len(cats))


@dataclass
class BoundReport:
    bounded: bool
    states: int
    exhausted: bool
    place: Optional[str] = None
    marking: Optional[Marking] = None


def check_bounded(net: Net, m0: Marking, cat: CatalogInstance, b: int,
                  limits: ExplorationLimits = ExplorationLimits()) -> BoundReport:
    if b < 0:
        raise ValueError("bound must be non-negative")
    ex = _Explorer(net, cat, limits)

    def over(i: int, m: Marking):
        for p in m.places():
            if len(m[p]) > b:
                return p
        return None

    states, _, _, parent, exhausted, _, hit = ex.run(m0, over)
    if hit is None:
        return BoundReport(True, len(states), exhausted)
    j, place = hit
    steps = _concretize(ex, states, parent, j, m0)
    final = steps[-1].after if steps else m0
    return BoundReport(False, len(states), False, place, final)


@dataclass
class PoolEquivalence:
    k: int
    original: Verdict
    conservativized: Verdict

    @property
    def agree(self) -> bool:
        return self.original.safe == self.conservativized.safe


def bounded_pool_equivalence(net: Net, m0: Marking, prop: Property, cat: CatalogInstance, k: int,
                             limits: ExplorationLimits = ExplorationLimits()) -> PoolEquivalence:
    """Compare fresh generation capped at ``k`` pool values with ``k`` created catalog values.

    The original net is checked under ``cat`` with nu-values limited to the
    first ``k`` pool indexes; its catalog-mode conservativization is checked
    under every extension of ``cat`` with at most ``k`` facts per created
    relation.
    """
    from .transforms import conservativize

    if k < 1:
        raise ValueError("k must be positive")
    capped = ExplorationLimits(limits.max_states, limits.max_depth, limits.token_bound, k)
    original = check_safety(net, m0, cat, prop, capped)
    cons = conservativize(net, "catalog")
    created = {r: k for r in cons.new_relations}
    pools = {cons.net.schema[r].key_type: k for r in cons.new_relations}
    v = parameterised_check(cons.net, m0, prop, max_facts=created, pool_sizes=pools, limits=limits, fixed=cat)
    return PoolEquivalence(k, original, v)
