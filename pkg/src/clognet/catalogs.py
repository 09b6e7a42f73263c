"""Small-scope enumeration of catalog instances, canonical up to value renaming."""

from __future__ import annotations

import itertools
from typing import Iterable, Iterator, Mapping, Optional

from .core import CatalogInstance, CatalogSchema, Value, pool, validate_instance


def _domains(schema: CatalogSchema, pool_sizes: Mapping[str, int] | int,
             constants: Iterable[Value]) -> dict[str, list[Value]]:
    consts: dict[str, set[Value]] = {}
    for c in constants:
        consts.setdefault(c.type, set()).add(c)
    out = {}
    for ty in schema.domain.names():
        n = pool_sizes if isinstance(pool_sizes, int) else pool_sizes.get(ty, 0)
        if n < 0:
            raise ValueError(f"pool size for {ty} must be non-negative")
        out[ty] = sorted(consts.get(ty, ())) + [pool(ty, i) for i in range(n)]
    return out


def _perms(domains: dict[str, list[Value]]) -> list[dict[Value, Value]]:
    """All renamings permuting the pool values of each type."""
    per_type = []
    for ty, vals in sorted(domains.items()):
        pooled = [v for v in vals if v.is_pool]
        per_type.append([dict(zip(pooled, p)) for p in itertools.permutations(pooled)])
    out = []
    for combo in itertools.product(*per_type):
        ren: dict[Value, Value] = {}
        for part in combo:
            ren.update(part)
        out.append(ren)
    return out


def _key(facts: dict[str, tuple]) -> tuple:
    return tuple((r, tuple(sorted(rows))) for r, rows in sorted(facts.items()))


def _renamed(facts: dict[str, tuple], ren: dict[Value, Value]) -> tuple:
    return _key({r: tuple(tuple(ren.get(v, v) for v in row) for row in rows) for r, rows in facts.items()})


def enumerate_catalogs(schema: CatalogSchema, max_facts: Mapping[str, int] | int,
                       pool_sizes: Mapping[str, int] | int, constants: Iterable[Value] = (),
                       fixed: Optional[CatalogInstance] = None) -> Iterator[CatalogInstance]:
    """Yield every legal instance with at most ``max_facts`` facts per relation.

    Values come from the given named ``constants`` plus ``pool_sizes`` pool
    values per type; instances equal up to a renaming of pool values are
    emitted once. Relations present in ``fixed`` keep its facts. Order is by
    total fact count, then by the instance's sorted fact listing.
    """
    domains = _domains(schema, pool_sizes, constants)
    per_rel: list[tuple[str, list[tuple]]] = []
    fixed_rels = set(fixed.relations()) if fixed is not None else set()
    for rel in schema.relations:
        if rel.name in fixed_rels:
            per_rel.append((rel.name, [tuple(fixed.facts(rel.name))]))
            continue
        k = max_facts if isinstance(max_facts, int) else max_facts.get(rel.name, 0)
        if k < 0:
            raise ValueError("max facts must be non-negative")
        rows = list(itertools.product(*(domains[t] for t in rel.types())))
        subsets = []
        for size in range(min(k, len(rows)) + 1):
            for combo in itertools.combinations(rows, size):
                if len({row[0] for row in combo}) == size:
                    subsets.append(combo)
        per_rel.append((rel.name, subsets))
    perms = _perms(domains) if fixed is None else _fixing(domains, fixed)
    found = []
    for combo in itertools.product(*(subs for _, subs in per_rel)):
        facts = {name: rows for (name, _), rows in zip(per_rel, combo)}
        key = _key(facts)
        if any(_renamed(facts, ren) < key for ren in perms):
            continue
        cat = CatalogInstance(schema, facts)
        if validate_instance(cat).ok:
            found.append((len(cat), key, cat))
    found.sort(key=lambda x: (x[0], x[1]))
    for _, _, cat in found:
        yield cat


def _fixing(domains: dict[str, list[Value]], fixed: CatalogInstance) -> list[dict[Value, Value]]:
    pinned = fixed.values()
    return [ren for ren in _perms(domains) if all(ren.get(v, v) == v for v in pinned)]
