"""R-values, immutable heaps, deterministic allocation, and finite heap universes.

A heap is a finite map from named locations to first-order storable values
(ints, bools, unit, null, locations, and finite tuples of these).  A heap
universe fixes the finite set of heaps from which environment handovers and
evaluation pre-states are drawn; every verdict downstream is exact relative
to the configured universe.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iproduct

MAX_TUPLE_DEPTH = 16


class StoreError(Exception):
    pass


class MissingLocation(StoreError):
    """Lookup of a location absent from the heap."""


class AllocationError(StoreError):
    """The allocation pool is exhausted."""


@dataclass(frozen=True)
class Loc:
    """A concrete location name."""

    name: str

    def __repr__(self) -> str:
        return f"&{self.name}"


def is_rvalue(v, _depth: int = 0) -> bool:
    """True for storable first-order values (bounded tuple nesting)."""
    if _depth > MAX_TUPLE_DEPTH:
        return False
    if v is None or isinstance(v, (bool, int, Loc)):
        return True
    if isinstance(v, tuple):
        return all(is_rvalue(x, _depth + 1) for x in v)
    return False


def rvalue_repr(v) -> str:
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, Loc):
        return v.name
    if isinstance(v, tuple):
        if v == ():
            return "()"
        return "(" + ", ".join(rvalue_repr(x) for x in v) + ")"
    return repr(v)


class Heap:
    """An immutable finite map from Loc to r-value.

    Equality and hashing are structural; instances from one universe are
    interned so the game solver can key memo tables on identity-sized hashes.
    """

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, mapping):
        items = tuple(sorted(mapping.items(), key=lambda kv: kv[0].name))
        for loc, val in items:
            if not isinstance(loc, Loc):
                raise StoreError(f"heap key is not a location: {loc!r}")
            if not is_rvalue(val):
                raise StoreError(f"not a storable value: {val!r}")
        object.__setattr__(self, "_items", items)
        object.__setattr__(self, "_map", dict(items))
        object.__setattr__(self, "_hash", hash(items))

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("heaps are immutable")

    @property
    def items(self):
        return self._items

    @property
    def domain(self) -> frozenset:
        return frozenset(self._map)

    def __contains__(self, loc: Loc) -> bool:
        return loc in self._map

    def get(self, loc: Loc):
        try:
            return self._map[loc]
        except KeyError:
            raise MissingLocation(f"location {loc.name} not in heap") from None

    def set(self, loc: Loc, val) -> "Heap":
        m = dict(self._map)
        m[loc] = val
        return Heap(m)

    def __eq__(self, other) -> bool:
        return isinstance(other, Heap) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        body = ", ".join(f"{l.name}:{rvalue_repr(v)}" for l, v in self._items)
        return "{" + body + "}"


def heap_new(h: Heap, v, pool) -> tuple[Loc, Heap]:
    """Allocate the first unused pool location; deterministic first-fit."""
    for loc in pool:
        if loc not in h:
            return loc, h.set(loc, v)
    raise AllocationError("allocation pool exhausted")


class HeapUniverse:
    """A finite set of heaps, plus the declared structure that produced it.

    ``domains`` lists per-location value domains where the universe is a
    plain product; structured universes (linked lists, queues) enumerate
    their heap set explicitly and leave ``domains`` partial.  ``initial``
    is the subset from which game plays may start; it defaults to every
    heap and is narrowed for allocation-heavy worlds so that a bounded
    play never runs out of pool slack (reported on every verdict).
    """

    def __init__(self, heaps, domains=None, pool=(), pool_domain=(),
                 initial=None, note: str = ""):
        self.heaps: tuple[Heap, ...] = tuple(heaps)
        self._index = {h: i for i, h in enumerate(self.heaps)}
        self.domains: dict[Loc, tuple] = dict(domains or {})
        self.pool: tuple[Loc, ...] = tuple(pool)
        self.pool_domain: tuple = tuple(pool_domain)
        self.initial: tuple[Heap, ...] = tuple(initial) if initial is not None else self.heaps
        self.note = note
        self._by_superdomain: dict[frozenset, tuple[Heap, ...]] = {}

    @classmethod
    def product(cls, domains, pool=(), pool_domain=(), note=""):
        """All heaps assigning each declared location a value from its domain."""
        domains = {loc: tuple(vals) for loc, vals in domains.items()}
        for loc, vals in domains.items():
            if not vals:
                raise StoreError(f"empty domain for {loc.name}")
        locs = sorted(domains, key=lambda l: l.name)
        heaps = [Heap(dict(zip(locs, choice)))
                 for choice in iproduct(*(domains[l] for l in locs))]
        return cls(heaps, domains=domains, pool=pool, pool_domain=pool_domain, note=note)

    def __len__(self) -> int:
        return len(self.heaps)

    def __contains__(self, h: Heap) -> bool:
        return h in self._index

    def index(self, h: Heap) -> int:
        return self._index[h]

    def intern(self, h: Heap) -> Heap | None:
        """The canonical universe instance equal to ``h``, or None if outside."""
        i = self._index.get(h)
        return None if i is None else self.heaps[i]

    def heaps_covering(self, dom: frozenset) -> tuple[Heap, ...]:
        """Universe heaps whose domain includes ``dom`` (trace monotonicity)."""
        key = frozenset(dom)
        got = self._by_superdomain.get(key)
        if got is None:
            got = tuple(h for h in self.heaps if key <= h.domain)
            self._by_superdomain[key] = got
        return got


def enumerate_heaps(u: HeapUniverse, doms) -> list[Heap]:
    """All heaps over exactly the locations ``doms``, in canonical order.

    Canonical order: locations sorted by name, their values in declared
    domain order, rightmost location varying fastest.
    """
    doms = list(doms)
    for loc in doms:
        if loc not in u.domains and loc not in u.pool:
            raise StoreError(f"unknown location {loc.name}")
    locs = sorted(set(doms), key=lambda l: l.name)
    cols = [u.domains.get(l, u.pool_domain) for l in locs]
    return [Heap(dict(zip(locs, choice))) for choice in iproduct(*cols)]


@dataclass
class ClosureReport:
    """Result of the conservative universe-closure scan."""

    warnings: list

    @property
    def clean(self) -> bool:
        return not self.warnings

    def __repr__(self) -> str:
        if self.clean:
            return "ClosureReport(clean)"
        return "ClosureReport(" + "; ".join(self.warnings) + ")"


def check_closure(u: HeapUniverse, program) -> ClosureReport:
    """Warn when a write can leave the declared per-location domain.

    Syntactic interval-style scan: literals and reads of declared locations
    have known value sets, ``+``/``-`` combine them, anything else is
    unknown.  Unknown or out-of-domain payloads yield warnings; verdicts
    computed under a warned universe hold only relative to it.
    """
    from . import lang  # cycle-free: lang does not import store at module top

    warnings: list[str] = []

    def vals_of(term, env):
        if isinstance(term, lang.Lit):
            return {term.value}
        if isinstance(term, lang.Var):
            return env.get(term.name)
        if isinstance(term, lang.Pair):
            return None
        return None

    def scan(term, env):
        if isinstance(term, lang.Let):
            body_env = dict(env)
            if isinstance(term.bound, lang.Read) and isinstance(term.bound.target, lang.Lit) \
                    and isinstance(term.bound.target.value, Loc):
                loc = term.bound.target.value
                body_env[term.var] = set(u.domains.get(loc, ())) or None
            elif isinstance(term.bound, lang.App) and isinstance(term.bound.fun, lang.Const) \
                    and term.bound.fun.name in ("+", "-") \
                    and isinstance(term.bound.arg, lang.Pair):
                a = vals_of(term.bound.arg.fst, env)
                b = vals_of(term.bound.arg.snd, env)
                if a is not None and b is not None and all(
                        isinstance(x, int) and not isinstance(x, bool) for x in a | b):
                    op = (lambda x, y: x + y) if term.bound.fun.name == "+" else (lambda x, y: x - y)
                    body_env[term.var] = {op(x, y) for x in a for y in b}
                else:
                    body_env[term.var] = None
            else:
                scan(term.bound, env)
                body_env[term.var] = None
            scan(term.body, body_env)
            return
        if isinstance(term, lang.Write):
            tgt = term.target
            if isinstance(tgt, lang.Lit) and isinstance(tgt.value, Loc) and tgt.value in u.domains:
                dom = set(u.domains[tgt.value])
                vals = vals_of(term.payload, env)
                if vals is None:
                    warnings.append(f"write to {tgt.value.name}: payload not statically bounded")
                else:
                    out = sorted(vals - dom, key=repr)
                    if out:
                        warnings.append(
                            f"write to {tgt.value.name}: possible values {out} outside domain")
            return
        for child in lang.children(term):
            scan(child, env)

    scan(program, {})
    return ClosureReport(warnings)
