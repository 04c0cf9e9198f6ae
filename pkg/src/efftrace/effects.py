"""Effect sets over abstract locations, their operators, and tiling.

Effects are sets of atoms ``rd l``, ``wr l``, ``ch l`` naming abstract
locations of the ambient world.  A chaotic effect is a write whose
intermediate states the environment must not look at; well-formedness
requires chaotic locations to be flagged as written and never read within
the same effect.  In concrete syntax ``ch(l)`` implies ``wr(l)``.

Tiling ``[e](h, h', h1, h1')`` is the semantic contract of an effect: both
heaps evolve along steps of the written locations (plus silent moves of
everything else), and when the two sides agree on the read locations the
non-chaotic writes are either strict on both sides or land in
semantically equal states.
"""

from __future__ import annotations

from dataclasses import dataclass

from .abstract_loc import AbstractLocation, World
from .store import Heap, HeapUniverse

KINDS = ("rd", "wr", "ch")


class EffectError(Exception):
    pass


@dataclass(frozen=True)
class EffectSet:
    atoms: frozenset  # of (kind, location name)

    @staticmethod
    def of(*pairs) -> "EffectSet":
        out = set()
        for kind, name in pairs:
            if kind not in KINDS:
                raise EffectError(f"unknown effect kind {kind}")
            out.add((kind, name))
        return EffectSet(frozenset(out))

    @staticmethod
    def empty() -> "EffectSet":
        return EffectSet(frozenset())

    def kind(self, kind: str) -> frozenset:
        return frozenset(name for k, name in self.atoms if k == kind)

    @property
    def rds(self) -> frozenset:
        return self.kind("rd")

    @property
    def wrs(self) -> frozenset:
        return self.kind("wr")

    @property
    def chs(self) -> frozenset:
        return self.kind("ch")

    @property
    def locs(self) -> frozenset:
        return frozenset(name for _, name in self.atoms)

    def union(self, other: "EffectSet") -> "EffectSet":
        return EffectSet(self.atoms | other.atoms)

    def __or__(self, other):
        return self.union(other)

    def issubset(self, other: "EffectSet") -> bool:
        return self.atoms <= other.atoms

    def __bool__(self):
        return bool(self.atoms)

    def __iter__(self):
        return iter(sorted(self.atoms))

    def __repr__(self):
        return f"Eff({format_effects(self)})"


def wf_effect(e: EffectSet, w: World) -> list:
    """Well-formedness violations of ``e`` against the world (empty = ok)."""
    problems = []
    names = {l.name for l in w.locations}
    if not e.locs <= names:
        problems.append(f"unknown locations {sorted(e.locs - names)}")
    if e.rds & e.chs:
        problems.append(f"locations both read and chaotic: {sorted(e.rds & e.chs)}")
    if not e.chs <= e.wrs:
        problems.append(f"chaotic without write: {sorted(e.chs - e.wrs)}")
    return problems


def require_wf(e: EffectSet, w: World):
    problems = wf_effect(e, w)
    if problems:
        raise EffectError(f"ill-formed effect {e!r}: " + "; ".join(problems))


@dataclass(frozen=True)
class EffectSpec:
    """(during, rely, end-to-end) with rely included in end-to-end."""

    during: EffectSet
    rely: EffectSet
    total: EffectSet

    def __post_init__(self):
        if not self.rely.issubset(self.total):
            raise EffectError(
                f"rely {self.rely!r} not included in end-to-end {self.total!r}")

    def validate(self, w: World):
        for e in (self.during, self.rely, self.total):
            require_wf(e, w)
        return self

    def __repr__(self):
        return (f"({format_effects(self.during)} | {format_effects(self.rely)}"
                f" | {format_effects(self.total)})")


def chaoticize(e: EffectSet) -> EffectSet:
    """Reads dropped, every write weakened to a chaotic write."""
    out = set()
    for name in e.wrs | e.chs:
        out.add(("wr", name))
        out.add(("ch", name))
    return EffectSet(frozenset(out))


def ortho(e1: EffectSet, e2: EffectSet) -> bool:
    """Disjointness making the two effects commute."""
    return not (e1.rds & e2.wrs or e2.rds & e1.wrs or e1.wrs & e2.wrs)


def join_par(e1: EffectSet, e2: EffectSet) -> EffectSet:
    """Parallel join: keep writes and chaotics only when both sides have them."""
    both = e1.atoms & e2.atoms
    out = set()
    for atom in e1.atoms | e2.atoms:
        if atom[0] in ("wr", "ch") and atom not in both:
            continue
        out.add(atom)
    return EffectSet(frozenset(out))


# --------------------------------------------------------------------------
# Concrete syntax
# --------------------------------------------------------------------------

def parse_effects(text: str) -> EffectSet:
    """``rd(X) wr(X) ch(msq.H)``; ``ch`` implies ``wr``; '0', '-' empty."""
    text = text.strip()
    if text in ("", "0", "-", "none", "empty"):
        return EffectSet.empty()
    out = set()
    for piece in text.replace(",", " ").split():
        piece = piece.strip()
        if not piece:
            continue
        if "(" in piece:
            kind, rest = piece.split("(", 1)
            if not rest.endswith(")"):
                raise EffectError(f"bad effect atom {piece!r}")
            name = rest[:-1].strip()
        else:
            kind, name = piece, None
        kind = kind.strip()
        if kind not in KINDS:
            raise EffectError(f"unknown effect kind in {piece!r}")
        if name is None:
            raise EffectError(f"effect atom {piece!r} names no location")
        out.add((kind, name))
        if kind == "ch":
            out.add(("wr", name))
    return EffectSet(frozenset(out))


def format_effects(e: EffectSet) -> str:
    if not e.atoms:
        return "0"
    parts = []
    for name in sorted(e.rds):
        parts.append(f"rd({name})")
    for name in sorted(e.wrs):
        if name in e.chs:
            continue
        parts.append(f"wr({name})")
    for name in sorted(e.chs):
        parts.append(f"ch({name})")
    return " ".join(parts)


# --------------------------------------------------------------------------
# Step reachability and tiling over a fixed world and universe
# --------------------------------------------------------------------------

def step_successors_one(l: AbstractLocation, h: Heap, u: HeapUniverse):
    """Direct step successors of ``h`` (excluding the trivial identity)."""
    if l.step_gen is not None:
        yield from l.step_gen(h, u)
    else:
        for h1 in u.heaps:
            if h1 != h and l.step_pair(h, h1):
                yield h1


def step_closure_rows(l: AbstractLocation, u: HeapUniverse) -> list:
    """Index rows of the location's full (transitive, support-reflexive) step."""
    n = len(u.heaps)
    rows = [set() for _ in range(n)]
    if l.step_pair is not None:
        for i, h in enumerate(u.heaps):
            for j, h1 in enumerate(u.heaps):
                if l.step_pair(h, h1):
                    rows[i].add(j)
        return rows
    # reflexive-transitive closure of generated single steps
    for i, h in enumerate(u.heaps):
        if not l.in_support(h):
            continue
        seen = {i}
        frontier = [h]
        while frontier:
            nxt = []
            for g in frontier:
                for s in l.step_gen(g, u):
                    j = u.index(s)
                    if j not in seen:
                        seen.add(j)
                        nxt.append(s)
            frontier = nxt
        rows[i] = seen
    return rows


class EffectContext:
    """Cached relation tables for one (world, universe) pair."""

    def __init__(self, w: World, u: HeapUniverse):
        self.w = w
        self.u = u
        self.sat = w.sat_set(u)
        self.sat_idx = frozenset(u.index(h) for h in self.sat)
        self._rel_rows = {}
        self._reach = {}
        self._dom_rows = None

    def dom_rows(self) -> list:
        """Per heap index, the indices of heaps with a superset domain."""
        if self._dom_rows is None:
            doms = [h.domain for h in self.u.heaps]
            self._dom_rows = [frozenset(j for j, dj in enumerate(doms) if di <= dj)
                              for di in doms]
        return self._dom_rows

    def tiler(self, e: EffectSet):
        """An index-level tile decision closure for the hot game loop."""
        reach = self.reach_rows(e)
        sat = self.sat_idx
        rds_rows = [self._rows(nm)[0] for nm in sorted(e.rds)]
        sync = [(self._rows(nm)[1], self._rows(nm)[0])
                for nm in sorted(e.wrs - e.chs)]

        def tile_idx(i, ip, j, jp):
            if i in sat and j not in reach[i]:
                return False
            if ip in sat and jp not in reach[ip]:
                return False
            if sync and all(ip in r[i] for r in rds_rows):
                for strict, sim in sync:
                    if j in strict[i] and jp in strict[ip]:
                        continue
                    if jp in sim[j]:
                        continue
                    return False
            return True

        return tile_idx

    def _rows(self, locname: str):
        got = self._rel_rows.get(locname)
        if got is None:
            l = self.w.by_name(locname)
            n = len(self.u.heaps)
            sim = [set() for _ in range(n)]
            strict = [set() for _ in range(n)]
            for i, h in enumerate(self.u.heaps):
                for j, h1 in enumerate(self.u.heaps):
                    if l.sim(h, h1):
                        sim[i].add(j)
                    if l.strict(h, h1):
                        strict[i].add(j)
            step = step_closure_rows(l, self.u)
            silent = [step[i] & strict[i] for i in range(n)]
            got = (sim, strict, step, silent)
            self._rel_rows[locname] = got
        return got

    def sim_ok(self, locname: str, h: Heap, h1: Heap) -> bool:
        return self.u.index(h1) in self._rows(locname)[0][self.u.index(h)]

    def strict_ok(self, locname: str, h: Heap, h1: Heap) -> bool:
        return self.u.index(h1) in self._rows(locname)[1][self.u.index(h)]

    def sim_all(self, locnames, h: Heap, h1: Heap) -> bool:
        return all(self.sim_ok(n, h, h1) for n in locnames)

    def reach_rows(self, e: EffectSet) -> list:
        """Reachability under writes of ``e`` plus silent moves of the world."""
        key = e.wrs
        got = self._reach.get(key)
        if got is not None:
            return got
        n = len(self.u.heaps)
        edges = [set() for _ in range(n)]
        for name in e.wrs:
            rows = self._rows(name)[2]
            for i in range(n):
                edges[i] |= rows[i]
        for l in self.w.locations:
            rows = self._rows(l.name)[3]
            for i in range(n):
                edges[i] |= rows[i]
        # reflexive-transitive closure
        reach = [None] * n
        for i in range(n):
            seen = {i}
            frontier = [i]
            while frontier:
                nxt = []
                for j in frontier:
                    for k in edges[j]:
                        if k not in seen:
                            seen.add(k)
                            nxt.append(k)
                frontier = nxt
            reach[i] = frozenset(seen)
        self._reach[key] = reach
        return reach

    def step_rel(self, e: EffectSet, h: Heap, h1: Heap) -> bool:
        return self.u.index(h1) in self.reach_rows(e)[self.u.index(h)]

    def succ(self, e: EffectSet, h: Heap) -> tuple:
        """All heaps reachable from ``h`` under the effect's step relation."""
        row = self.reach_rows(e)[self.u.index(h)]
        return tuple(self.u.heaps[j] for j in sorted(row))

    def tile(self, e: EffectSet, h: Heap, hp: Heap, h1: Heap, h1p: Heap) -> bool:
        u = self.u
        i, ip, j, jp = u.index(h), u.index(hp), u.index(h1), u.index(h1p)
        reach = self.reach_rows(e)
        if i in self.sat_idx and j not in reach[i]:
            return False
        if ip in self.sat_idx and jp not in reach[ip]:
            return False
        sync = e.wrs - e.chs
        if sync and all(ip in self._rows(nm)[0][i] for nm in e.rds):
            for nm in sync:
                strict = self._rows(nm)[1]
                if j in strict[i] and jp in strict[ip]:
                    continue
                if jp in self._rows(nm)[0][j]:
                    continue
                return False
        return True


_ctx_cache: dict = {}


def context(w: World, u: HeapUniverse) -> EffectContext:
    key = (id(w), id(u))
    got = _ctx_cache.get(key)
    if got is None:
        got = EffectContext(w, u)
        _ctx_cache[key] = got
    return got


def step_rel(e: EffectSet, h: Heap, h1: Heap, u: HeapUniverse, w: World) -> bool:
    """``h`` evolves to ``h1`` by writes recorded in ``e`` plus silent moves."""
    return context(w, u).step_rel(e, h, h1)


def tile(e: EffectSet, h: Heap, hp: Heap, h1: Heap, h1p: Heap,
         u: HeapUniverse, w: World) -> bool:
    return context(w, u).tile(e, h, hp, h1, h1p)
