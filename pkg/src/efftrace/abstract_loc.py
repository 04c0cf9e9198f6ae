"""Concurrent abstract locations and worlds.

An abstract location is a contract over heaps: a semantic equivalence
(which heaps look the same through the location), a finer strict
equivalence (what an interrupted operation on the location is willing to
resume across), and a step relation (how writers may change the heap).
The step relation is transitive and reflexive on the support of the
semantic equivalence; a step that is also a strict equivalence is a
*silent move* and is permitted at all times.

Relations are pure decision procedures; per-universe closure tables are
built by callers (see effects.StepTables).  Laws are validated over the
configured universe at load time rather than trusted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .store import Heap, HeapUniverse, Loc


class WorldError(Exception):
    pass


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


@dataclass(frozen=True)
class AbstractLocation:
    """Relation triple (sim, strict, step) plus an optional footprint.

    ``step_pair`` must already be transitive; location families whose
    writers act in indivisible moves supply ``step_gen`` (single-step
    successors within a universe) instead, and the reflexive-transitive
    closure is taken when tables are built.
    """

    name: str
    sim: object
    strict: object
    step_pair: object = None
    step_gen: object = None
    footprint: frozenset = frozenset()

    def in_support(self, h: Heap) -> bool:
        return self.sim(h, h)

    def __repr__(self):
        return f"<absloc {self.name}>"


def silent_move(h: Heap, h1: Heap, l: AbstractLocation, u: HeapUniverse = None) -> bool:
    """A step that is also strict-equivalent; permitted at all times."""
    if l.step_pair is not None:
        return l.step_pair(h, h1) and l.strict(h, h1)
    # single-step families: silence along a composite forces strict
    # equivalence at each hop; with identity the only strict step in all
    # built-ins, checking the reflexive case plus one hop suffices.
    if h == h1:
        return l.in_support(h)
    if u is None:
        raise WorldError(f"{l.name}: composite step relation needs a universe")
    return h1 in set(l.step_gen(h, u)) and l.strict(h, h1)


# --------------------------------------------------------------------------
# Built-in location families
# --------------------------------------------------------------------------

def _frame_equal(h: Heap, h1: Heap, exempt: frozenset) -> bool:
    """Equal domains and equal values outside ``exempt``."""
    if h.domain != h1.domain:
        return False
    for loc, val in h.items:
        if loc not in exempt and h1.get(loc) != val:
            return False
    return True


def loc_int(x: Loc, name: str = None) -> AbstractLocation:
    """A single integer stored at ``x``; other locations are left alone."""

    def sim(h, h1):
        return x in h and x in h1 and _int(h.get(x)) and h.get(x) == h1.get(x)

    def step(h, h1):
        return sim(h, h) and sim(h1, h1) and _frame_equal(h, h1, frozenset([x]))

    return AbstractLocation(name or x.name, sim, sim, step_pair=step,
                            footprint=frozenset([x]))


def pair_split(m: int, base: int):
    """The finite bijection between 0 <= m < base*base and value pairs."""
    return m // base, m % base


def pair_join(a: int, b: int, base: int) -> int:
    return a * base + b


def _loc_projection(x: Loc, base: int, keep: int, name: str) -> AbstractLocation:
    def ok(h):
        return x in h and _int(h.get(x)) and 0 <= h.get(x) < base * base

    def proj(h):
        return pair_split(h.get(x), base)[keep]

    def other(h):
        return pair_split(h.get(x), base)[1 - keep]

    def sim(h, h1):
        return ok(h) and ok(h1) and proj(h) == proj(h1)

    def step(h, h1):
        return (sim(h, h) and sim(h1, h1)
                and _frame_equal(h, h1, frozenset([x]))
                and other(h) == other(h1))

    return AbstractLocation(name, sim, sim, step_pair=step, footprint=frozenset([x]))


def loc_fst(x: Loc, base: int, name: str = None) -> AbstractLocation:
    """First projection of the pair packed into the integer at ``x``."""
    return _loc_projection(x, base, 0, name or f"fst.{x.name}")


def loc_snd(x: Loc, base: int, name: str = None) -> AbstractLocation:
    return _loc_projection(x, base, 1, name or f"snd.{x.name}")


def loc_vercell(xval: Loc, xver: Loc, name: str = None) -> AbstractLocation:
    """A value cell guarded by a version that grows whenever it changes."""

    def ok(h):
        return xval in h and xver in h and _int(h.get(xval)) and _int(h.get(xver))

    def sim(h, h1):
        return ok(h) and ok(h1) and h.get(xval) == h1.get(xval)

    def step(h, h1):
        if not (sim(h, h) and sim(h1, h1)):
            return False
        if not _frame_equal(h, h1, frozenset([xval, xver])):
            return False
        if h.get(xver) > h1.get(xver):
            return False
        if h.get(xval) != h1.get(xval) and not h.get(xver) < h1.get(xver):
            return False
        return True

    return AbstractLocation(name or f"ver.{xval.name}", sim, sim, step_pair=step,
                            footprint=frozenset([xval, xver]))


# -- linked lists ------------------------------------------------------------

def walk_list(head: Loc, h: Heap):
    """Nodes and elements of the list rooted at ``head``, or None.

    A well-formed list is a null-terminated chain of (elem, next) cells
    with integer elements and no sharing.
    """
    if head not in h:
        return None
    ptr = h.get(head)
    nodes, elems, seen = [], [], set()
    while ptr is not None:
        if not isinstance(ptr, Loc) or ptr in seen or ptr not in h:
            return None
        cell = h.get(ptr)
        if not (isinstance(cell, tuple) and len(cell) == 2 and _int(cell[0])):
            return None
        if not (cell[1] is None or isinstance(cell[1], Loc)):
            return None
        seen.add(ptr)
        nodes.append(ptr)
        elems.append(cell[0])
        ptr = cell[1]
    return nodes, elems


def _loc_list_parity(head: Loc, nodes: tuple, parity: int, name: str) -> AbstractLocation:
    """Elements at 1-based positions of the given parity (1 odd, 0 even)."""

    def mine(elems):
        return tuple(e for i, e in enumerate(elems, start=1) if i % 2 == parity)

    def theirs_nodes(ns, h):
        out = []
        for i, n in enumerate(ns, start=1):
            if i % 2 != parity:
                out.append((n, h.get(n)))
        return tuple(out)

    def sim(h, h1):
        a, b = walk_list(head, h), walk_list(head, h1)
        if a is None or b is None or len(a[1]) != len(b[1]):
            return False
        return mine(a[1]) == mine(b[1])

    def step(h, h1):
        a, b = walk_list(head, h), walk_list(head, h1)
        if a is None or b is None:
            return False
        if a[0] != b[0] or h.get(head) != h1.get(head):
            return False
        # other-parity nodes untouched, own-parity nodes keep their links
        if theirs_nodes(a[0], h) != theirs_nodes(b[0], h1):
            return False
        for n in a[0]:
            if h.get(n)[1] != h1.get(n)[1]:
                return False
        exempt = frozenset(a[0]) | {head}
        return _frame_equal(h, h1, exempt)

    return AbstractLocation(name, sim, sim, step_pair=step,
                            footprint=frozenset(nodes) | {head})


def loc_listodd(head: Loc, nodes, name: str = None) -> AbstractLocation:
    return _loc_list_parity(head, tuple(nodes), 1, name or f"listodd.{head.name}")


def loc_listeven(head: Loc, nodes, name: str = None) -> AbstractLocation:
    return _loc_list_parity(head, tuple(nodes), 0, name or f"listeven.{head.name}")


def list_universe(head: Loc, nodes, values) -> HeapUniverse:
    """Fixed-layout lists: ``head`` points at the chain of ``nodes``."""
    from itertools import product as iproduct
    nodes = tuple(nodes)
    heaps = []
    for elems in iproduct(tuple(values), repeat=len(nodes)):
        m = {head: nodes[0] if nodes else None}
        for i, n in enumerate(nodes):
            nxt = nodes[i + 1] if i + 1 < len(nodes) else None
            m[n] = (elems[i], nxt)
        heaps.append(Heap(m))
    return HeapUniverse(heaps, domains={}, note="fixed linked list")


# -- Michael-Scott queue -----------------------------------------------------

def msq_parse(head: Loc, h: Heap):
    """Split the chain at ``head`` into (garbage, sentinel, queue elems).

    The whole heap must be one null-terminated chain of nodes plus the
    head cell; the sentinel is where the head points, nodes before it are
    the garbage tail kept for slow traversals.
    """
    if head not in h or not isinstance(h.get(head), Loc):
        return None
    nodes = {l: v for l, v in h.items if l != head}
    nexts = {}
    pointed = set()
    for n, cell in nodes.items():
        if not (isinstance(cell, tuple) and len(cell) == 2 and _int(cell[0])):
            return None
        nxt = cell[1]
        if nxt is not None:
            if not isinstance(nxt, Loc) or nxt not in nodes or nxt in pointed:
                return None
            pointed.add(nxt)
        nexts[n] = nxt
    roots = [n for n in nodes if n not in pointed]
    if len(roots) != 1:
        return None
    chain, ptr = [], roots[0]
    while ptr is not None:
        chain.append(ptr)
        ptr = nexts[ptr]
    if len(chain) != len(nodes):
        return None
    sent = h.get(head)
    if sent not in nodes:
        return None
    j = chain.index(sent)
    elems = tuple(h.get(n)[0] for n in chain[j + 1:])
    return tuple(chain[:j]), tuple(chain[j:]), elems


def loc_msq(head: Loc, pool, values, maxlen: int, name: str = None) -> AbstractLocation:
    """A Michael-Scott queue rooted at ``head`` over the given node pool.

    Steps are the reflexive-transitive closure of dequeuing (the head
    pointer advances one node, the old sentinel joins the garbage tail)
    and enqueuing (a fresh pool node holding a declared value is attached
    at the tail; nothing else moves).
    """
    pool = tuple(pool)
    values = tuple(values)

    def sim(h, h1):
        a, b = msq_parse(head, h), msq_parse(head, h1)
        return a is not None and b is not None and a[2] == b[2]

    def strict(h, h1):
        # identical on the part reachable and co-reachable from the head
        a, b = msq_parse(head, h), msq_parse(head, h1)
        if a is None or b is None:
            return False
        if h.get(head) != h1.get(head):
            return False
        fp_a = a[0] + a[1]
        fp_b = b[0] + b[1]
        if fp_a != fp_b:
            return False
        return all(h.get(n) == h1.get(n) for n in fp_a)

    def step_gen(h, u: HeapUniverse):
        parsed = msq_parse(head, h)
        if parsed is None:
            return
        garbage, live, elems = parsed
        if elems:  # dequeue: advance the head pointer
            nxt = h.get(live[0])[1]
            k = u.intern(h.set(head, nxt))
            if k is not None:
                yield k
        if len(elems) < maxlen:  # enqueue each declared value at the tail
            free = next((n for n in pool if n not in h), None)
            if free is not None:
                tail = live[-1]
                telem = h.get(tail)[0]
                for v in values:
                    k = u.intern(h.set(tail, (telem, free)).set(free, (v, None)))
                    if k is not None:
                        yield k

    return AbstractLocation(name or f"msq.{head.name}", sim, strict,
                            step_gen=step_gen,
                            footprint=frozenset(pool) | {head})


def msq_universe(head: Loc, pool, values, maxlen: int, maxgarbage: int,
                 initial_garbage: int = 0) -> HeapUniverse:
    """Queue heaps over a node pool, allocated in pool order.

    Enumerates every chain pool[0..m) with a sentinel position leaving at
    most ``maxlen`` queued elements and at most ``maxgarbage`` garbage
    nodes; the first node's ignored element field is pinned to the first
    declared value.  Initial heaps (game starts) carry at most
    ``initial_garbage`` garbage nodes so bounded plays keep pool slack.
    """
    from itertools import product as iproduct
    pool = tuple(pool)
    values = tuple(values)
    heaps, initial = [], []
    for m in range(1, len(pool) + 1):
        chain = pool[:m]
        for j in range(m):  # sentinel index
            if j > maxgarbage or (m - 1 - j) > maxlen:
                continue
            for elems in iproduct(values, repeat=m - 1):
                mapping = {head: chain[j]}
                all_elems = (values[0],) + elems
                for i, n in enumerate(chain):
                    nxt = chain[i + 1] if i + 1 < m else None
                    mapping[n] = (all_elems[i], nxt)
                h = Heap(mapping)
                heaps.append(h)
                if j <= initial_garbage:
                    initial.append(h)
    return HeapUniverse(heaps, domains={}, pool=pool, pool_domain=(),
                        initial=initial, note="michael-scott queue chains")


def table_location(name: str, u: HeapUniverse, sim_pairs, strict_pairs,
                   step_pairs, footprint=frozenset()) -> AbstractLocation:
    """A custom abstract location given by explicit relation listings.

    Pairs are indices into the universe's canonical heap order.
    """
    sim_set = {(u.heaps[i], u.heaps[j]) for i, j in sim_pairs}
    strict_set = {(u.heaps[i], u.heaps[j]) for i, j in strict_pairs}
    step_set = {(u.heaps[i], u.heaps[j]) for i, j in step_pairs}
    return AbstractLocation(
        name,
        lambda h, h1: (h, h1) in sim_set,
        lambda h, h1: (h, h1) in strict_set,
        step_pair=lambda h, h1: (h, h1) in step_set,
        footprint=frozenset(footprint),
    )


# --------------------------------------------------------------------------
# Worlds
# --------------------------------------------------------------------------

@dataclass
class World:
    locations: tuple
    _sat_cache: dict = field(default_factory=dict, repr=False)

    def __init__(self, locations):
        object.__setattr__(self, "locations", tuple(locations))
        names = [l.name for l in self.locations]
        if len(set(names)) != len(names):
            raise WorldError(f"duplicate abstract location names: {names}")
        object.__setattr__(self, "_sat_cache", {})

    def __iter__(self):
        return iter(self.locations)

    def by_name(self, name: str) -> AbstractLocation:
        for l in self.locations:
            if l.name == name:
                return l
        raise WorldError(f"no abstract location named {name}")

    def sat_set(self, u: HeapUniverse) -> frozenset:
        """Greatest fixpoint of world satisfaction over the universe."""
        key = id(u)
        got = self._sat_cache.get(key)
        if got is not None:
            return got
        from .effects import step_successors_one
        sat = {h for h in u.heaps if all(l.in_support(h) for l in self.locations)}
        changed = True
        while changed:
            changed = False
            for h in list(sat):
                for l in self.locations:
                    for h1 in step_successors_one(l, h, u):
                        if h1 not in sat or any(
                                l2 is not l and not l2.strict(h, h1)
                                for l2 in self.locations):
                            sat.discard(h)
                            changed = True
                            break
                    if h not in sat:
                        break
        got = frozenset(sat)
        self._sat_cache[key] = got
        return got


def world_sat(h: Heap, w: World, u: HeapUniverse) -> bool:
    return h in w.sat_set(u)


def validate_location(l: AbstractLocation, u: HeapUniverse) -> list:
    """Check the contract laws exhaustively over the universe."""
    from .effects import step_closure_rows
    problems = []
    n = len(u.heaps)
    sim_rows = [set() for _ in range(n)]
    strict_rows = [set() for _ in range(n)]
    for i, h in enumerate(u.heaps):
        for j, h1 in enumerate(u.heaps):
            if l.sim(h, h1):
                sim_rows[i].add(j)
            if l.strict(h, h1):
                strict_rows[i].add(j)

    def check_per(rows, what):
        for i in range(n):
            for j in rows[i]:
                if i not in rows[j]:
                    problems.append(f"{l.name}: {what} not symmetric at {i},{j}")
                    return
                if not rows[j] <= rows[i]:
                    problems.append(f"{l.name}: {what} not transitive at {i},{j}")
                    return

    check_per(sim_rows, "semantic equivalence")
    check_per(strict_rows, "strict equivalence")
    for i in range(n):
        if not strict_rows[i] <= sim_rows[i]:
            problems.append(f"{l.name}: strict does not refine semantic at {i}")
            break
    for i in range(n):
        if i in sim_rows[i] and i not in strict_rows[i]:
            problems.append(f"{l.name}: support not strict-reflexive at {i}")
            break
    step_rows = step_closure_rows(l, u)
    for i in range(n):
        if i in sim_rows[i] and i not in step_rows[i]:
            problems.append(f"{l.name}: step not reflexive on support at {i}")
            break
    for i in range(n):
        for j in step_rows[i]:
            if not step_rows[j] <= step_rows[i]:
                problems.append(f"{l.name}: step not transitive at {i},{j}")
                break
            if i != j and not (i in sim_rows[i] and j in sim_rows[j]):
                problems.append(f"{l.name}: step leaves the support at {i},{j}")
                break
    return problems


def validate_world(w: World, u: HeapUniverse, strict: bool = True):
    """Law-check every location and warn when no heap satisfies the world."""
    problems = []
    for l in w.locations:
        problems.extend(validate_location(l, u))
    if problems and strict:
        raise WorldError("; ".join(problems))
    warnings = []
    if not w.sat_set(u):
        warnings.append("no heap satisfies this world over the configured universe")
    return problems, warnings
