"""Traces, stutter/mumble closure, and the trace-monad combinators.

A trace is a finite sequence of heap pairs ``(h_i, k_i)``: the environment
hands over ``h_i``, the program answers ``k_i``.  Domains never shrink along
``h_1, k_1, h_2, k_2, ...``.  A TraceSet stores a finite *generator* set and
stands for its closure under stuttering (inserting an idle ``(h, h)`` step)
and mumbling (merging adjacent chaining steps ``(h1, h2)(h2, h3)`` into
``(h1, h3)``).  Down/sup closure is vacuous here because checked result
values carry the discrete order (first-order values, or opaque closure
handles compared structurally).

Membership in the closure is decided by ``closure_member``: the queried
trace must decompose into inserted idle steps plus blocks, each block
covering a maximal run of chaining generator steps, in order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

Step = tuple  # (Heap, Heap)
Trace = tuple  # tuple of Steps


class TraceError(Exception):
    pass


def trace_valid(t: Trace) -> bool:
    """Domain monotonicity along the whole alternation of heaps."""
    prev = None
    for h, k in t:
        if not (h.domain <= k.domain):
            return False
        if prev is not None and not (prev <= h.domain):
            return False
        prev = k.domain
    return True


@dataclass(frozen=True)
class TraceSet:
    """A finite generator set denoting its stutter/mumble closure."""

    gens: frozenset  # of (Trace, result)
    denotes_closure: bool = True
    clipped: bool = field(default=False, compare=False)  # some branch left the universe

    @staticmethod
    def of(pairs, clipped: bool = False) -> "TraceSet":
        return TraceSet(frozenset(pairs), clipped=clipped)

    def __iter__(self):
        return iter(self.gens)

    def __len__(self) -> int:
        return len(self.gens)

    def results(self) -> frozenset:
        return frozenset(a for _, a in self.gens)

    def max_len(self) -> int:
        return max((len(t) for t, _ in self.gens), default=0)

    def to_json(self):
        def heap_json(h):
            return {l.name: _rv_json(v) for l, v in h.items}
        out = []
        for t, a in sorted(self.gens, key=repr):
            out.append({"steps": [[heap_json(h), heap_json(k)] for h, k in t],
                        "result": _rv_json(a)})
        return out


def _rv_json(v):
    from .store import Loc
    if v is None:
        return {"null": True}
    if isinstance(v, Loc):
        return {"loc": v.name}
    if isinstance(v, tuple):
        return list(_rv_json(x) for x in v)
    if isinstance(v, (bool, int)):
        return v
    return {"opaque": repr(v)}


def _chain_flags(steps: Trace) -> tuple:
    """chain[i] is True when step i's answer heap equals step i+1's handover."""
    return tuple(steps[i][1] == steps[i + 1][0] for i in range(len(steps) - 1))


def derivable(target: Trace, gen: Trace) -> bool:
    """Is ``target`` derivable from ``gen`` by stuttering and mumbling?"""
    n = len(gen)
    chain = _chain_flags(gen)
    reach = {0}
    for p, q in target:
        nxt = set()
        for j in reach:
            if p == q:
                nxt.add(j)  # inserted idle step
            if j < n and gen[j][0] == p:
                jp = j
                while True:
                    if gen[jp][1] == q:
                        nxt.add(jp + 1)
                    if jp + 1 < n and chain[jp]:
                        jp += 1
                    else:
                        break
        if not nxt:
            return False
        reach = nxt
    return n in reach


def closure_member(t: Trace, a, G: TraceSet) -> bool:
    """True iff ``(t, a)`` lies in the closure of some generator of ``G``."""
    if not trace_valid(t):
        return False
    for t0, a0 in G.gens:
        if a0 == a and derivable(t, t0):
            return True
    return False


def closure_contains(G: TraceSet, H: TraceSet, length_bound=None) -> bool:
    """Every generator of ``H`` (up to the bound) is in the closure of ``G``."""
    for t, a in H.gens:
        if length_bound is not None and len(t) > length_bound:
            continue
        if not closure_member(t, a, G):
            return False
    return True


def closure_equal(U: TraceSet, V: TraceSet, length_bound=None):
    """Mutual containment of generators, up to a trace-length bound.

    The default bound is 2 * max generator length + 2; every equality
    report states the bound it was decided at.
    """
    if length_bound is None:
        length_bound = 2 * max(U.max_len(), V.max_len()) + 2
    forward = closure_contains(V, U, length_bound)
    backward = closure_contains(U, V, length_bound)
    return forward and backward, {"length_bound": length_bound,
                                  "forward": forward, "backward": backward}


def witness_missing(G: TraceSet, H: TraceSet, length_bound=None):
    """A generator of ``H`` outside the closure of ``G``, or None."""
    for t, a in sorted(H.gens, key=lambda p: (len(p[0]), repr(p))):
        if length_bound is not None and len(t) > length_bound:
            continue
        if not closure_member(t, a, G):
            return (t, a)
    return None


# --------------------------------------------------------------------------
# Monad structure
# --------------------------------------------------------------------------

def rtn(a, u) -> TraceSet:
    """The idle-step generators ``((h, h), a)`` for every universe heap."""
    return TraceSet.of(((( (h, h), ), a) for h in u.heaps))


def bnd(f, G: TraceSet, budget=None) -> TraceSet:
    """Sequential composition: prefix from ``G``, continuation from ``f``.

    ``f`` maps each result of ``G`` to a TraceSet (or None, denoting no
    traces, i.e. divergence of that branch).  Concatenations that break
    domain monotonicity or exceed the step budget are dropped.
    """
    out = set()
    clipped = G.clipped
    cont_cache = {}
    for t, a in G.gens:
        if a in cont_cache:
            ka = cont_cache[a]
        else:
            ka = f(a)
            cont_cache[a] = ka
        if ka is None:
            continue
        clipped = clipped or ka.clipped
        for s, b in ka.gens:
            joined = t + s
            if budget is not None and len(joined) > budget:
                clipped = True
                continue
            if s and t and not trace_valid(joined):
                continue
            out.add((joined, b))
    return TraceSet.of(out, clipped=clipped)


def fromstate(c, u, doms=None) -> TraceSet:
    """One-step generators from a partial heap transformer.

    ``c(h)`` returns ``(k, a)`` or None where undefined.  Handover heaps
    range over the universe heaps covering ``doms`` (all heaps when None).
    """
    heaps = u.heaps if doms is None else u.heaps_covering(doms)
    out = []
    for h in heaps:
        res = c(h)
        if res is None:
            continue
        k, a = res
        out.append((((h, k),), a))
    return TraceSet.of(out)


def _shuffles(t1: Trace, t2: Trace):
    if not t1:
        yield t2
        return
    if not t2:
        yield t1
        return
    for rest in _shuffles(t1[1:], t2):
        yield (t1[0],) + rest
    for rest in _shuffles(t1, t2[1:]):
        yield (t2[0],) + rest


def inter_par(U: TraceSet, V: TraceSet, budget=None) -> TraceSet:
    """All interleavings, paired results: the denotation of ``e1 || e2``."""
    out = set()
    clipped = U.clipped or V.clipped
    for t1, a in U.gens:
        for t2, b in V.gens:
            if budget is not None and len(t1) + len(t2) > budget:
                clipped = True
                continue
            for t3 in _shuffles(t1, t2):
                if trace_valid(t3):
                    out.add((t3, (a, b)))
    return TraceSet.of(out, clipped=clipped)


def at_collapse(U: TraceSet) -> TraceSet:
    """Atomic execution: keep chaining runs, mumbled to a single step.

    Generators whose steps do not chain admit no atomic run and are
    dropped; empty (pure) generators pass through untouched.
    """
    out = set()
    for t, a in U.gens:
        if not t:
            out.add((t, a))
            continue
        if all(f for f in _chain_flags(t)):
            out.add((((t[0][0], t[-1][1]),), a))
    return TraceSet.of(out, clipped=U.clipped)


def expand_pure(G: TraceSet, u) -> TraceSet:
    """Replace empty-trace generators by idle steps over the universe.

    Internal composition keeps pure computations as empty traces; public
    TraceSets use the explicit idle-step form of ``rtn``.
    """
    out = set()
    for t, a in G.gens:
        if t:
            out.add((t, a))
        else:
            for h in u.heaps:
                out.add((((h, h),), a))
    return TraceSet.of(out, clipped=G.clipped)
