"""Trace closure and monad combinators, checked against a brute-force oracle."""

from itertools import product

from efftrace.store import Heap, HeapUniverse, Loc
from efftrace.traces import (TraceSet, at_collapse, bnd, closure_equal,
                             closure_member, derivable, expand_pure,
                             inter_par, rtn, trace_valid)

X = Loc("X")


def hp(n):
    return Heap({X: n})


def st(a, b):
    return (hp(a), hp(b))


U01 = HeapUniverse.product({X: (0, 1)})


# -- independent oracle: exhaustively apply single stutter/mumble rewrites --

def oracle_derivable(target, gen, heaps, max_len=None):
    if max_len is None:
        max_len = len(target) + len(gen) + 1
    seen = {gen}
    frontier = [gen]
    while frontier:
        nxt = []
        for t in frontier:
            if t == target:
                return True
            # stuttering: insert (h, h) anywhere
            if len(t) < max_len:
                for i in range(len(t) + 1):
                    for h in heaps:
                        t2 = t[:i] + ((h, h),) + t[i:]
                        if t2 not in seen:
                            seen.add(t2)
                            nxt.append(t2)
            # mumbling: merge adjacent chaining steps
            for i in range(len(t) - 1):
                if t[i][1] == t[i + 1][0]:
                    t2 = t[:i] + ((t[i][0], t[i + 1][1]),) + t[i + 2:]
                    if t2 not in seen:
                        seen.add(t2)
                        nxt.append(t2)
        frontier = nxt
    return target in seen


def all_traces(heaps, max_len):
    steps = [(h, k) for h in heaps for k in heaps]
    for n in range(1, max_len + 1):
        for combo in product(steps, repeat=n):
            yield combo


def test_closure_member_matches_spec_examples():
    g1 = TraceSet.of([((st(10, 11), st(11, 12)), "a")])
    assert closure_member((st(10, 12),), "a", g1)
    g2 = TraceSet.of([((st(10, 12),), "a")])
    assert closure_member((st(10, 12), st(34, 34)), "a", g2)
    g3 = TraceSet.of([((st(10, 11), st(12, 13)),) + ("a",)])
    assert not closure_member((st(10, 13),), "a", g3)


def test_closure_member_requires_matching_result():
    g = TraceSet.of([((st(0, 1),), 1)])
    assert closure_member((st(0, 1),), 1, g)
    assert not closure_member((st(0, 1),), 2, g)


def test_closure_member_agrees_with_brute_force_oracle():
    heaps = [hp(0), hp(1)]
    gens = [t for t in all_traces(heaps, 2)]
    targets = list(all_traces(heaps, 3))
    for gen in gens:
        for target in targets:
            fast = derivable(target, gen)
            slow = oracle_derivable(target, gen, heaps)
            assert fast == slow, (target, gen)


def test_trace_validity_domain_monotonicity():
    Y = Loc("Y")
    small, big = Heap({X: 0}), Heap({X: 0, Y: 1})
    assert trace_valid(((small, big), (big, big)))
    assert not trace_valid(((big, big), (small, small)))
    assert not trace_valid(((big, small),))


def test_rtn_generators_are_idle_steps():
    r = rtn(7, U01)
    assert r.gens == frozenset({(((h, h),), 7) for h in U01.heaps})
    assert closure_member((st(0, 0), st(1, 1)), 7, r)
    assert not closure_member((st(0, 1),), 7, r)


def test_bnd_increment_closure_equals_rtn():
    lhs = bnd(lambda a: rtn(a + 1, U01), rtn(1, U01))
    eq, report = closure_equal(lhs, rtn(2, U01), length_bound=3)
    assert eq, report


def test_bnd_empty_continuation_is_empty():
    g = rtn(1, U01)
    assert len(bnd(lambda a: None, g)) == 0
    assert len(bnd(lambda a: TraceSet.of([]), g)) == 0


def test_bnd_right_unit():
    g = TraceSet.of([((st(0, 1),), 5), ((st(1, 1), st(0, 0)), 7)])
    eq, report = closure_equal(bnd(lambda a: rtn(a, U01), g), g)
    assert eq, report


def test_bnd_left_unit_and_associativity():
    def f(a):
        return TraceSet.of([((st(a, 1 - a),), 1 - a)])

    def g(a):
        return rtn(a, U01)

    base = TraceSet.of([((st(0, 0),), 0), ((st(1, 1),), 1)])
    lhs = bnd(g, bnd(f, base))
    rhs = bnd(lambda a: bnd(g, f(a)), base)
    eq, report = closure_equal(lhs, rhs, length_bound=4)
    assert eq, report


def test_inter_par_of_single_steps_is_both_orders():
    u = TraceSet.of([((st(0, 1),), "a")])
    v = TraceSet.of([((st(1, 0),), "b")])
    got = inter_par(u, v)
    assert got.gens == {
        ((st(0, 1), st(1, 0)), ("a", "b")),
        ((st(1, 0), st(0, 1)), ("a", "b")),
    }


def test_inter_par_with_empty_is_empty():
    u = TraceSet.of([((st(0, 1),), "a")])
    assert len(inter_par(u, TraceSet.of([]))) == 0


def test_inter_par_shuffle_count():
    u = TraceSet.of([((st(0, 0), st(0, 1)), "a")])
    v = TraceSet.of([((st(1, 1), st(1, 0)), "b")])
    assert len(inter_par(u, v)) == 6


def test_inter_par_symmetry_up_to_result_swap():
    u = TraceSet.of([((st(0, 1),), "a"), ((st(1, 1), st(1, 0)), "c")])
    v = TraceSet.of([((st(1, 0),), "b")])
    uv = inter_par(u, v)
    vu = inter_par(v, u)
    swapped = TraceSet.of([(t, (b, a)) for t, (a, b) in vu.gens])
    assert uv.gens == swapped.gens


def test_at_collapse_chained_mumble():
    u = TraceSet.of([((st(1, 2), st(2, 3)), "v")])
    assert at_collapse(u).gens == {((st(1, 3),), "v")}


def test_at_collapse_non_chaining_has_no_atomic_run():
    u = TraceSet.of([((st(1, 2), st(5, 6)), "v")])
    assert len(at_collapse(u)) == 0


def test_at_collapse_fixes_rtn():
    assert at_collapse(rtn("a", U01)).gens == rtn("a", U01).gens


def test_at_collapse_output_single_steps_are_members_of_input():
    u = TraceSet.of([((st(0, 0), st(0, 1), st(1, 1)), "v"), ((st(1, 0), st(1, 1)), "w")])
    for t, a in at_collapse(u).gens:
        assert len(t) == 1
        assert closure_member(t, a, u)


def test_expand_pure_turns_empty_traces_into_idle_steps():
    g = TraceSet.of([((), 3)])
    assert expand_pure(g, U01).gens == rtn(3, U01).gens
