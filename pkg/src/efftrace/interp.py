"""Fuel-bounded denotational evaluator producing finite TraceSets.

Computations evaluate clause by clause: value return is the idle
computation, ``let`` sequences, reads/writes/allocations are one-step heap
actions, ``||`` interleaves, ``atomic`` keeps only uninterrupted runs, and
mismatches (applying a non-function, branching on a non-boolean) denote the
empty set.  Recursion is approximated by fuel: entering a recursive body at
fuel zero contributes no traces, which is the may-semantics reading of
divergence.

Enumeration is bounded in two configurable ways.  ``max_steps`` caps the
number of trace steps per generator; consecutive actions not separated by
environment interference share a step, so the cap counts interaction
points.  ``junction`` optionally restricts which heaps the environment may
hand over at an interference point (the game passes the rely relation's
successor map here); by default every universe heap with a compatible
domain is considered.  Runs whose writes or allocations leave the universe
are dropped and flagged on the resulting TraceSet.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import lang
from .lang import (App, Atomic, Choice, Const, Diverge, If, Let, Lit, Pair,
                   Par, Proj, Read, Rec, Ref, Ret, Term, Var, Write)
from .store import AllocationError, Heap, HeapUniverse, Loc, is_rvalue
from .traces import TraceSet, closure_equal, expand_pure, trace_valid, witness_missing

JUNK = 0


class EvalError(Exception):
    pass


class FrozenEnv:
    """Immutable variable environment; hashable for memoization."""

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, mapping=()):
        items = tuple(sorted(dict(mapping).items()))
        object.__setattr__(self, "_items", items)
        object.__setattr__(self, "_map", dict(items))
        object.__setattr__(self, "_hash", hash(items))

    def get(self, name: str):
        try:
            return self._map[name]
        except KeyError:
            raise EvalError(f"unbound variable {name}") from None

    def __contains__(self, name):
        return name in self._map

    def bind(self, name: str, val) -> "FrozenEnv":
        m = dict(self._map)
        m[name] = val
        return FrozenEnv(m)

    def names(self):
        return frozenset(self._map)

    def __eq__(self, other):
        return isinstance(other, FrozenEnv) and self._items == other._items

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "Env(" + ", ".join(f"{k}={v!r}" for k, v in self._items) + ")"


EMPTY_ENV = FrozenEnv()


@dataclass(frozen=True)
class Closure:
    """A function value; held symbolically, never written to the heap."""

    fname: str
    param: str
    body: Term
    env: FrozenEnv

    def __repr__(self):
        return f"<closure {self.fname}>"


@dataclass(frozen=True)
class BuiltinV:
    name: str

    def __repr__(self):
        return f"<builtin {self.name}>"


def is_first_order(v) -> bool:
    return is_rvalue(v)


def eval_value(v: Term, env: FrozenEnv):
    """Value clauses; type mismatches yield the designated junk value 0."""
    if isinstance(v, Var):
        return env.get(v.name)
    if isinstance(v, Lit):
        return v.value
    if isinstance(v, Pair):
        return (eval_value(v.fst, env), eval_value(v.snd, env))
    if isinstance(v, Proj):
        tup = eval_value(v.tup, env)
        if isinstance(tup, tuple) and len(tup) == 2:
            return tup[v.index - 1]
        return JUNK
    if isinstance(v, Const):
        return BuiltinV(v.name)
    if isinstance(v, Rec):
        return Closure(v.fname, v.param, v.body, env)
    raise EvalError(f"not a value form: {v!r}")


@dataclass
class EvalConfig:
    """Bounds and universe for one evaluation."""

    universe: HeapUniverse
    fuel: int = 3
    max_steps: int = 4
    junction: object = None   # None, or callable Heap -> iterable of handover heaps
    start_heaps: object = None  # None (= universe.initial), or iterable of heaps

    def starts(self):
        return tuple(self.start_heaps) if self.start_heaps is not None \
            else self.universe.initial

    def junction_heaps(self, prev: Heap):
        if self.junction is None:
            return self.universe.heaps_covering(prev.domain)
        return self.junction(prev)


# A tail is (ext, blocks, result): ``ext`` extends the currently open trace
# step to a new answer heap (None when no chained action ran), ``blocks``
# are subsequent complete steps, each opened by an environment handover.

class _Machine:
    def __init__(self, cfg: EvalConfig):
        self.cfg = cfg
        self.u = cfg.universe
        self.memo = {}
        self.clipped = False

    # -- action helpers ----------------------------------------------------

    def _apply_heap(self, h: Heap, op):
        """Run a primitive heap action; None when undefined or clipped."""
        try:
            res = op(h)
        except AllocationError:
            self.clipped = True
            return None
        if res is None:
            return None
        k, val = res
        k2 = self.u.intern(k)
        if k2 is None:
            self.clipped = True
            return None
        return k2, val

    def _action(self, cur, budget, op):
        out = set()
        if cur is not None:
            got = self._apply_heap(cur, op)
            if got is not None:
                out.add((got[0], (), got[1]))
        if budget > 0:
            entries = self.cfg.junction_heaps(cur) if cur is not None else self.cfg.starts()
            for h in entries:
                if cur is not None and not (cur.domain <= h.domain):
                    continue
                got = self._apply_heap(h, op)
                if got is not None:
                    out.add((None, ((h, got[0]),), got[1]))
        return out

    # -- evaluation --------------------------------------------------------

    def eval(self, e: Term, env: FrozenEnv, fuel: int, cur, budget: int):
        key = (id(e), env, fuel, cur, budget)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.memo[key] = frozenset()  # cut ill-founded cycles conservatively
        out = self._eval(e, env, fuel, cur, budget)
        self.memo[key] = out
        return out

    def _seq(self, first_tails, k_term, k_env, fuel, cur, budget, bindvar=None):
        """Compose tails of a prefix with the evaluation of a continuation."""
        out = set()
        for ext, blocks, val in first_tails:
            env2 = k_env.bind(bindvar, val) if bindvar is not None else k_env
            if blocks:
                cur2 = blocks[-1][1]
                spent = len(blocks)
            else:
                cur2 = ext if ext is not None else cur
                spent = 0
            for ext2, blocks2, val2 in self.eval(k_term, env2, fuel, cur2, budget - spent):
                if ext2 is None:
                    joined_blocks = blocks + blocks2
                    joined_ext = ext
                else:
                    if blocks:
                        joined_blocks = blocks[:-1] + ((blocks[-1][0], ext2),) + blocks2
                        joined_ext = ext
                    else:
                        joined_blocks = blocks2
                        joined_ext = ext2
                out.add((joined_ext, joined_blocks, val2))
        return out

    def _eval(self, e, env, fuel, cur, budget):
        u = self.u
        if isinstance(e, Ret):
            return frozenset({(None, (), eval_value(e.value, env))})
        if isinstance(e, Diverge):
            return frozenset()
        if isinstance(e, Choice):
            return frozenset({(None, (), True), (None, (), False)})
        if isinstance(e, Let):
            first = self.eval(e.bound, env, fuel, cur, budget)
            return frozenset(self._seq(first, e.body, env, fuel, cur, budget,
                                       bindvar=e.var))
        if isinstance(e, If):
            b = eval_value(e.cond, env)
            if b is True:
                return self.eval(e.then, env, fuel, cur, budget)
            if b is False:
                return self.eval(e.orelse, env, fuel, cur, budget)
            return frozenset()
        if isinstance(e, App):
            f = eval_value(e.fun, env)
            a = eval_value(e.arg, env)
            if isinstance(f, BuiltinV):
                try:
                    return frozenset({(None, (), lang.apply_builtin(f.name, a))})
                except lang.Undefined:
                    return frozenset()
            if isinstance(f, Closure):
                if fuel <= 0:
                    return frozenset()
                env2 = f.env.bind(f.fname, f).bind(f.param, a)
                return self.eval(f.body, env2, fuel - 1, cur, budget)
            return frozenset()
        if isinstance(e, Read):
            tgt = eval_value(e.target, env)
            if not isinstance(tgt, Loc):
                return frozenset()

            def do_read(h, tgt=tgt):
                if tgt not in h:
                    return None
                return h, h.get(tgt)

            return frozenset(self._action(cur, budget, do_read))
        if isinstance(e, Write):
            tgt = eval_value(e.target, env)
            val = eval_value(e.payload, env)
            if not isinstance(tgt, Loc):
                return frozenset()
            if not is_rvalue(val):
                raise EvalError("cannot store a function value in the heap")

            def do_write(h, tgt=tgt, val=val):
                if tgt not in h:
                    return None
                return h.set(tgt, val), ()

            return frozenset(self._action(cur, budget, do_write))
        if isinstance(e, Ref):
            val = eval_value(e.payload, env)
            if not is_rvalue(val):
                raise EvalError("cannot store a function value in the heap")

            def do_ref(h, val=val):
                from .store import heap_new
                loc, h2 = heap_new(h, val, u.pool)
                return h2, loc

            return frozenset(self._action(cur, budget, do_ref))
        if isinstance(e, Atomic):
            # uninterrupted runs of the body: evaluate with no junction
            # budget so actions may only extend the entered step.
            out = set()
            entries = []
            if cur is not None:
                entries.append((cur, True))
            if budget > 0:
                base = self.cfg.junction_heaps(cur) if cur is not None else self.cfg.starts()
                for h in base:
                    if cur is not None and not (cur.domain <= h.domain):
                        continue
                    entries.append((h, False))
            for h, chained in entries:
                for ext, blocks, val in self.eval(e.body, env, fuel, h, 0):
                    if blocks:
                        continue
                    k = ext if ext is not None else h
                    if chained:
                        out.add((k, (), val))
                    else:
                        out.add((None, ((h, k),), val))
            return frozenset(out)
        if isinstance(e, Par):
            # each side's environment includes the other side, so side
            # traces are generated with unrestricted handovers and then
            # interleaved; the combined trace respects the step budget.
            sub = _Machine(EvalConfig(self.u, fuel=self.cfg.fuel,
                                      max_steps=self.cfg.max_steps,
                                      junction=None,
                                      start_heaps=self.u.heaps))
            left = sub.eval(e.left, env, fuel, None, budget)
            right = sub.eval(e.right, env, fuel, None, budget)
            self.clipped = self.clipped or sub.clipped
            out = set()
            from .traces import _shuffles
            for ext1, b1, v1 in left:
                for ext2, b2, v2 in right:
                    if len(b1) + len(b2) > budget:
                        self.clipped = True
                        continue
                    for t3 in _shuffles(b1, b2):
                        if trace_valid(t3):
                            out.add((None, t3, (v1, v2)))
            return frozenset(out)
        if lang.is_value(e):
            return frozenset({(None, (), eval_value(e, env))})
        raise EvalError(f"cannot evaluate {e!r}")


def eval_comp(e: Term, env: FrozenEnv, cfg: EvalConfig, expand: bool = True) -> TraceSet:
    """Evaluate a computation to its generator TraceSet.

    Pure runs are expanded to explicit idle steps unless ``expand`` is
    False (internal composition keeps them empty).
    """
    missing = lang.free_vars(e) - env.names()
    if missing:
        raise EvalError(f"unbound variables: {sorted(missing)}")
    m = _Machine(cfg)
    tails = m.eval(e, env, cfg.fuel, None, cfg.max_steps)
    gens = set()
    for ext, blocks, val in tails:
        assert ext is None
        gens.add((blocks, val))
    ts = TraceSet.of(gens, clipped=m.clipped)
    return expand_pure(ts, cfg.universe) if expand else ts


def eval_program(text_or_term, cfg: EvalConfig) -> TraceSet:
    t = lang.parse(text_or_term) if isinstance(text_or_term, str) else text_or_term
    return eval_comp(t, EMPTY_ENV, cfg)


def eval_closure_app(f: Closure, arg, cfg: EvalConfig) -> TraceSet:
    """Apply a semantic function value to a semantic argument."""
    if cfg.fuel <= 0:
        return TraceSet.of([])
    env2 = f.env.bind(f.fname, f).bind(f.param, arg)
    m = _Machine(cfg)
    tails = m.eval(f.body, env2, cfg.fuel - 1, None, cfg.max_steps)
    gens = {(blocks, val) for ext, blocks, val in tails}
    return expand_pure(TraceSet.of(gens, clipped=m.clipped), cfg.universe)


def trace_equiv(e1, e2, cfg: EvalConfig, length_bound=None):
    """Mutual closure containment of the two denotations, within bounds."""
    u1 = eval_program(e1, cfg)
    u2 = eval_program(e2, cfg)
    eq, rep = closure_equal(u1, u2, length_bound)
    report = {
        "equal": eq,
        "bounds": {"fuel": cfg.fuel, "max_steps": cfg.max_steps,
                   "universe_size": len(cfg.universe), **rep},
        "clipped": u1.clipped or u2.clipped,
        "gen_counts": [len(u1), len(u2)],
    }
    if not rep["forward"]:
        report["witness_left_only"] = witness_missing(u2, u1, rep["length_bound"])
    if not rep["backward"]:
        report["witness_right_only"] = witness_missing(u1, u2, rep["length_bound"])
    return eq, report
