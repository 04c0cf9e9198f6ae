"""Value specifications and the exhaustive two-player matching game.

``t0_member(U, U')`` decides whether the proponent can defend the claim
that every behaviour of ``U`` is matched by ``U'`` at a given effect
specification.  The opponent picks a pilot trace from ``U``'s generators
and a starting heap agreeing with the pilot on the end-to-end reads; the
proponent answers the pilot step by step under the during-effect tile,
the opponent perturbs between steps under the rely tile (no legal
perturbation means the proponent wins that branch by default), and at the
end the whole exchange must form an end-to-end tile, the answer trace
must lie in the closure of ``U'``, and the results must be related.

The search is alternating AND-OR over the finite universe, memoized on
(pilot suffix, current heap pair, answer-alignment frontier).  Verdicts
are exact relative to the configured universe, start set, and bounds;
truncation is reported as ``bound-exceeded``, never silently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .effects import EffectSet, EffectSpec, context
from .interp import (EMPTY_ENV, BuiltinV, Closure, EvalConfig, eval_closure_app,
                     eval_comp, eval_program)
from .lang import App, Term, parse
from .store import Heap, HeapUniverse, is_rvalue
from .traces import TraceSet
from .abstract_loc import World


class GameError(Exception):
    pass


PROPONENT = "proponent-wins"
OPPONENT = "opponent-wins"
BOUND = "bound-exceeded"


@dataclass
class GameResult:
    verdict: str
    witness: dict
    bounds: dict
    stats: dict = field(default_factory=dict)

    @property
    def won(self) -> bool:
        return self.verdict == PROPONENT

    def to_json(self):
        return {"verdict": self.verdict, "witness": self.witness,
                "bounds": self.bounds, "stats": self.stats}


# --------------------------------------------------------------------------
# Value specifications
# --------------------------------------------------------------------------

class ValueSpec:
    def related(self, a, b) -> bool:  # pragma: no cover - interface
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class BaseSpec(ValueSpec):
    """Diagonal relation restricted to one sort of first-order values."""

    name: str
    member: object

    def related(self, a, b):
        return a == b and self.member(a)

    def describe(self):
        return self.name


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


INT = BaseSpec("int", _is_int)
BOOL = BaseSpec("bool", lambda v: isinstance(v, bool))
UNIT = BaseSpec("unit", lambda v: v == ())
INTOPT = BaseSpec("intopt", lambda v: v is None or _is_int(v))
BASE_SPECS = {"int": INT, "bool": BOOL, "unit": UNIT, "intopt": INTOPT}


@dataclass(frozen=True)
class ProductSpec(ValueSpec):
    fst: ValueSpec
    snd: ValueSpec

    def related(self, a, b):
        return (isinstance(a, tuple) and isinstance(b, tuple)
                and len(a) == 2 and len(b) == 2
                and self.fst.related(a[0], b[0])
                and self.snd.related(a[1], b[1]))

    def describe(self):
        return f"({self.fst.describe()} * {self.snd.describe()})"


@dataclass(frozen=True)
class TableSpec(ValueSpec):
    """User-declared relation on first-order values."""

    name: str
    pairs: frozenset

    def related(self, a, b):
        return (a, b) in self.pairs

    def describe(self):
        return self.name


class ArrowSpec(ValueSpec):
    """Functions related when games over a finite argument set all win."""

    def __init__(self, arg: ValueSpec, spec: EffectSpec, res: ValueSpec,
                 gc: "GameConfig", test_args):
        self.arg = arg
        self.spec = spec
        self.res = res
        self.gc = gc
        self.test_args = tuple(test_args)

    def related(self, a, b):
        ok, _ = self.related_report(a, b)
        return ok

    def related_report(self, a, b):
        if not isinstance(a, (Closure, BuiltinV)) or not isinstance(b, (Closure, BuiltinV)):
            return False, [{"argument": None, "note": "not function values"}]
        details = []
        ok = True
        for (xa, xb) in self.test_args:
            ua = _apply_value(a, xa, self.gc)
            ub = _apply_value(b, xb, self.gc)
            res = t0_member(ua, ub, self.res, self.spec, self.gc.world,
                            self.gc.universe, pilot_len=self.gc.pilot_len)
            details.append({"argument": repr(xa), "verdict": res.verdict})
            if not res.won:
                ok = False
                details[-1]["witness"] = res.witness
                break
        return ok, details

    def describe(self):
        return (f"({self.arg.describe()} -{self.spec!r}-> {self.res.describe()}"
                f" over {len(self.test_args)} test args)")


def _apply_value(f, x, gc: "GameConfig") -> TraceSet:
    cfg = gc.eval_config()
    if isinstance(f, Closure):
        return eval_closure_app(f, x, cfg)
    if isinstance(f, BuiltinV):
        from . import lang as _l
        try:
            from .traces import rtn
            return rtn(_l.apply_builtin(f.name, x), gc.universe)
        except _l.Undefined:
            return TraceSet.of([])
    raise GameError(f"not a function value: {f!r}")


# --------------------------------------------------------------------------
# Game configuration
# --------------------------------------------------------------------------

@dataclass
class GameConfig:
    """Universe, world, and bounds shared by game-driven checks."""

    universe: HeapUniverse
    world: World
    fuel: int = 3
    max_steps: int = 4
    pilot_len: int = 4
    arg_sets: dict = field(default_factory=dict)   # type name -> tuple of values
    value_specs: dict = field(default_factory=dict)  # abstract type name -> ValueSpec
    init_heap: Heap = None

    def eval_config(self, rely: EffectSet = None) -> EvalConfig:
        """Rely-guided evaluation: handovers follow the rely protocol and
        runs start at world-satisfying initial heaps."""
        ctx = context(self.world, self.universe)
        starts = tuple(h for h in self.universe.initial if h in ctx.sat)
        junction = None
        if rely is not None:
            junction = lambda h: ctx.succ(rely, h)  # noqa: E731
        return EvalConfig(self.universe, fuel=self.fuel, max_steps=self.max_steps,
                          junction=junction, start_heaps=starts or None)

    def eval_side(self, prog, rely: EffectSet = None) -> TraceSet:
        term = parse(prog) if isinstance(prog, str) else prog
        return eval_comp(term, EMPTY_ENV, self.eval_config(rely))

    def bounds_json(self):
        return {"fuel": self.fuel, "max_steps": self.max_steps,
                "pilot_len": self.pilot_len,
                "universe_size": len(self.universe),
                "start_heaps": len(self.universe.initial)}


# --------------------------------------------------------------------------
# The solver
# --------------------------------------------------------------------------

_START = -1  # frontier marker: the answer trace has consumed no generator


class _Solver:
    def __init__(self, U: TraceSet, Up: TraceSet, E: ValueSpec,
                 spec: EffectSpec, w: World, u: HeapUniverse, pilot_len):
        self.u = u
        self.ctx = context(w, u)
        self.E = E
        self.spec = spec
        self.pilot_len = pilot_len
        self.tile1 = self.ctx.tiler(spec.during)
        self.tile2 = self.ctx.tiler(spec.rely)
        self.tile3 = self.ctx.tiler(spec.total)
        self.reach1 = self.ctx.reach_rows(spec.during)
        self.reach2 = self.ctx.reach_rows(spec.rely)
        self.sat = self.ctx.sat_idx
        self.dom = self.ctx.dom_rows()
        self.init_idx = frozenset(u.index(h) for h in u.initial) & self.sat
        self.sim3_rows = [self.ctx._rows(nm)[0] for nm in sorted(spec.total.rds)]
        self.U = U
        self.Up = Up
        self.all_idx = frozenset(range(len(u.heaps)))
        # answer alignment states are interned (residual suffix, result)
        # pairs, so generators sharing suffixes collapse
        self._state_ids = {}
        self._st_steps = []
        self._st_result = []
        self.by_start = {}
        for t, b in Up.gens:
            steps = tuple((u.index(h), u.index(k)) for h, k in t)
            sid = self._state(steps, b)
            if steps:
                self.by_start.setdefault(steps[0][0], []).append(sid)
        self._compat = {}
        self._rel_memo = {}
        self._adv_memo = {}
        self.memo = {}
        self.strategy = {}
        self._suffix_ids = {}
        self.nodes = 0

    # -- answer alignment ---------------------------------------------------

    def _state(self, steps, b):
        key = (steps, b)
        sid = self._state_ids.get(key)
        if sid is None:
            sid = len(self._st_steps)
            self._state_ids[key] = sid
            self._st_steps.append(steps)
            self._st_result.append(b)
        return sid

    def compat_entries(self, a, p):
        """Entry states at handover ``p`` whose results relate to ``a``."""
        key = (a, p)
        got = self._compat.get(key)
        if got is None:
            got = tuple(s for s in self.by_start.get(p, ())
                        if self._related(a, self._st_result[s]))
            self._compat[key] = got
        return got

    def _related(self, a, b):
        key = (a, b)
        got = self._rel_memo.get(key)
        if got is None:
            got = self.E.related(a, b)
            self._rel_memo[key] = got
        return got

    def _walk_blocks(self, sid, p, q, out):
        steps = self._st_steps[sid]
        b = self._st_result[sid]
        if steps and steps[0][0] == p:
            jp = 0
            while True:  # a block covers a chaining run of generator steps
                if steps[jp][1] == q:
                    out.add(self._state(steps[jp + 1:], b))
                if jp + 1 < len(steps) and steps[jp][1] == steps[jp + 1][0]:
                    jp += 1
                else:
                    break

    def advance(self, frontier, a, p, q):
        """Alignment states after consuming answer step (p, q).

        ``None`` frontiers carry no membership obligation (truncated
        pilots); empty frontiers mean the answer trace can no longer
        complete inside the right-hand set, which only default wins can
        rescue.
        """
        if frontier is None:
            return None
        key = (frontier, a, p, q)
        got = self._adv_memo.get(key)
        if got is not None:
            return got
        out = set()
        for sid in frontier:
            if sid == _START:
                if p == q:
                    out.add(_START)
                for s2 in self.compat_entries(a, p):
                    self._walk_blocks(s2, p, q, out)
            else:
                if p == q:
                    out.add(sid)
                self._walk_blocks(sid, p, q, out)
        got = frozenset(out)
        self._adv_memo[key] = got
        return got

    def accepting(self, frontier):
        return frontier is not None and any(
            sid != _START and not self._st_steps[sid] for sid in frontier)

    # -- the alternating search ---------------------------------------------

    def _suffix_id(self, pilot, a, i, truncated):
        key = (pilot[i:], a, truncated)
        got = self._suffix_ids.get(key)
        if got is None:
            got = len(self._suffix_ids)
            self._suffix_ids[key] = got
        return got

    def candidates(self, ihp):
        return sorted(self.reach1[ihp] if ihp in self.sat else self.all_idx)

    def prop_round(self, pilot, a, i, ih1, ih1p, ihp, frontier):
        truncated = frontier is None
        key = (self._suffix_id(pilot, a, i, truncated), ih1, ih1p, ihp, frontier)
        got = self.memo.get(key)
        if got is not None:
            return got
        self.nodes += 1
        ih, ik = pilot[i]
        last = i == len(pilot) - 1
        win = False
        for ikp in self.candidates(ihp):
            if ikp not in self.dom[ihp]:
                continue
            if not self.tile1(ih, ihp, ik, ikp):
                continue
            f2 = self.advance(frontier, a, ihp, ikp)
            if last:
                if truncated:
                    # the opponent is stuck at the next junction no matter
                    # what; any legal answer heap wins this branch
                    win = True
                    self.strategy[key] = ikp
                    break
                if not self.tile3(ih1, ih1p, ik, ikp):
                    continue
                if self.accepting(f2):
                    win = True
                    self.strategy[key] = ikp
                    break
            else:
                ihn = pilot[i + 1][0]
                moves = self.opp_moves(ik, ikp, ihn)
                if all(self.prop_round(pilot, a, i + 1, ih1, ih1p, jp, f2)
                       for jp in moves):
                    win = True
                    self.strategy[key] = ikp
                    break
        self.memo[key] = win
        return win

    def opp_moves(self, ik, ikp, ihn):
        cand = self.reach2[ikp] if ikp in self.sat else self.all_idx
        return [jp for jp in cand
                if jp in self.dom[ikp] and self.tile2(ik, ikp, ihn, jp)]

    def truncate(self, pilot):
        """Cut the pilot where the opponent is stuck by the pilot alone.

        At a junction whose unprimed side is no rely-step from a
        world-satisfying heap, no opponent heap can form the rely tile,
        so the play beyond it never happens.
        """
        for i in range(len(pilot) - 1):
            ik = pilot[i][1]
            ihn = pilot[i + 1][0]
            if ik in self.sat and ihn not in self.reach2[ik]:
                return pilot[:i + 1], True
        return pilot, False

    # -- refutation reconstruction -------------------------------------------

    def refute(self, pilot, a, ih1, ih1p):
        """A losing play: proponent's best attempts with refuting moves."""
        u = self.u
        rounds = []
        frontier = frozenset({_START})
        ihp = ih1p
        for i, (ih, ik) in enumerate(pilot):
            last = i == len(pilot) - 1
            viable = []
            for ikp in self.candidates(ihp):
                if ikp not in self.dom[ihp] or not self.tile1(ih, ihp, ik, ikp):
                    continue
                f2 = self.advance(frontier, a, ihp, ikp)
                if last and not self.tile3(ih1, ih1p, ik, ikp):
                    continue
                viable.append((ikp, f2))
            if not viable:
                rounds.append({"round": i, "proponent": None,
                               "failure": "no answer heap forms the required tile"})
                return rounds
            if last:
                best = next((v for v in viable if v[1]), viable[0])
                why = ("answer trace never completes in the right-hand set"
                       if not self.accepting(best[1])
                       else "results not related")
                rounds.append({"round": i, "proponent": repr(u.heaps[best[0]]),
                               "failure": why})
                return rounds
            # follow a viable answer into a refuting opponent move
            picked = None
            for ikp, f2 in viable:
                for jp in self.opp_moves(ik, ikp, pilot[i + 1][0]):
                    key = (self._suffix_id(pilot, a, i + 1, False),
                           ih1, ih1p, jp, f2)
                    if not self.memo.get(key, True):
                        picked = (ikp, jp, f2)
                        break
                if picked:
                    break
            if picked is None:
                rounds.append({"round": i, "proponent": repr(u.heaps[viable[0][0]]),
                               "failure": "unreconstructed"})
                return rounds
            ikp, jp, frontier = picked
            rounds.append({"round": i, "proponent": repr(u.heaps[ikp]),
                           "opponent": repr(u.heaps[jp])})
            ihp = jp
        return rounds


def t0_member(U: TraceSet, Up: TraceSet, E: ValueSpec, spec: EffectSpec,
              w: World, u: HeapUniverse, pilot_len: int = 4) -> GameResult:
    """Decide the matching game between two generator TraceSets."""
    t_start = time.time()
    solver = _Solver(U, Up, E, spec, w, u, pilot_len)
    bounds = {"pilot_len": pilot_len, "universe_size": len(u.heaps),
              "start_heaps": len(solver.init_idx),
              "relative_to_universe": True,
              "clipped": U.clipped or Up.clipped}
    skipped = 0
    pilots_checked = 0
    # index pilots; pilots whose opponent is stuck at a junction no matter
    # what collapse to deduplicated truncated prefixes
    todo = {}
    for t, a in U.gens:
        if not t:
            continue
        if len(t) > pilot_len:
            skipped += 1
            continue
        pilot = tuple((u.index(h), u.index(k)) for h, k in t)
        if pilot[0][0] not in solver.init_idx:
            continue
        prefix, cut = solver.truncate(pilot)
        if cut:
            todo.setdefault((prefix, None), (t, None))
        else:
            todo.setdefault((pilot, a), (t, a))
    for (pilot, a), (t, orig_a) in sorted(
            todo.items(), key=lambda kv: (len(kv[0][0]), kv[0][0], repr(kv[0][1]))):
        truncated = orig_a is None
        ih1 = pilot[0][0]
        frontier0 = None if truncated else frozenset({_START})
        for ih1p in sorted(solver.init_idx):
            if not all(ih1p in rows[ih1] for rows in solver.sim3_rows):
                continue
            pilots_checked += 1
            if not solver.prop_round(pilot, a, 0, ih1, ih1p, ih1p, frontier0):
                play = (solver.refute(pilot, a, ih1, ih1p)
                        if not truncated else
                        [{"failure": "no tile-legal answer along a prefix the "
                                     "opponent cannot even finish"}])
                witness = {
                    "pilot": [[repr(u.heaps[ih]), repr(u.heaps[ik])]
                              for ih, ik in pilot],
                    "pilot_result": repr(a),
                    "opponent_start": repr(u.heaps[ih1p]),
                    "play": play,
                }
                stats = {"nodes": solver.nodes, "pilots": pilots_checked,
                         "seconds": round(time.time() - t_start, 3)}
                return GameResult(OPPONENT, witness, bounds, stats)
    stats = {"nodes": solver.nodes, "pilots": pilots_checked,
             "skipped_pilots": skipped,
             "seconds": round(time.time() - t_start, 3)}
    if skipped:
        return GameResult(BOUND, {"note": f"{skipped} pilots exceed the length cap"},
                          bounds, stats)
    witness = {"strategy_states": len(solver.strategy),
               "note": "winning strategy table computed for every pilot"}
    return GameResult(PROPONENT, witness, bounds, stats)


# --------------------------------------------------------------------------
# Type interpretation, axiom checking, observation oracle
# --------------------------------------------------------------------------

def type_rel(tau, gc: GameConfig) -> ValueSpec:
    """Interpret a type expression as a value specification."""
    from . import typecheck as tc
    if isinstance(tau, tc.TBase):
        if tau.name in gc.value_specs:
            return gc.value_specs[tau.name]
        if tau.name in BASE_SPECS:
            return BASE_SPECS[tau.name]
        raise GameError(f"abstract type {tau.name} has no declared value relation")
    if isinstance(tau, tc.TProd):
        return ProductSpec(type_rel(tau.fst, gc), type_rel(tau.snd, gc))
    if isinstance(tau, tc.TArrow):
        argspec = type_rel(tau.arg, gc)
        resspec = type_rel(tau.res, gc)
        args = gc.arg_sets.get(tc.format_type(tau.arg))
        if args is None:
            args = _default_args(tau.arg, gc)
        pairs = tuple((x, x) for x in args)
        return ArrowSpec(argspec, tau.spec, resspec, gc, pairs)
    raise GameError(f"cannot interpret type {tau!r}")


def _default_args(tau, gc: GameConfig):
    from . import typecheck as tc
    if isinstance(tau, tc.TBase):
        if tau.name == "unit":
            return ((),)
        if tau.name == "bool":
            return (True, False)
        if tau.name in ("int", "intopt"):
            vals = set()
            for dom in gc.universe.domains.values():
                vals.update(v for v in dom if _is_int(v))
            extra = (None,) if tau.name == "intopt" else ()
            if vals:
                return tuple(sorted(vals)) + extra
        raise GameError(f"no default argument set for type {tau.name}; "
                        f"declare one in the configuration")
    if isinstance(tau, tc.TProd):
        return tuple((a, b) for a in _default_args(tau.fst, gc)
                     for b in _default_args(tau.snd, gc))
    raise GameError("argument test set required for higher-order argument types")


def check_axiom(vL: Term, vR: Term, tau, gc: GameConfig) -> dict:
    """Type-soundness and inequational soundness of an axiom candidate."""
    from .interp import eval_value
    report = {"type": _fmt_type(tau), "checks": {}}
    spec = type_rel(tau, gc)
    a = eval_value(vL, EMPTY_ENV)
    b = eval_value(vR, EMPTY_ENV)
    for label, (x, y) in {"left-reflexive": (a, a),
                          "right-reflexive": (b, b),
                          "left-below-right": (a, b)}.items():
        if isinstance(spec, ArrowSpec):
            ok, details = spec.related_report(x, y)
            report["checks"][label] = {"ok": ok, "details": details}
        else:
            ok = spec.related(x, y)
            report["checks"][label] = {"ok": ok}
    report["ok"] = all(c["ok"] for c in report["checks"].values())
    report["bounds"] = gc.bounds_json()
    return report


def _fmt_type(tau):
    from . import typecheck as tc
    return tc.format_type(tau)


def results_from_initial(out: TraceSet, init: Heap) -> frozenset:
    """Results of complete, uninterrupted runs from the initial heap."""
    got = set()
    for t, b in out.gens:
        if not t:
            got.add(b)
            continue
        if t[0][0] != init:
            continue
        if all(t[i][1] == t[i + 1][0] for i in range(len(t) - 1)):
            got.add(b)
    return frozenset(got)


def obs_diff(vL: Term, vR: Term, tau, contexts, gc: GameConfig) -> dict:
    """Differential observation oracle over a finite context corpus.

    Each context is (name, term, arrow type ascription); contexts that do
    not effect-check at an observation type are skipped with a note.
    Reports, per usable context, whether every complete initial-heap
    result of the left program is matched on the right.
    """
    from . import typecheck as tc
    init = gc.init_heap or next(iter(gc.universe.initial), None)
    if init is None:
        raise GameError("no initial heap configured")
    entries = []
    approx = True
    for name, f_term, f_type in contexts:
        check = tc.check_value(tc.Ctx.empty(), f_term, f_type, gc)
        if not check.ok:
            entries.append({"context": name, "skipped": check.reason})
            continue
        cfg = EvalConfig(gc.universe, fuel=gc.fuel, max_steps=gc.max_steps,
                         start_heaps=(init,))
        left = eval_program(App(f_term, vL), cfg)
        right = eval_program(App(f_term, vR), cfg)
        bl = results_from_initial(left, init)
        br = results_from_initial(right, init)
        ok = bl <= br
        approx = approx and ok
        entries.append({"context": name, "ok": ok,
                        "left_results": sorted(map(repr, bl)),
                        "right_results": sorted(map(repr, br))})
    return {"approximates": approx, "contexts": entries,
            "initial_heap": repr(init), "bounds": gc.bounds_json()}
