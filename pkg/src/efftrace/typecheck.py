"""Syntax-directed checker for effect-refined typing judgments.

The checker synthesizes a minimal guarantee/end-to-end effect pair for a
computation bottom-up, given the ambient rely, and then verifies inclusion
into the ascribed specification (subsumption).  Primitive heap accesses
contribute effects on every abstract location whose declared footprint
contains the touched concrete cell; a raw write to a cell shared by
several abstract locations is chaotic on all of them, because only
semantic reasoning (a registered, game-verified axiom) can justify a
refined effect.  Reads land in the end-to-end effect only: a read makes
no heap step, so it constrains the guarantee not at all.

Allocation is rejected here; it occurs only inside axiom bodies whose
soundness is established by the game.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import lang
from .effects import EffectSet, EffectSpec, parse_effects, require_wf, wf_effect
from .lang import (App, Atomic, Choice, Const, Diverge, If, Let, Lit, Pair,
                   Par, Proj, Read, Rec, Ret, Term, Var, Write, Ref)
from .store import Loc


class TypeError_(Exception):
    pass


# --------------------------------------------------------------------------
# Type expressions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TBase:
    name: str


@dataclass(frozen=True)
class TProd:
    fst: object
    snd: object


@dataclass(frozen=True)
class TArrow:
    arg: object
    spec: EffectSpec
    res: object


UNIT_T, INT_T, BOOL_T, INTOPT_T = TBase("unit"), TBase("int"), TBase("bool"), TBase("intopt")


def format_type(t) -> str:
    if isinstance(t, TBase):
        return t.name
    if isinstance(t, TProd):
        return f"({format_type(t.fst)} * {format_type(t.snd)})"
    if isinstance(t, TArrow):
        from .effects import format_effects
        s = t.spec
        return (f"({format_type(t.arg)} -({format_effects(s.during)} | "
                f"{format_effects(s.rely)} | {format_effects(s.total)})-> "
                f"{format_type(t.res)})")
    raise TypeError_(f"not a type: {t!r}")


def parse_type(text: str):
    """``unit`` | ``int`` | ... | ``t * t`` | ``t -(e|e|e)-> t`` | ``(t)``."""
    toks = _lex_type(text)
    t, rest = _parse_arrow(toks)
    if rest:
        raise TypeError_(f"trailing type syntax: {rest}")
    return t


def parse_ascription(text: str):
    """``tau & (e1 | e2 | e3)`` for computations; plain ``tau`` for values."""
    if "&" in text:
        tpart, spart = text.split("&", 1)
        spart = spart.strip()
        if not (spart.startswith("(") and spart.endswith(")")):
            raise TypeError_("effect ascription must be parenthesised")
        e1, e2, e3 = _split_effect_triple(spart[1:-1])
        return parse_type(tpart), EffectSpec(e1, e2, e3)
    return parse_type(text), None


def _split_effect_triple(body: str):
    parts = body.split("|")
    if len(parts) != 3:
        raise TypeError_(f"expected three effect components, got {len(parts)}")
    return tuple(parse_effects(p) for p in parts)


def _lex_type(text: str):
    out, i = [], 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if text.startswith("-(", i):
            j = text.index(")->", i)
            out.append(("arrow", text[i + 2:j]))
            i = j + 3
            continue
        if c in "()*":
            out.append((c, c))
            i += 1
            continue
        j = i
        while j < len(text) and (text[j].isalnum() or text[j] in "_."):
            j += 1
        if j == i:
            raise TypeError_(f"bad type syntax at {text[i:]!r}")
        out.append(("name", text[i:j]))
        i = j
    return out


def _parse_arrow(toks):
    left, toks = _parse_prod(toks)
    if toks and toks[0][0] == "arrow":
        e1, e2, e3 = _split_effect_triple(toks[0][1])
        res, toks = _parse_arrow(toks[1:])
        return TArrow(left, EffectSpec(e1, e2, e3), res), toks
    return left, toks


def _parse_prod(toks):
    left, toks = _parse_atom(toks)
    if toks and toks[0][0] == "*":
        right, toks = _parse_prod(toks[1:])
        return TProd(left, right), toks
    return left, toks


def _parse_atom(toks):
    if not toks:
        raise TypeError_("unexpected end of type")
    kind, text = toks[0]
    if kind == "(":
        t, rest = _parse_arrow(toks[1:])
        if not rest or rest[0][0] != ")":
            raise TypeError_("unbalanced parenthesis in type")
        return t, rest[1:]
    if kind == "name":
        return TBase(text), toks[1:]
    raise TypeError_(f"unexpected {text!r} in type")


def spec_subsumes(have: EffectSpec, want: EffectSpec) -> bool:
    """``have`` judgments may be weakened to ``want`` by subeffecting."""
    return (have.during.issubset(want.during)
            and want.rely.issubset(have.rely)
            and have.total.issubset(want.total))


def compat_type(actual, expected) -> bool:
    if actual == expected:
        return True
    if isinstance(actual, TBase) and expected == INTOPT_T:
        return actual.name in ("int", "intopt") or actual.name == "null"
    if isinstance(actual, TProd) and isinstance(expected, TProd):
        return compat_type(actual.fst, expected.fst) and compat_type(actual.snd, expected.snd)
    if isinstance(actual, TArrow) and isinstance(expected, TArrow):
        return (actual.arg == expected.arg
                and compat_type(actual.res, expected.res)
                and spec_subsumes(actual.spec, expected.spec))
    return False


# --------------------------------------------------------------------------
# Contexts, registry, footprints
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Ctx:
    entries: tuple

    @staticmethod
    def empty() -> "Ctx":
        return Ctx(())

    @staticmethod
    def of(**kw) -> "Ctx":
        return Ctx(tuple(kw.items()))

    def bind(self, name, tau) -> "Ctx":
        return Ctx(self.entries + ((name, tau),))

    def lookup(self, name):
        for n, t in reversed(self.entries):
            if n == name:
                return t
        return None


@dataclass
class AxiomEntry:
    left: Term
    right: Term
    tau: object
    status: str  # "declared" | "game-verified"
    report: dict = None


class AxiomRegistry:
    def __init__(self):
        self.entries: list[AxiomEntry] = []

    def add(self, entry: AxiomEntry):
        self.entries.append(entry)

    def lookup_value(self, v: Term):
        """Types assignable to ``v`` through Ax1/Ax2 (up to alpha-renaming)."""
        out = []
        for e in self.entries:
            if lang.alpha_equal(e.left, v) or lang.alpha_equal(e.right, v):
                out.append(e)
        return out

    def unverified(self):
        return [e for e in self.entries if e.status != "game-verified"]


def register_axiom(registry: AxiomRegistry, vL: Term, vR: Term, tau,
                   verify: bool, gc) -> AxiomEntry:
    """Add an axiom; optionally establish it semantically via the game."""
    if lang.free_vars(vL) or lang.free_vars(vR):
        raise TypeError_("axioms relate closed values")
    if not (lang.is_value(vL) and lang.is_value(vR)):
        raise TypeError_("axioms relate value forms")
    entry = AxiomEntry(vL, vR, tau, "declared")
    if verify:
        from .game import check_axiom
        report = check_axiom(vL, vR, tau, gc)
        entry.report = report
        if not report["ok"]:
            raise TypeError_(f"axiom failed game verification: {report}")
        entry.status = "game-verified"
    registry.add(entry)
    return entry


def footprint_map(world) -> dict:
    """Concrete location -> names of abstract locations owning it."""
    out: dict[Loc, frozenset] = {}
    for l in world.locations:
        for c in l.footprint:
            out[c] = out.get(c, frozenset()) | {l.name}
    return out


# --------------------------------------------------------------------------
# Checking
# --------------------------------------------------------------------------

@dataclass
class CheckResult:
    ok: bool
    reason: str = ""
    derivation: dict = None
    synthesized: object = None
    notes: list = field(default_factory=list)

    def to_json(self):
        return {"ok": self.ok, "reason": self.reason, "notes": self.notes,
                "derivation": self.derivation}


class _Fail(Exception):
    def __init__(self, term, reason):
        self.term = term
        self.reason = reason
        super().__init__(reason)


_BUILTIN_TYPES = {
    "+": (TProd(INT_T, INT_T), INT_T),
    "-": (TProd(INT_T, INT_T), INT_T),
    "*": (TProd(INT_T, INT_T), INT_T),
    "div": (TProd(INT_T, INT_T), INT_T),
    "mod": (TProd(INT_T, INT_T), INT_T),
    "<": (TProd(INT_T, INT_T), BOOL_T),
    "not": (BOOL_T, BOOL_T),
    "isnull": (INTOPT_T, BOOL_T),
    "isint": (INTOPT_T, BOOL_T),
}


class _Checker:
    def __init__(self, gc, registry: AxiomRegistry = None):
        self.gc = gc
        self.registry = registry if registry is not None else getattr(gc, "registry", None) or AxiomRegistry()
        self.fp = footprint_map(gc.world)
        self.loc_types = getattr(gc, "loc_types", {}) or {}
        self.notes = []

    # -- values -------------------------------------------------------------

    def synth_value(self, ctx: Ctx, v: Term):
        if isinstance(v, Lit):
            x = v.value
            if isinstance(x, bool):
                return BOOL_T
            if isinstance(x, int):
                return INT_T
            if x == ():
                return UNIT_T
            if x is None:
                return INTOPT_T
            raise _Fail(v, f"literal {x!r} has no type here")
        if isinstance(v, Var):
            t = ctx.lookup(v.name)
            if t is None:
                raise _Fail(v, f"unbound variable {v.name}")
            return t
        if isinstance(v, Pair):
            return TProd(self.synth_value(ctx, v.fst), self.synth_value(ctx, v.snd))
        if isinstance(v, Proj):
            t = self.synth_value(ctx, v.tup)
            if not isinstance(t, TProd):
                raise _Fail(v, f"projection from non-product type {format_type(t)}")
            return t.fst if v.index == 1 else t.snd
        if isinstance(v, Const):
            if v.name == "=":
                raise _Fail(v, "equality needs an expected type; apply it")
            if v.name in _BUILTIN_TYPES:
                a, r = _BUILTIN_TYPES[v.name]
                e = EffectSet.empty()
                return TArrow(a, EffectSpec(e, e, e), r)
            raise _Fail(v, f"builtin {v.name} has no standalone type")
        if isinstance(v, Rec):
            for entry in self.registry.lookup_value(v):
                return entry.tau
            raise _Fail(v, "recursive function needs an ascribed arrow type "
                           "or a registered axiom")
        raise _Fail(v, f"not a value form: {v!r}")

    def check_value(self, ctx: Ctx, v: Term, tau):
        for entry in self.registry.lookup_value(v):
            if compat_type(entry.tau, tau):
                if entry.status != "game-verified":
                    self.notes.append(f"uses unverified axiom at {format_type(entry.tau)}")
                return {"rule": "axiom", "type": format_type(tau)}
        if isinstance(v, Rec) and isinstance(tau, TArrow):
            ctx2 = ctx.bind(v.fname, tau).bind(v.param, tau.arg)
            sub = self.check_comp_inner(ctx2, v.body, tau.res, tau.spec)
            sub.pop("_synthesized", None)
            return {"rule": "rec", "type": format_type(tau), "body": sub}
        if isinstance(v, Pair) and isinstance(tau, TProd):
            return {"rule": "pair",
                    "fst": self.check_value(ctx, v.fst, tau.fst),
                    "snd": self.check_value(ctx, v.snd, tau.snd)}
        got = self.synth_value(ctx, v)
        if not compat_type(got, tau):
            raise _Fail(v, f"value has type {format_type(got)}, "
                           f"expected {format_type(tau)}")
        return {"rule": "value", "type": format_type(got)}

    # -- computations ---------------------------------------------------------

    def footprint(self, term, target: Term) -> frozenset:
        if not (isinstance(target, Lit) and isinstance(target.value, Loc)):
            raise _Fail(term, "heap access target must be a concrete location "
                              "literal in checked code")
        loc = target.value
        owners = self.fp.get(loc)
        if not owners:
            raise _Fail(term, f"location {loc.name} is not governed by any "
                              f"abstract location in the world")
        return owners

    def content_type(self, loc: Loc):
        return self.loc_types.get(loc, INT_T)

    def synth(self, ctx: Ctx, e: Term, rely: EffectSet):
        """Returns (during, total-extra, type, derivation)."""
        E = EffectSet
        if isinstance(e, Ret):
            t = self.synth_value(ctx, e.value)
            return E.empty(), E.empty(), t, {"rule": "return", "type": format_type(t)}
        if isinstance(e, Choice):
            return E.empty(), E.empty(), BOOL_T, {"rule": "choice"}
        if isinstance(e, Diverge):
            return E.empty(), E.empty(), None, {"rule": "diverge"}
        if isinstance(e, Let):
            d1, t1, ty1, der1 = self.synth(ctx, e.bound, rely)
            ctx2 = ctx.bind(e.var, ty1 if ty1 is not None else UNIT_T)
            d2, t2, ty2, der2 = self.synth(ctx2, e.body, rely)
            return d1 | d2, t1 | t2, ty2, {"rule": "let", "var": e.var,
                                           "bound": der1, "body": der2}
        if isinstance(e, If):
            tc = self.synth_value(ctx, e.cond)
            if tc != BOOL_T:
                raise _Fail(e, f"condition has type {format_type(tc)}, expected bool")
            d1, t1, ty1, der1 = self.synth(ctx, e.then, rely)
            d2, t2, ty2, der2 = self.synth(ctx, e.orelse, rely)
            ty = self._join(e, ty1, ty2)
            return d1 | d2, t1 | t2, ty, {"rule": "if", "then": der1, "else": der2}
        if isinstance(e, Read):
            owners = self.footprint(e, e.target)
            rds = E(frozenset(("rd", n) for n in owners))
            return E.empty(), rds, self.content_type(e.target.value), \
                {"rule": "read", "effects": repr(rds)}
        if isinstance(e, Write):
            owners = self.footprint(e, e.target)
            tv = self.synth_value(ctx, e.payload)
            ct = self.content_type(e.target.value)
            if not compat_type(tv, ct):
                raise _Fail(e, f"stored value has type {format_type(tv)}, "
                               f"cell holds {format_type(ct)}")
            atoms = set()
            for n in owners:
                atoms.add(("wr", n))
                if len(owners) > 1:
                    atoms.add(("ch", n))
            eff = EffectSet(frozenset(atoms))
            if len(owners) > 1:
                self.notes.append(
                    f"write to shared footprint {sorted(owners)} is chaotic; "
                    f"register an axiom for a refined effect")
            return eff, eff, UNIT_T, {"rule": "write", "effects": repr(eff)}
        if isinstance(e, Ref):
            raise _Fail(e, "allocation carries no effect annotation; it is "
                           "permitted only inside game-verified axiom bodies")
        if isinstance(e, App):
            return self._synth_app(ctx, e, rely)
        if isinstance(e, Par):
            from .effects import join_par
            d1, t1, ty1, der1 = self.synth(ctx, e.left, rely)
            d2, t2, ty2, der2 = self.synth(ctx, e.right, rely)
            total = t1 | t2 | join_par(d1, d2)
            ty = TProd(ty1 or UNIT_T, ty2 or UNIT_T)
            return d1 | d2, total, ty, {"rule": "par", "left": der1, "right": der2}
        if isinstance(e, Atomic):
            d, t, ty, der = self.synth(ctx, e.body, EffectSet.empty())
            return t, t, ty, {"rule": "atomic", "body": der}
        if lang.is_value(e):
            t = self.synth_value(ctx, e)
            return E.empty(), E.empty(), t, {"rule": "return", "type": format_type(t)}
        raise _Fail(e, f"cannot synthesize effects for {e!r}")

    def _join(self, e, ty1, ty2):
        if ty1 is None:
            return ty2
        if ty2 is None or ty1 == ty2:
            return ty1
        if {ty1, ty2} <= {INT_T, INTOPT_T}:
            return INTOPT_T
        raise _Fail(e, f"branches have different types "
                       f"{format_type(ty1)} / {format_type(ty2)}")

    def _synth_app(self, ctx: Ctx, e: App, rely: EffectSet):
        if isinstance(e.fun, Const):
            if e.fun.name == "=":
                ta = self.synth_value(ctx, e.arg)
                if not (isinstance(ta, TProd) and isinstance(ta.fst, TBase)
                        and isinstance(ta.snd, TBase)):
                    raise _Fail(e, "equality compares simple values")
                return (EffectSet.empty(), EffectSet.empty(), BOOL_T,
                        {"rule": "builtin", "name": "="})
            if e.fun.name in _BUILTIN_TYPES:
                want, res = _BUILTIN_TYPES[e.fun.name]
                ta = self.synth_value(ctx, e.arg)
                if not compat_type(ta, want):
                    raise _Fail(e, f"builtin {e.fun.name} applied to "
                                   f"{format_type(ta)}")
                return (EffectSet.empty(), EffectSet.empty(), res,
                        {"rule": "builtin", "name": e.fun.name})
            raise _Fail(e, f"unknown builtin {e.fun.name}")
        ft = None
        if isinstance(e.fun, Var):
            ft = ctx.lookup(e.fun.name)
            if ft is None:
                raise _Fail(e, f"unbound function {e.fun.name}")
        else:
            for entry in self.registry.lookup_value(e.fun):
                ft = entry.tau
                if entry.status != "game-verified":
                    self.notes.append("uses unverified axiom")
                break
        if ft is None and isinstance(e.fun, Rec):
            raise _Fail(e, "recursive function application needs a registered "
                           "axiom or a let-bound ascription")
        if not isinstance(ft, TArrow):
            raise _Fail(e, f"applying non-function of type "
                           f"{format_type(ft) if ft else '?'}")
        ta = self.synth_value(ctx, e.arg)
        if not compat_type(ta, ft.arg):
            raise _Fail(e, f"argument type {format_type(ta)} does not match "
                           f"{format_type(ft.arg)}")
        if not rely.issubset(ft.spec.rely):
            raise _Fail(e, f"callee tolerates rely {ft.spec.rely!r}, ambient "
                           f"rely is {rely!r}")
        return (ft.spec.during, ft.spec.total, ft.res,
                {"rule": "app", "callee": format_type(ft)})

    def check_comp_inner(self, ctx, e, tau, spec: EffectSpec):
        during, extra, ty, der = self.synth(ctx, e, spec.rely)
        total = spec.rely | extra
        if ty is not None and not compat_type(ty, tau):
            raise _Fail(e, f"computation has type {format_type(ty)}, "
                           f"expected {format_type(tau)}")
        if not during.issubset(spec.during):
            raise _Fail(e, f"guarantee {during!r} exceeds ascribed {spec.during!r}")
        if not total.issubset(spec.total):
            raise _Fail(e, f"end-to-end {total!r} exceeds ascribed {spec.total!r}")
        for part in (during, total):
            bad = wf_effect(part, self.gc.world)
            if bad:
                raise _Fail(e, f"synthesized effect ill-formed: {'; '.join(bad)}")
        return {"rule": "subeffect", "synth_during": repr(during),
                "synth_total": repr(total), "goal": repr(spec), "body": der,
                "_synthesized": (during, total)}


def check_value(ctx: Ctx, v: Term, tau, gc, registry: AxiomRegistry = None) -> CheckResult:
    ch = _Checker(gc, registry)
    try:
        der = ch.check_value(ctx, v, tau)
    except _Fail as f:
        return CheckResult(False, reason=f"{f.reason} (at {lang.pretty(f.term)})",
                           notes=ch.notes)
    return CheckResult(True, derivation=der, notes=ch.notes)


def check_comp(ctx: Ctx, e: Term, tau, spec: EffectSpec, gc,
               registry: AxiomRegistry = None) -> CheckResult:
    """Check ``e`` against ``tau & spec`` by synthesis plus subeffecting."""
    ch = _Checker(gc, registry)
    try:
        spec.validate(gc.world)
        der = ch.check_comp_inner(ctx, e, tau, spec)
    except _Fail as f:
        return CheckResult(False, reason=f"{f.reason} (at {lang.pretty(f.term)})",
                           notes=ch.notes)
    except Exception as ex:  # ill-formed specs
        return CheckResult(False, reason=str(ex), notes=ch.notes)
    synth = der.pop("_synthesized")
    return CheckResult(True, derivation=der, synthesized=synth, notes=ch.notes)
