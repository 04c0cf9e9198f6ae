"""Effect-dependent program transformations with machine-checked side
conditions and per-instance game verification.

Each rule carries the premise judgments and effect side conditions of its
congruence schema; ``apply_rule`` discharges the premises through the
checker, names the failing condition when inapplicable, and otherwise
produces the rewritten term with the conclusion specification.
``verify_rewrite`` then plays the matching game between the two
denotations in the claimed direction(s).  Rules are applied at explicit
redex paths; there is no search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import lang
from .effects import EffectSet, EffectSpec, chaoticize, ortho
from .game import GameConfig, t0_member, type_rel
from .interp import trace_equiv
from .lang import (App, Atomic, If, Let, Pair, Par, Proj, Read, Rec, Ref, Ret,
                   Term, Var, Write, free_vars)
from .typecheck import (UNIT_T, AxiomRegistry, Ctx, TArrow, _Checker,
                        check_comp, format_type)

RULES = ("Parallelization", "Commuting", "Duplicated", "LambdaHoist", "Deadcode")


class RewriteError(Exception):
    pass


@dataclass
class RewriteReport:
    rule: str
    applicable: bool
    original: Term
    rewritten: Term = None
    reason: str = ""
    premises: list = field(default_factory=list)
    side_conditions: dict = field(default_factory=dict)
    conclusion_spec: EffectSpec = None
    conclusion_type: object = None
    direction: str = ""           # "rewritten<=original", "original<=rewritten", "equal"
    path: tuple = ()
    verification: list = field(default_factory=list)

    def to_json(self):
        out = {
            "rule": self.rule,
            "applicable": self.applicable,
            "original": lang.pretty(self.original),
            "path": list(self.path),
        }
        if not self.applicable:
            out["reason"] = self.reason
            return out
        out.update({
            "rewritten": lang.pretty(self.rewritten),
            "direction": self.direction,
            "conclusion_spec": repr(self.conclusion_spec),
            "conclusion_type": format_type(self.conclusion_type)
            if self.conclusion_type is not None else None,
            "side_conditions": self.side_conditions,
            "premises": [p.to_json() if hasattr(p, "to_json") else p
                         for p in self.premises],
            "verification": [v.to_json() if hasattr(v, "to_json") else v
                             for v in self.verification],
        })
        return out

    @property
    def verified(self) -> bool:
        return bool(self.verification) and all(
            getattr(v, "won", False) or v.get("equal") for v in self.verification
            if not isinstance(v, str))


# -- term surgery ------------------------------------------------------------

def subterm_at(t: Term, path) -> Term:
    for i in path:
        t = lang.children(t)[i]
    return t


def replace_at(t: Term, path, new: Term) -> Term:
    if not path:
        return new
    i, rest = path[0], path[1:]
    kids = list(lang.children(t))
    kids[i] = replace_at(kids[i], rest, new)
    return _rebuild(t, kids)


def _rebuild(t: Term, kids):
    cls = type(t)
    if cls is Pair:
        return Pair(*kids)
    if cls is Proj:
        return Proj(kids[0], t.index)
    if cls is Rec:
        return Rec(t.fname, t.param, kids[0])
    if cls is Ret:
        return Ret(kids[0])
    if cls is Let:
        return Let(t.var, kids[0], kids[1])
    if cls is App:
        return App(kids[0], kids[1])
    if cls is If:
        return If(kids[0], kids[1], kids[2])
    if cls is Read:
        return Read(kids[0])
    if cls is Write:
        return Write(kids[0], kids[1])
    if cls is Ref:
        return Ref(kids[0])
    if cls is Par:
        return Par(kids[0], kids[1])
    if cls is Atomic:
        return Atomic(kids[0])
    raise RewriteError(f"cannot rebuild {t!r}")


def context_at(t: Term, path, gc: GameConfig, rely: EffectSet,
               registry: AxiomRegistry) -> Ctx:
    """Typing context induced by binders along the path."""
    ch = _Checker(gc, registry)
    ctx = Ctx.empty()
    here = t
    for i in path:
        if isinstance(here, Let) and i == 1:
            _, _, ty, _ = ch.synth(ctx, here.bound, rely)
            ctx = ctx.bind(here.var, ty if ty is not None else None)
        elif isinstance(here, Rec) and i == 0:
            raise RewriteError("rewriting under an unannotated function "
                               "binder is not supported")
        here = lang.children(here)[i]
    return ctx


def _fresh_like(base: str, avoid) -> str:
    i = 0
    name = base
    while name in avoid:
        i += 1
        name = f"{base}{i}"
    return name


def _freshen_against(t: Term, avoid: set) -> Term:
    """Rename binders of ``t`` apart from ``avoid`` (keeps binders distinct)."""
    used = set(avoid)

    def pick(x):
        y = _fresh_like(x, used)
        used.add(y)
        return y

    def go(t, ren):
        if isinstance(t, Var):
            return Var(ren.get(t.name, t.name))
        if isinstance(t, Let):
            bound = go(t.bound, ren)
            v2 = pick(t.var)
            return Let(v2, bound, go(t.body, {**ren, t.var: v2}))
        if isinstance(t, Rec):
            f2, x2 = pick(t.fname), pick(t.param)
            return Rec(f2, x2, go(t.body, {**ren, t.fname: f2, t.param: x2}))
        kids = [go(c, ren) for c in lang.children(t)]
        return _rebuild(t, kids) if kids else t

    return go(t, {})


# -- the rules ----------------------------------------------------------------

def _need(params, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise RewriteError(f"rule needs effect parameters {missing}")
    return [params[k] for k in keys]


def _check_premise(label, ctx, e, spec, gc, registry, premises):
    # premise types are synthesized, not ascribed: run the checker directly
    ch = _Checker(gc, registry)
    try:
        spec.validate(gc.world)
        during, extra, ty, der = ch.synth(ctx, e, spec.rely)
    except Exception as ex:
        premises.append({"premise": label, "ok": False, "reason": str(ex)})
        return False, None
    total = spec.rely | extra
    ok = during.issubset(spec.during) and total.issubset(spec.total)
    premises.append({"premise": label, "ok": ok,
                     "synth": [repr(during), repr(total)],
                     "goal": repr(spec)})
    return ok, ty


def apply_rule(rule: str, t: Term, path, params: dict, gc: GameConfig,
               registry: AxiomRegistry = None) -> RewriteReport:
    if rule not in RULES:
        raise RewriteError(f"unknown rule {rule}; choose from {RULES}")
    registry = registry or AxiomRegistry()
    path = tuple(path)
    redex = subterm_at(t, path)
    fail = lambda reason: RewriteReport(rule, False, t, reason=reason, path=path)  # noqa: E731

    E = EffectSet
    if rule in ("Parallelization", "Commuting"):
        if not (isinstance(redex, Let) and isinstance(redex.body, Let)):
            return fail("pattern: let x = e1 in let y = e2 in k")
        x, e1 = redex.var, redex.bound
        y, e2, k = redex.body.var, redex.body.bound, redex.body.body
        if x in free_vars(e2):
            return fail(f"{x} occurs free in the second computation")
        eps1, eps2, eps, eps1p, eps2p = _need(params, "eps1", "eps2", "eps",
                                              "eps1p", "eps2p")
        side = {}
        if rule == "Parallelization":
            side["eps1 _|_ eps2"] = ortho(eps1, eps2)
            side["eps1 _|_ eps"] = ortho(eps1, eps)
            side["eps2 _|_ eps"] = ortho(eps2, eps)
            rely1 = chaoticize(eps) | chaoticize(eps2)
            rely2 = chaoticize(eps) | chaoticize(eps1)
        else:
            side["eps1' _|_ eps2'"] = ortho(eps1p, eps2p)
            side["eps1 _|_ eps"] = ortho(eps1, eps)
            side["eps2 _|_ eps"] = ortho(eps2, eps)
            rely1 = rely2 = chaoticize(eps)
        if not all(side.values()):
            bad = [k2 for k2, v in side.items() if not v]
            rep = fail(f"side condition fails: {', '.join(bad)}")
            rep.side_conditions = side
            return rep
        premises = []
        ctx = context_at(t, path, gc, eps, registry)
        ok1, ty1 = _check_premise("e1", ctx, e1,
                                  EffectSpec(eps1, rely1, rely1 | eps1p),
                                  gc, registry, premises)
        ok2, ty2 = _check_premise("e2", ctx, e2,
                                  EffectSpec(eps2, rely2, rely2 | eps2p),
                                  gc, registry, premises)
        if not (ok1 and ok2):
            rep = fail("premise judgment not derivable")
            rep.premises = premises
            rep.side_conditions = side
            return rep
        conclusion = EffectSpec(chaoticize(eps1) | chaoticize(eps2), eps,
                                eps | eps1p | eps2p)
        ch = _Checker(gc, registry)
        ctx_k = ctx.bind(x, ty1).bind(y, ty2)
        _, _, tyk, _ = ch.synth(ctx_k, k, eps)
        if rule == "Parallelization":
            p = _fresh_like("_p", free_vars(redex) | {x, y})
            new_redex = Let(p, Par(e1, e2),
                            Let(x, Ret(Proj(Var(p), 1)),
                                Let(y, Ret(Proj(Var(p), 2)), k)))
            direction = "rewritten<=original"
        else:
            if y in free_vars(e1):
                return fail(f"{y} occurs free in the first computation")
            new_redex = Let(y, e2, Let(x, e1, k))
            direction = "equal"
        rep = RewriteReport(rule, True, t, replace_at(t, path, new_redex),
                            premises=premises, side_conditions=side,
                            conclusion_spec=conclusion, conclusion_type=tyk,
                            direction=direction, path=path)
        return rep

    if rule == "Duplicated":
        if not (isinstance(redex, Let) and isinstance(redex.body, Ret)
                and isinstance(redex.body.value, Pair)):
            return fail("pattern: let x = e in (x, x)")
        x, e = redex.var, redex.bound
        pair = redex.body.value
        if pair != Pair(Var(x), Var(x)):
            return fail("pattern: let x = e in (x, x)")
        eps1, eps2, epsp = _need(params, "eps1", "eps2", "epsp")
        side = {
            "rds(eps') /\\ wrs(eps') empty": not (epsp.rds & epsp.wrs),
            "eps2 _|_ eps1": ortho(eps2, eps1),
        }
        if not all(side.values()):
            bad = [k2 for k2, v in side.items() if not v]
            rep = fail(f"side condition fails: {', '.join(bad)}")
            rep.side_conditions = side
            return rep
        premises = []
        ctx = context_at(t, path, gc, eps2, registry)
        rely = chaoticize(eps2)
        ok, ty = _check_premise("e", ctx, e, EffectSpec(eps1, rely, rely | epsp),
                                gc, registry, premises)
        if not ok:
            rep = fail("premise judgment not derivable")
            rep.premises = premises
            rep.side_conditions = side
            return rep
        y = _fresh_like("_y", free_vars(redex) | {x})
        e_copy = _freshen_against(e, _bound_vars(t))
        new_redex = Let(x, e, Let(y, e_copy, Ret(Pair(Var(x), Var(y)))))
        conclusion = EffectSpec(chaoticize(eps1), eps2, eps2 | epsp)
        from .typecheck import TProd
        rep = RewriteReport("Duplicated", True, t, replace_at(t, path, new_redex),
                            premises=premises, side_conditions=side,
                            conclusion_spec=conclusion,
                            conclusion_type=TProd(ty, ty),
                            direction="original<=rewritten", path=path)
        return rep

    if rule == "LambdaHoist":
        if not (isinstance(redex, Let) and isinstance(redex.body, Ret)
                and isinstance(redex.body.value, Rec)):
            return fail("pattern: let y = e1 in \\x. e2")
        y, e1 = redex.var, redex.bound
        fn = redex.body.value
        if fn.fname in free_vars(fn.body):
            return fail("hoisting across a genuinely recursive function")
        eps1, eps2, eps, tau3 = _need(params, "eps1", "eps2", "eps", "tau3")
        side = {"eps _|_ eps1": ortho(eps, eps1)}
        if not all(side.values()):
            rep = fail("side condition fails: eps _|_ eps1")
            rep.side_conditions = side
            return rep
        premises = []
        ctx = context_at(t, path, gc, eps, registry)
        relyc = chaoticize(eps)
        ok1, ty1 = _check_premise("e1", ctx, e1, EffectSpec(eps1, relyc, relyc),
                                  gc, registry, premises)
        if not ok1:
            rep = fail("premise judgment not derivable (e1 must clean up: "
                       "its end-to-end effect is the chaoticized rely alone)")
            rep.premises = premises
            rep.side_conditions = side
            return rep
        ctx2 = ctx.bind(fn.param, tau3).bind(y, ty1 if ty1 is not None else UNIT_T)
        ok2, ty2 = _check_premise("e2", ctx2, fn.body,
                                  EffectSpec(eps2, eps, eps | eps2),
                                  gc, registry, premises)
        if not ok2:
            rep = fail("premise judgment not derivable")
            rep.premises = premises
            rep.side_conditions = side
            return rep
        new_redex = Ret(Rec(fn.fname, fn.param, Let(y, e1, fn.body)))
        arrow = TArrow(tau3, EffectSpec(chaoticize(eps1) | eps2, eps, eps | eps2),
                       ty2)
        conclusion = EffectSpec(chaoticize(eps1), eps, eps)
        rep = RewriteReport("LambdaHoist", True, t, replace_at(t, path, new_redex),
                            premises=premises, side_conditions=side,
                            conclusion_spec=conclusion, conclusion_type=arrow,
                            direction="original<=rewritten", path=path)
        return rep

    if rule == "Deadcode":
        if not isinstance(redex, Let):
            return fail("pattern: let x = e1 in e2")
        x, e1, e2 = redex.var, redex.bound, redex.body
        if x in free_vars(e2):
            return fail(f"{x} is used in the continuation")
        eps1, eps2, eps, eps1p, eps2p = _need(params, "eps1", "eps2", "eps",
                                              "eps1p", "eps2p")
        side = {
            "eps1 _|_ eps": ortho(eps1, eps),
            "wrs(eps1') empty": not eps1p.wrs,
        }
        if not all(side.values()):
            bad = [k2 for k2, v in side.items() if not v]
            rep = fail(f"side condition fails: {', '.join(bad)}")
            rep.side_conditions = side
            return rep
        premises = []
        ctx = context_at(t, path, gc, eps, registry)
        relyc = chaoticize(eps)
        ok1, ty1 = _check_premise("e1", ctx, e1,
                                  EffectSpec(eps1, relyc, relyc | eps1p),
                                  gc, registry, premises)
        ok2, ty2 = _check_premise("e2", ctx, e2, EffectSpec(eps2, eps, eps2p),
                                  gc, registry, premises)
        if not (ok1 and ok2):
            rep = fail("premise judgment not derivable")
            rep.premises = premises
            rep.side_conditions = side
            return rep
        conclusion = EffectSpec(chaoticize(eps1) | eps2, eps, eps | eps2p)
        rep = RewriteReport("Deadcode", True, t, replace_at(t, path, e2),
                            premises=premises, side_conditions=side,
                            conclusion_spec=conclusion, conclusion_type=ty2,
                            direction="rewritten<=original", path=path)
        return rep

    raise RewriteError(f"unhandled rule {rule}")


def _bound_vars(t: Term) -> set:
    out = set()

    def go(t):
        if isinstance(t, Let):
            out.add(t.var)
        if isinstance(t, Rec):
            out.add(t.fname)
            out.add(t.param)
        for c in lang.children(t):
            go(c)

    go(t)
    return out


# -- verification --------------------------------------------------------------

def verify_rewrite(report: RewriteReport, gc: GameConfig) -> RewriteReport:
    """Play the matching game between the whole original and rewritten
    programs at the rule's conclusion specification."""
    if not report.applicable:
        raise RewriteError("cannot verify an inapplicable rewrite")
    if free_vars(report.original) or free_vars(report.rewritten):
        raise RewriteError("verification needs closed programs")
    spec = report.conclusion_spec
    E = type_rel(report.conclusion_type, gc) if report.conclusion_type is not None \
        else None
    if E is None:
        raise RewriteError("no conclusion type to interpret results at")
    U = gc.eval_side(report.original, rely=spec.rely)
    V = gc.eval_side(report.rewritten, rely=spec.rely)
    claims = {
        "rewritten<=original": [(V, U, "rewritten<=original")],
        "original<=rewritten": [(U, V, "original<=rewritten")],
        "equal": [(V, U, "rewritten<=original"), (U, V, "original<=rewritten")],
    }[report.direction]
    report.verification = []
    for L, R, label in claims:
        res = t0_member(L, R, E, spec, gc.world, gc.universe,
                        pilot_len=gc.pilot_len)
        res.bounds["claim"] = label
        report.verification.append(res)
    return report


def pipeline(t: Term, steps, gc: GameConfig, registry: AxiomRegistry = None,
             final_spec: EffectSpec = None, final_type=None):
    """Apply rewrite steps left to right; verify end to end.

    Each step is ``{"rule": name, "path": ..., "params": ...}`` or
    ``{"rule": "sem", "replacement": term}`` discharged by bounded trace
    equivalence.  The returned dict carries per-step reports plus a final
    whole-program game between the first and last terms.
    """
    registry = registry or AxiomRegistry()
    current = t
    reports = []
    last_spec, last_type = final_spec, final_type
    for step in steps:
        if step["rule"] == "sem":
            replacement = step["replacement"]
            if isinstance(replacement, str):
                replacement = lang.parse(replacement)
            eq, rep = trace_equiv(current, replacement, gc.eval_config())
            reports.append({"rule": "sem", "equal": eq, "report": rep["bounds"]})
            if not eq:
                reports[-1]["witness"] = rep.get("witness_left_only") or \
                    rep.get("witness_right_only")
                return {"ok": False, "steps": reports, "final": None}
            current = replacement
        else:
            rep = apply_rule(step["rule"], current, step.get("path", ()),
                             step.get("params", {}), gc, registry)
            reports.append(rep)
            if not rep.applicable:
                return {"ok": False, "steps": reports, "final": None}
            current = rep.rewritten
            if final_spec is None:
                last_spec = rep.conclusion_spec
                last_type = rep.conclusion_type
    final = None
    if last_spec is not None and last_type is not None and steps:
        E = type_rel(last_type, gc)
        U = gc.eval_side(t, rely=last_spec.rely)
        V = gc.eval_side(current, rely=last_spec.rely)
        final = t0_member(V, U, E, last_spec, gc.world, gc.universe,
                          pilot_len=gc.pilot_len)
    ok = all((r.applicable if isinstance(r, RewriteReport) else r["equal"])
             for r in reports)
    return {"ok": ok, "steps": reports, "final": final, "result": current}
