import pytest

from efftrace.abstract_loc import World, loc_int
from efftrace.effects import EffectSet, parse_effects
from efftrace.game import GameConfig
from efftrace.lang import Let, Par, parse, pretty
from efftrace.rewrite import apply_rule, pipeline, verify_rewrite
from efftrace.store import HeapUniverse, Loc
from efftrace.typecheck import TBase

X, Y = Loc("X"), Loc("Y")


def E(s):
    return parse_effects(s)


@pytest.fixture
def gxy():
    u = HeapUniverse.product({X: (0, 1, 2), Y: (0, 1, 2)})
    w = World([loc_int(X, "X"), loc_int(Y, "Y")])
    return GameConfig(u, w, fuel=3, max_steps=4, pilot_len=4)


SEQ_XY = "let x = (&X := !(&X) + 1) in let y = (&Y := !(&Y) + 1) in (x, y)"


def test_parallelization_applies_and_verifies(gxy):
    t = parse(SEQ_XY)
    params = dict(eps1=E("rd(X) wr(X)"), eps2=E("rd(Y) wr(Y)"), eps=E("0"),
                  eps1p=E("rd(X) wr(X)"), eps2p=E("rd(Y) wr(Y)"))
    rep = apply_rule("Parallelization", t, (), params, gxy)
    assert rep.applicable, rep.reason
    assert isinstance(rep.rewritten, Let) and isinstance(rep.rewritten.bound, Par)
    rep = verify_rewrite(rep, gxy)
    assert rep.verified, [v.to_json() for v in rep.verification]


def test_parallelization_refused_on_shared_write(gxy):
    t = parse("let x = (&X := 1) in let y = (&X := 2) in (x, y)")
    params = dict(eps1=E("wr(X)"), eps2=E("wr(X)"), eps=E("0"),
                  eps1p=E("wr(X)"), eps2p=E("wr(X)"))
    rep = apply_rule("Parallelization", t, (), params, gxy)
    assert not rep.applicable
    assert "side condition" in rep.reason


def test_commuting_applies_and_wins_both_directions(gxy):
    t = parse(SEQ_XY)
    params = dict(eps1=E("rd(X) wr(X)"), eps2=E("rd(Y) wr(Y)"), eps=E("0"),
                  eps1p=E("rd(X) wr(X)"), eps2p=E("rd(Y) wr(Y)"))
    rep = apply_rule("Commuting", t, (), params, gxy)
    assert rep.applicable, rep.reason
    assert rep.direction == "equal"
    body = rep.rewritten
    assert isinstance(body, Let) and "Y" in pretty(body.bound)
    rep = verify_rewrite(rep, gxy)
    assert len(rep.verification) == 2
    assert rep.verified, [v.to_json() for v in rep.verification]


def test_commuting_refused_when_end_effects_clash(gxy):
    t = parse("let x = (&X := 1) in let y = (&X := 2) in (x, y)")
    params = dict(eps1=E("wr(X)"), eps2=E("wr(X)"), eps=E("0"),
                  eps1p=E("wr(X)"), eps2p=E("wr(X)"))
    rep = apply_rule("Commuting", t, (), params, gxy)
    assert not rep.applicable
    assert "eps1' _|_ eps2'" in rep.reason


def test_deadcode_removes_unused_read_only_let(gxy):
    t = parse("let x = !(&X) in &Y := 1")
    params = dict(eps1=E("0"), eps2=E("wr(Y)"), eps=E("0"),
                  eps1p=E("rd(X)"), eps2p=E("wr(Y)"))
    rep = apply_rule("Deadcode", t, (), params, gxy)
    assert rep.applicable, rep.reason
    assert pretty(rep.rewritten) == "&Y := 1"
    rep = verify_rewrite(rep, gxy)
    assert rep.verified, [v.to_json() for v in rep.verification]


def test_deadcode_refused_when_dropped_code_writes(gxy):
    t = parse("let x = (&X := 1) in &Y := 1")
    params = dict(eps1=E("wr(X)"), eps2=E("wr(Y)"), eps=E("0"),
                  eps1p=E("wr(X)"), eps2p=E("wr(Y)"))
    rep = apply_rule("Deadcode", t, (), params, gxy)
    assert not rep.applicable
    assert "wrs(eps1')" in rep.reason


def test_deadcode_never_silently_passes_on_hidden_write(gxy):
    # claiming a pure eps1' while e1 writes fails the premise, not silently
    t = parse("let x = (&X := 1) in &Y := 1")
    params = dict(eps1=E("wr(X)"), eps2=E("wr(Y)"), eps=E("0"),
                  eps1p=E("rd(X)"), eps2p=E("wr(Y)"))
    rep = apply_rule("Deadcode", t, (), params, gxy)
    assert not rep.applicable
    assert "premise" in rep.reason


def test_duplicated_applies_and_converse_loses(gxy):
    t = parse("let x = ? in (x, x)")
    params = dict(eps1=E("0"), eps2=E("0"), epsp=E("0"))
    rep = apply_rule("Duplicated", t, (), params, gxy)
    assert rep.applicable, rep.reason
    rep = verify_rewrite(rep, gxy)
    assert rep.verified, [v.to_json() for v in rep.verification]
    # the converse claim is refuted with the mixed-boolean witness
    from efftrace.game import t0_member, type_rel
    U = gxy.eval_side(rep.original, rely=rep.conclusion_spec.rely)
    V = gxy.eval_side(rep.rewritten, rely=rep.conclusion_spec.rely)
    E_rel = type_rel(rep.conclusion_type, gxy)
    back = t0_member(V, U, E_rel, rep.conclusion_spec, gxy.world, gxy.universe,
                     pilot_len=gxy.pilot_len)
    assert back.verdict == "opponent-wins"
    assert back.witness["pilot_result"] in ("(True, False)", "(False, True)")


def test_duplicated_side_condition_read_write_clash(gxy):
    t = parse("let x = !(&X) in (x, x)")
    params = dict(eps1=E("0"), eps2=E("0"), epsp=E("rd(X) wr(X)"))
    rep = apply_rule("Duplicated", t, (), params, gxy)
    assert not rep.applicable


def test_lambda_hoist_diverging_prefix_is_one_directional(gxy):
    t = parse("let y = diverge in fn x => &Y := x")
    params = dict(eps1=E("0"), eps2=E("wr(Y)"), eps=E("0"), tau3=TBase("int"))
    rep = apply_rule("LambdaHoist", t, (), params, gxy)
    assert rep.applicable, rep.reason
    rep = verify_rewrite(rep, gxy)
    assert rep.verified, [v.to_json() for v in rep.verification]
    from efftrace.game import t0_member, type_rel
    U = gxy.eval_side(rep.original, rely=rep.conclusion_spec.rely)
    V = gxy.eval_side(rep.rewritten, rely=rep.conclusion_spec.rely)
    E_rel = type_rel(rep.conclusion_type, gxy)
    back = t0_member(V, U, E_rel, rep.conclusion_spec, gxy.world, gxy.universe,
                     pilot_len=gxy.pilot_len)
    assert back.verdict == "opponent-wins"


def test_lambda_hoist_terminating_pure_prefix(gxy):
    t = parse("let y = () in fn x => &Y := x")
    params = dict(eps1=E("0"), eps2=E("wr(Y)"), eps=E("0"), tau3=TBase("int"))
    rep = apply_rule("LambdaHoist", t, (), params, gxy)
    assert rep.applicable, rep.reason
    rep = verify_rewrite(rep, gxy)
    assert rep.verified, [v.to_json() for v in rep.verification]


def test_rule_application_at_a_path(gxy):
    t = parse("let p = (&Y := 2) in (let x = !(&X) in &Y := 1)")
    # deadcode at the nested let (path: body of the outer let)
    params = dict(eps1=E("0"), eps2=E("wr(Y)"), eps=E("0"),
                  eps1p=E("rd(X)"), eps2p=E("wr(Y)"))
    rep = apply_rule("Deadcode", t, (1,), params, gxy)
    assert rep.applicable, rep.reason
    assert pretty(rep.rewritten) == "let p = &Y := 2 in &Y := 1"


def test_pipeline_sem_then_rule(gxy):
    t = parse("let u = (&X := !(&X) + 1 ; &Y := !(&Y) + 1) in ((), ())")
    steps = [
        {"rule": "sem", "replacement": SEQ_XY},
        {"rule": "Parallelization", "path": (),
         "params": dict(eps1=E("rd(X) wr(X)"), eps2=E("rd(Y) wr(Y)"),
                        eps=E("0"), eps1p=E("rd(X) wr(X)"),
                        eps2p=E("rd(Y) wr(Y)"))},
    ]
    out = pipeline(t, steps, gxy)
    assert out["ok"]
    assert out["final"] is not None and out["final"].won, out["final"].witness
    assert isinstance(out["result"], Let)


def test_pipeline_empty_is_identity(gxy):
    t = parse("&X := 0")
    out = pipeline(t, [], gxy)
    assert out["ok"] and out["result"] == t and out["final"] is None


def test_pipeline_sem_step_refuses_inequivalent_replacement(gxy):
    t = parse("&X := 0")
    out = pipeline(t, [{"rule": "sem", "replacement": "&X := 1"}], gxy)
    assert not out["ok"]
