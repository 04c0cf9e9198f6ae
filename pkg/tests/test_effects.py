import random

import pytest

from efftrace.abstract_loc import World, loc_int, loc_msq, msq_parse, msq_universe
from efftrace.effects import (EffectError, EffectSet, EffectSpec, chaoticize,
                              context, format_effects, join_par, ortho,
                              parse_effects, require_wf, step_rel, tile,
                              wf_effect)
from efftrace.store import Heap, HeapUniverse, Loc

X, Y, H = Loc("X"), Loc("Y"), Loc("H")


def E(*pairs):
    return EffectSet.of(*pairs)


RDX, WRX, CHX = ("rd", "X"), ("wr", "X"), ("ch", "X")
RDY, WRY = ("rd", "Y"), ("wr", "Y")


@pytest.fixture
def intworld():
    u = HeapUniverse.product({X: (0, 1, 2, 3), Y: (0, 1, 2, 3)})
    w = World([loc_int(X, "X"), loc_int(Y, "Y")])
    return u, w


def test_chaoticize():
    assert chaoticize(E(RDX, WRX)) == E(CHX, WRX)
    assert chaoticize(EffectSet.empty()) == EffectSet.empty()
    assert chaoticize(E(RDX)) == EffectSet.empty()
    assert chaoticize(chaoticize(E(RDX, WRX, WRY))) == chaoticize(E(RDX, WRX, WRY))


def test_ortho():
    assert ortho(E(RDX, WRX), E(RDY, WRY))
    assert not ortho(E(RDX), E(WRX))
    assert ortho(E(RDX), E(RDX))
    assert ortho(E(RDX), E(RDX, RDY))
    assert not ortho(E(WRX), E(WRX))


def test_join_par():
    assert join_par(E(WRX), E(WRX)) == E(WRX)
    assert join_par(E(WRX), EffectSet.empty()) == EffectSet.empty()
    assert join_par(E(RDX), E(RDY)) == E(RDX, RDY)
    a, b, c = E(WRX, RDY), E(WRX, WRY), E(RDX)
    assert join_par(a, b) == join_par(b, a)
    assert join_par(join_par(a, b), c) == join_par(a, join_par(b, c))
    assert join_par(a, b).atoms <= (a.atoms | b.atoms)


def test_wf_effect(intworld):
    u, w = intworld
    assert wf_effect(E(RDX, WRX), w) == []
    assert wf_effect(E(CHX, WRX), w) == []
    assert any("read and chaotic" in p for p in wf_effect(E(RDX, CHX, WRX), w))
    assert any("chaotic without write" in p for p in wf_effect(E(CHX), w))
    assert any("unknown" in p for p in wf_effect(E(("rd", "Z")), w))


def test_wf_observation_about_chaoticize_union(intworld):
    # whenever e^C ∪ e1 is well-formed, e1 reads nothing e writes
    u, w = intworld
    atoms = [RDX, WRX, CHX, RDY, WRY]
    import itertools
    universe_effects = [EffectSet(frozenset(c))
                        for n in range(len(atoms) + 1)
                        for c in itertools.combinations(atoms, n)]
    for e in universe_effects:
        if wf_effect(e, w):
            continue
        for e1 in universe_effects:
            if wf_effect(e1, w):
                continue
            if not wf_effect(chaoticize(e).union(e1), w):
                assert not (e1.rds & (e.wrs | e.chs))


def test_effect_spec_requires_rely_in_total():
    with pytest.raises(EffectError):
        EffectSpec(E(WRX), E(RDX), EffectSet.empty())
    EffectSpec(E(WRX), E(RDX), E(RDX, WRX))


def test_parse_and_format_effects():
    e = parse_effects("rd(X) wr(X)")
    assert e == E(RDX, WRX)
    assert parse_effects("ch(X)") == E(CHX, WRX)  # chaotic implies write
    assert parse_effects("0") == EffectSet.empty()
    assert parse_effects("rd X, wr Y".replace("rd X", "rd(X)").replace("wr Y", "wr(Y)")) == E(RDX, WRY)
    for e in (E(RDX, WRY), E(CHX, WRX), EffectSet.empty()):
        assert parse_effects(format_effects(e)) == e


def test_step_rel_int(intworld):
    u, w = intworld
    assert step_rel(E(WRX), Heap({X: 0, Y: 1}), Heap({X: 3, Y: 1}), u, w)
    assert not step_rel(E(WRX), Heap({X: 0, Y: 1}), Heap({X: 3, Y: 2}), u, w)
    assert not step_rel(EffectSet.empty(), Heap({X: 0, Y: 1}), Heap({X: 1, Y: 1}), u, w)
    assert step_rel(EffectSet.empty(), Heap({X: 0, Y: 1}), Heap({X: 0, Y: 1}), u, w)


def test_step_rel_msq_composite():
    pool = tuple(Loc(f"N{i}") for i in range(1, 5))
    u = msq_universe(H, pool, (0, 1), maxlen=2, maxgarbage=2)
    w = World([loc_msq(H, pool, (0, 1), maxlen=2, name="q")])
    e = parse_effects("rd(q) wr(q)")
    h0 = next(h for h in u.heaps if msq_parse(H, h) == ((), (pool[0],), ()))
    ctx = context(w, u)
    reach_contents = {msq_parse(H, s)[2] for s in ctx.succ(e, h0)}
    assert (1,) in reach_contents        # enqueue
    assert (0, 1) in reach_contents     # enqueue twice
    assert () in reach_contents          # enqueue then dequeue, or stay
    assert (1, 0) in reach_contents


def test_tile_identity_always(intworld):
    u, w = intworld
    for e in (E(WRX), E(RDX, WRX), E(CHX, WRX), EffectSet.empty()):
        for h in u.heaps[:4]:
            for hp in u.heaps[:4]:
                assert tile(e, h, hp, h, hp, u, w)


def test_tile_chaotic_writes_need_no_sync(intworld):
    u, w = intworld
    h = Heap({X: 0, Y: 0})
    assert tile(E(CHX, WRX), h, h, h.set(X, 1), h.set(X, 3), u, w)


def test_tile_plain_writes_must_sync_when_reads_agree(intworld):
    u, w = intworld
    h = Heap({X: 0, Y: 0})
    assert not tile(E(RDX, WRX), h, h, h.set(X, 1), h.set(X, 3), u, w)
    assert tile(E(RDX, WRX), h, h, h.set(X, 1), h.set(X, 1), u, w)
    # silent on both sides is fine too
    assert tile(E(RDX, WRX), h, h, h, h, u, w)
    # when reads disagree the sync clause is not triggered
    assert tile(E(RDX, WRX), h, h.set(X, 2), h.set(X, 1), h.set(X, 3), u, w)


def test_tile_requires_protocol_steps(intworld):
    u, w = intworld
    h = Heap({X: 0, Y: 0})
    # writing Y is not allowed by an X-only effect
    assert not tile(E(WRX), h, h, h.set(Y, 1), h, u, w)


# -- the six tiling laws, randomized ----------------------------------------

def _wf_effects_pool(w):
    import itertools
    atoms = [RDX, WRX, CHX, RDY, WRY, ("ch", "Y")]
    out = []
    for n in range(len(atoms) + 1):
        for c in itertools.combinations(atoms, n):
            e = EffectSet(frozenset(c))
            if not wf_effect(e, w):
                out.append(e)
    return out


def sample_tiles(ctx, e, rng, n):
    """Random quadruples biased towards genuine tiles."""
    u = ctx.u
    out = []
    for _ in range(n):
        h = rng.choice(u.heaps)
        hp = rng.choice(u.heaps)
        if rng.random() < 0.5:
            succ_h = ctx.succ(e, h)
            succ_hp = ctx.succ(e, hp)
            h1 = rng.choice(succ_h) if succ_h else rng.choice(u.heaps)
            h1p = rng.choice(succ_hp) if succ_hp else rng.choice(u.heaps)
        else:
            h1 = rng.choice(u.heaps)
            h1p = rng.choice(u.heaps)
        out.append((h, hp, h1, h1p))
    return out


def test_tiling_lemma_randomized(intworld):
    u, w = intworld
    ctx = context(w, u)
    rng = random.Random(7)
    effects_pool = _wf_effects_pool(w)
    checked = 0
    for _ in range(200):
        e = rng.choice(effects_pool)
        (h, hp, h1, h1p), = sample_tiles(ctx, e, rng, 1)
        t1 = ctx.tile(e, h, hp, h1, h1p)
        # item 2: identity
        assert ctx.tile(e, h, hp, h, hp)
        if t1:
            checked += 1
            # item 1: vertical composition
            (h2, h2p) = rng.choice(ctx.succ(e, h1)), rng.choice(ctx.succ(e, h1p))
            if ctx.tile(e, h1, h1p, h2, h2p):
                assert ctx.tile(e, h, hp, h2, h2p)
            # item 3: monotone in the effect
            bigger = EffectSet(e.atoms | frozenset([WRY, ("ch", "Y")]))
            if not wf_effect(bigger, w):
                assert ctx.tile(bigger, h, hp, h1, h1p)
            # item 4: weakening to the chaoticized effect
            assert ctx.tile(chaoticize(e), h, hp, h1, h1p)
            # item 5: read preservation
            if ctx.sim_all(e.rds, h, hp):
                assert ctx.sim_all(e.rds, h1, h1p)
            # item 6: world preservation
            if h in ctx.sat:
                assert h1 in ctx.sat
            if hp in ctx.sat:
                assert h1p in ctx.sat
    assert checked > 30
