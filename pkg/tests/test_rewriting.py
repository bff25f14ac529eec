"""Rewrite engine: steps, normal forms, divergence, critical pairs."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drt_verif.rewriting import (
    DivergenceError,
    Rule,
    RewriteSystem,
    critical_pair_scan,
    eq_mod,
    normalize,
    rewrite_step,
    unify,
)
from drt_verif.terms import Signature, app, name_term, tup, var_term

SIG = Signature()
for nm, ar in (("senc", 2), ("sdec", 2), ("fst", 1), ("pair", 2), ("f", 1),
               ("g", 2), ("loop", 1), ("dup", 1), ("amb", 1), ("c", 0)):
    SIG.declare(nm, ar)


def s(name):
    return SIG.lookup(name)


def V(x):
    return var_term(x)


A, B = name_term("a"), name_term("b")
DEC = Rule("dec", app(s("sdec"), (app(s("senc"), (V("m"), V("k"))), V("k"))), V("m"))
FST = Rule("fst", app(s("fst"), (app(s("pair"), (V("x"), V("y"))),)), V("x"))
RS = RewriteSystem([DEC, FST])


def test_rule_validation():
    with pytest.raises(ValueError):
        Rule("bad_head", V("x"), A)
    with pytest.raises(ValueError):
        Rule("invents", app(s("f"), (V("x"),)), V("y"))


def test_root_step_first_match_wins():
    r1 = Rule("amb1", app(s("amb"), (V("x"),)), A)
    r2 = Rule("amb2", app(s("amb"), (V("x"),)), B)
    rs = RewriteSystem([r1, r2])
    assert rs.root_step(app(s("amb"), (A,))) is A


def test_rewrite_step_innermost_leftmost():
    enc = app(s("senc"), (A, B))
    dec = app(s("sdec"), (enc, B))
    outer = app(s("g"), (app(s("fst"), (app(s("pair"), (A, B)),)), dec))
    first = rewrite_step(outer, RS)
    assert first is app(s("g"), (A, dec))
    second = rewrite_step(first, RS)
    assert second is app(s("g"), (A, A))
    assert rewrite_step(second, RS) is None


def test_normalize_and_eq_mod():
    enc = app(s("senc"), (A, B))
    t = app(s("fst"), (app(s("pair"), (app(s("sdec"), (enc, B)), B)),))
    assert normalize(t, RS) is A
    assert eq_mod(t, A, RS)
    assert not eq_mod(t, B, RS)


def test_normalize_caches(monkeypatch):
    rs = RewriteSystem([DEC])
    t = app(s("sdec"), (app(s("senc"), (A, B)), B))
    assert normalize(t, rs) is A
    calls = []
    orig = rs.root_step
    monkeypatch.setattr(rs, "root_step", lambda x: calls.append(1) or orig(x))
    assert normalize(t, rs) is A
    assert not calls


def test_divergence_budget():
    grow = Rule("grow", app(s("loop"), (V("x"),)),
                app(s("loop"), (app(s("f"), (V("x"),)),)))
    rs = RewriteSystem([grow])
    with pytest.raises(DivergenceError):
        normalize(app(s("loop"), (A,)), rs, max_steps=200)


def test_divergence_nested_growth():
    dup = Rule("dup_grow", app(s("dup"), (V("x"),)),
               app(s("dup"), (app(s("dup"), (V("x"),)),)))
    rs = RewriteSystem([dup])
    with pytest.raises(DivergenceError):
        normalize(app(s("dup"), (A,)), rs, max_steps=300)


def test_unify_basics():
    x, y = V("x"), V("y")
    m = unify(app(s("pair"), (x, A)), app(s("pair"), (B, y)), {})
    assert m is not None and m[x] is B and m[y] is A
    assert unify(A, B, {}) is None
    assert unify(x, app(s("f"), (x,)), {}) is None
    m2 = unify(tup((x, x)), tup((A, A)), {})
    assert m2 is not None


def test_critical_pairs_joinable_system():
    report = critical_pair_scan(RS)
    assert report.all_joinable
    assert report.pairs == []


def test_critical_pairs_detect_divergence():
    # two root rules on one head with different results: a genuine conflict
    r1 = Rule("amb1", app(s("amb"), (app(s("f"), (V("x"),)),)), A)
    r2 = Rule("amb2", app(s("amb"), (V("y"),)), B)
    report = critical_pair_scan(RewriteSystem([r1, r2]))
    assert not report.all_joinable
    bad = [p for p in report.pairs if not p.joinable]
    assert bad and {bad[0].left, bad[0].right} == {A, B}


def test_critical_pairs_inner_overlap_detected():
    # outer's left side contains a fst redex; after reducing it the outer rule
    # no longer applies, so this overlap is found and reported unjoinable
    outer = Rule("outer", app(s("g"), (app(s("fst"), (V("p"),)), V("q"))), V("q"))
    report = critical_pair_scan(RewriteSystem([outer, FST]))
    inner = [p for p in report.pairs if p.position != ()]
    assert inner and not inner[0].joinable
    assert not report.all_joinable


_SIGR = Signature()
_SIGR.declare("senc", 2)
_SIGR.declare("sdec", 2)
_SIGR.declare("h", 1)

_leaf = st.sampled_from([name_term(n) for n in "abck"])


def _grow(kids):
    return st.one_of(
        st.builds(lambda x: app(_SIGR.lookup("h"), (x,)), kids),
        st.builds(lambda x, y: app(_SIGR.lookup("senc"), (x, y)), kids, kids),
        st.builds(lambda x, y: app(_SIGR.lookup("sdec"), (x, y)), kids, kids),
        st.builds(lambda x, y: tup((x, y)), kids, kids),
    )


_rand = st.recursive(_leaf, _grow, max_leaves=20)
_DECR = RewriteSystem([Rule(
    "dec", app(_SIGR.lookup("sdec"),
               (app(_SIGR.lookup("senc"), (V("m"), V("k"))), V("k"))), V("m"))])


@settings(max_examples=300, deadline=None)
@given(_rand)
def test_normalize_idempotent_random(t):
    nf = normalize(t, _DECR)
    assert normalize(nf, _DECR) is nf


@settings(max_examples=300, deadline=None)
@given(_rand)
def test_step_iteration_agrees_with_normalize(t):
    cur = t
    for _ in range(2000):
        nxt = rewrite_step(cur, _DECR)
        if nxt is None:
            break
        cur = nxt
    assert cur is normalize(t, _DECR)
