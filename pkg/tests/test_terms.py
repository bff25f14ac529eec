"""Term algebra: interning, sizes, matching, parsing."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drt_verif.terms import (
    App,
    Name,
    ParseError,
    Signature,
    Tup,
    Var,
    app,
    apply_subst,
    is_ground,
    match_pattern,
    name_term,
    parse_term,
    print_term,
    subterms,
    tup,
    var_term,
    vars_of,
)


@pytest.fixture(scope="module")
def sig():
    s = Signature()
    s.declare("f", 1)
    s.declare("g", 2)
    s.declare("k", 0)
    s.declare("priv", 1, private=True)
    return s


def test_interning_gives_identity(sig):
    f = sig.lookup("f")
    a = name_term("a")
    t1 = app(f, (tup((a, name_term("b"))),))
    t2 = app(f, (tup((name_term("a"), name_term("b"))),))
    assert t1 is t2
    assert app(f, (a,)) is not app(f, (name_term("b"),))


def test_sizes(sig):
    f, g = sig.lookup("f"), sig.lookup("g")
    a, b = name_term("a"), name_term("b")
    assert a.size == 1
    assert var_term("x").size == 1
    assert app(f, (a,)).size == 2
    assert app(g, (a, b)).size == 3
    assert tup((a, b)).size == 3
    assert tup((a, b, a)).size == 4
    assert app(f, (tup((app(f, (a,)), b)),)).size == 5


def test_subterm_count_equals_size(sig):
    g = sig.lookup("g")
    t = app(g, (tup((name_term("a"), var_term("x"))),
                app(sig.lookup("f"), (name_term("b"),))))
    assert len(list(subterms(t))) == t.size


def test_arity_checked(sig):
    with pytest.raises(ValueError):
        app(sig.lookup("f"), (name_term("a"), name_term("b")))
    with pytest.raises(ValueError):
        tup(())


def test_vars_and_groundness(sig):
    f = sig.lookup("f")
    t = app(f, (tup((var_term("x"), name_term("a"))),))
    assert {v.ident for v in vars_of(t)} == {"x"}
    assert not is_ground(t)
    assert is_ground(app(f, (name_term("a"),)))


def test_print_forms(sig):
    g = sig.lookup("g")
    t = app(g, (tup((name_term("a"), var_term("x"))), name_term("b~2")))
    assert print_term(t) == "g((a,?x),b~2)"
    assert print_term(app(sig.lookup("k"), ())) == "k"
    assert print_term(name_term("@3")) == "@3"


def test_parse_round_trip_samples(sig):
    for text in ("a", "k", "?x", "f(a)", "g(a,b)", "(a,b)", "(a,b,c)",
                 "g((a,?x),f(k))", "f(n~12)", "priv(a)", "((a,b),c)"):
        t = parse_term(text, sig)
        assert print_term(t) == text


def test_parse_bare_name_vs_constant(sig):
    assert isinstance(parse_term("k", sig), App)
    assert isinstance(parse_term("zzz", sig), Name)
    assert isinstance(parse_term("?v", sig), Var)


def test_parse_resolve_hook(sig):
    bound = {"m": app(sig.lookup("f"), (name_term("a"),))}
    t = parse_term("g(m,b)", sig, resolve=bound.get)
    assert t.args[0] is bound["m"]


def test_parse_errors(sig):
    with pytest.raises(ParseError):
        parse_term("nosuch(a)", sig)
    with pytest.raises(ParseError):
        parse_term("f(a,b)", sig)
    with pytest.raises(ParseError):
        parse_term("f(a) trailing", sig)
    with pytest.raises(ParseError):
        parse_term("()", sig)
    with pytest.raises(ParseError):
        parse_term("f(", sig)
    with pytest.raises(ParseError):
        parse_term("?x", sig, allow_vars=False)
    err = None
    try:
        parse_term("g(a,\n  $)", sig)
    except ParseError as e:
        err = e
    assert err is not None and err.line == 2


def test_signature_overloading():
    s = Signature()
    s.declare("c", 1)
    s.declare("c", 2)
    assert s.lookup("c", 1).arity == 1
    assert s.lookup("c", 2).arity == 2
    with pytest.raises(ValueError):
        s.lookup("c")
    with pytest.raises(ValueError):
        s.declare("c", 1, private=True)
    assert s.declare("c", 1) is s.lookup("c", 1)


def test_match_linear(sig):
    g = sig.lookup("g")
    pat = app(g, (var_term("x"), var_term("y")))
    subj = app(g, (name_term("a"), name_term("b")))
    m = match_pattern(pat, subj)
    assert m == {var_term("x"): name_term("a"), var_term("y"): name_term("b")}


def test_match_nonlinear(sig):
    g = sig.lookup("g")
    pat = app(g, (var_term("x"), var_term("x")))
    assert match_pattern(pat, app(g, (name_term("a"), name_term("a")))) is not None
    assert match_pattern(pat, app(g, (name_term("a"), name_term("b")))) is None


def test_match_with_seed_bindings(sig):
    f = sig.lookup("f")
    pat = app(f, (var_term("x"),))
    pre = {var_term("x"): name_term("a")}
    assert match_pattern(pat, app(f, (name_term("a"),)), dict(pre)) is not None
    assert match_pattern(pat, app(f, (name_term("b"),)), dict(pre)) is None


def test_apply_subst(sig):
    g = sig.lookup("g")
    t = app(g, (var_term("x"), tup((var_term("x"), var_term("y")))))
    out = apply_subst(t, {var_term("x"): name_term("a"),
                          var_term("y"): name_term("b")})
    assert print_term(out) == "g(a,(a,b))"
    assert apply_subst(name_term("a"), {}) is name_term("a")


# random round-trip over a tiny signature

_RSIG = Signature()
_RSIG.declare("f", 1)
_RSIG.declare("g", 2)
_RSIG.declare("k", 0)

_leaves = st.sampled_from([name_term("a"), name_term("b~1"),
                           app(_RSIG.lookup("k"), ()), var_term("x"),
                           var_term("y2")])


def _extend(kids):
    return st.one_of(
        st.builds(lambda c: app(_RSIG.lookup("f"), (c,)), kids),
        st.builds(lambda c, d: app(_RSIG.lookup("g"), (c, d)), kids, kids),
        st.lists(kids, min_size=1, max_size=3).map(lambda xs: tup(tuple(xs))),
    )


rand_terms = st.recursive(_leaves, _extend, max_leaves=25)


@settings(max_examples=300, deadline=None)
@given(rand_terms)
def test_round_trip_random(t):
    text = print_term(t)
    back = parse_term(text, _RSIG)
    assert back is t


@settings(max_examples=200, deadline=None)
@given(rand_terms)
def test_size_counts_nodes(t):
    assert t.size == len(list(subterms(t)))
    assert t.size == 1 + sum(c.size for c in
                             (t.args if isinstance(t, App) else
                              t.items if isinstance(t, Tup) else ()))
