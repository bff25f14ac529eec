"""Process AST: construction, free variables, substitution, printing."""

import pytest

from drt_verif.process import (
    NIL,
    IfElse,
    In,
    Let,
    New,
    Out,
    Par,
    Repl,
    free_process_vars,
    pattern_binders,
    print_process,
    process_size,
    subst_process,
)
from drt_verif.terms import app, name_term, tup, var_term
from drt_verif.theory import build_theory

BUNDLE = build_theory()
OS = BUNDLE.constant("os")
PD = BUNDLE.constant("pd")
H = BUNDLE.sym("h", 1)


def test_nil_is_shared():
    assert Par(NIL, NIL).left is NIL


def test_pattern_binders_tuple():
    x, y = var_term("x"), var_term("y")
    pat = tup((x, app(H, (y,))))
    assert pattern_binders(In(OS, pat, NIL)) == {x, y}


def test_free_vars_closed_process():
    x = var_term("x")
    p = New(x, Out(OS, x, NIL))
    assert free_process_vars(p) == frozenset()


def test_free_vars_open_output():
    x = var_term("x")
    assert free_process_vars(Out(OS, x, NIL)) == frozenset((x,))


def test_input_binds_pattern_vars():
    x = var_term("x")
    p = In(OS, x, Out(OS, x, NIL))
    assert free_process_vars(p) == frozenset()


def test_eq_test_terms_can_refer_outward():
    # in(os, (=n, ?x)) desugars to a guard comparing a fresh var to n;
    # n must count as free when nothing binds it
    n, v, x = var_term("n"), var_term("eq_t0"), var_term("x")
    body = IfElse(v, n, NIL, NIL)
    p = In(OS, tup((v, x)), body, eq_tests=((v, n),))
    assert free_process_vars(p) == frozenset((n,))


def test_subst_replaces_free_only():
    x = var_term("x")
    p = Out(OS, x, New(x, Out(OS, x, NIL)))
    q = subst_process(p, {x: PD})
    assert q.payload is PD
    assert q.body.body.payload is x  # the rebound inner x is untouched


def test_subst_in_channel_and_tests():
    x, v = var_term("x"), var_term("eq_t0")
    p = In(x, tup((v,)), IfElse(v, x, NIL, NIL), eq_tests=((v, x),))
    q = subst_process(p, {x: OS})
    assert q.channel is OS
    assert q.eq_tests[0][1] is OS


def test_print_round_shape():
    x = var_term("x")
    p = New(x, Par(Out(OS, x, NIL), In(OS, x, NIL)))
    s = print_process(p)
    assert s.startswith("new x;")
    assert "out(os, ?x)" in s.replace("  ", "")


def test_print_resugars_eq_tests():
    v, x = var_term("eq_t0"), var_term("x")
    body = IfElse(v, PD, Out(OS, x, NIL), NIL)
    p = In(OS, tup((v, x)), body, eq_tests=((v, PD),))
    s = print_process(p)
    assert "(=pd, ?x)" in s
    assert "eq_t0" not in s


def test_print_if_without_else():
    p = IfElse(PD, PD, Out(OS, PD, NIL), NIL)
    s = print_process(p)
    assert "else" not in s


def test_process_size_counts_nodes():
    p = Par(NIL, Out(OS, PD, NIL))
    assert process_size(p) == process_size(NIL) + process_size(Out(OS, PD, NIL)) + 1


def test_repl_prints_bang():
    assert print_process(Repl(NIL)) == "!0"


def test_let_prints():
    x = var_term("x")
    s = print_process(Let(x, app(H, (PD,)), Out(OS, x, NIL)))
    assert s.startswith("let ?x = h(pd) in")
