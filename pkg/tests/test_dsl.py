"""Model language: parsing, desugaring, errors, and print round-trips."""

import pytest

from drt_verif.dsl import ModelError, parse_model, parse_process, render_model_source
from drt_verif.process import IfElse, In, Out, print_process
from drt_verif.theory import build_theory

SMALL_MODEL = """
fun h/1.
fun senc/2.
fun sdec/2.
fun c/0.
private fun k0/0.
reduc sdec(senc(?m, ?k), ?k) = ?m.

let reader = in(c, (?x, =h(k0))); out(c, x).

process
  new n;
  ( out(c, senc(n, k0)) | reader )
"""


def test_parse_model_builds_theory_and_main():
    mf = parse_model(SMALL_MODEL)
    assert mf.bundle.sig.lookup("senc", 2) is not None
    assert mf.bundle.sig.lookup("k0", 0).private
    assert len(mf.bundle.rules.rules) == 1
    assert "reader" in mf.proclets
    assert print_process(mf.main).startswith("new n;")


def test_rewriting_works_on_parsed_theory():
    mf = parse_model(SMALL_MODEL)
    b = mf.bundle
    senc, sdec, k0 = b.sym("senc", 2), b.sym("sdec", 2), b.constant("k0")
    from drt_verif.terms import app
    ct = app(senc, (b.constant("c"), k0))
    assert b.normalize(app(sdec, (ct, k0))) is b.constant("c")


def test_eq_test_desugars_to_guard():
    mf = parse_model(SMALL_MODEL)
    reader = mf.proclets["reader"]
    assert isinstance(reader, In)
    assert len(reader.eq_tests) == 1
    guard = reader.body
    assert isinstance(guard, IfElse)
    v, t = reader.eq_tests[0]
    assert guard.left is v and guard.right is t
    assert isinstance(guard.then_body, Out)


def test_round_trip_print_parse_print():
    mf = parse_model(SMALL_MODEL)
    text = print_process(mf.main)
    again = parse_process(text, mf.bundle)
    assert print_process(again) == text


def test_unknown_symbol_rejected():
    with pytest.raises(ModelError, match="unknown symbol"):
        parse_process("out(c, mystery(c))", parse_model(SMALL_MODEL).bundle)


def test_arity_mismatch_rejected():
    with pytest.raises(ModelError, match="does not take"):
        parse_process("out(c, h(c, c))", parse_model(SMALL_MODEL).bundle)


def test_unbound_var_reference_rejected():
    with pytest.raises(ModelError, match="not bound"):
        parse_process("out(c, ?ghost)", parse_model(SMALL_MODEL).bundle)


def test_shadowing_rejected():
    src = "in(c, ?x); in(c, ?x)"
    with pytest.raises(ModelError):
        parse_process(src, parse_model(SMALL_MODEL).bundle)


def test_reserved_binder_rejected():
    with pytest.raises(ModelError):
        parse_process("in(c, ?eq_t1)", parse_model(SMALL_MODEL).bundle)


def test_duplicate_binder_in_pattern_rejected():
    with pytest.raises(ModelError, match="twice"):
        parse_process("in(c, (?x, ?x))", parse_model(SMALL_MODEL).bundle)


def test_bare_bound_name_in_pattern_needs_eq():
    src = "in(c, ?x); in(c, x)"
    with pytest.raises(ModelError, match="use =x"):
        parse_process(src, parse_model(SMALL_MODEL).bundle)


def test_error_carries_position():
    try:
        parse_model("fun h/1.\nfun h/1.\nprocess 0")
    except ModelError as e:
        assert e.line == 2
    else:
        pytest.fail("redefinition accepted")


def test_same_name_different_arity_coexist():
    mf = parse_model("fun cache/1.\nfun cache/2.\nprocess 0")
    assert mf.bundle.sig.lookup("cache", 1) is not None
    assert mf.bundle.sig.lookup("cache", 2) is not None
    assert ("cache", 1, False) in mf.declarations
    assert ("cache", 2, False) in mf.declarations


def test_parse_onto_existing_signature():
    theory = build_theory()
    src = "fun h/1.\nfun os/0.\nreduc sdec(senc(?x_val, ?x_key), ?x_key) = ?x_val.\nprocess out(os, h(os))"
    mf = parse_model(src, theory.sig)
    assert mf.bundle.sym("h", 1) is theory.sym("h", 1)
    rule = mf.bundle.rules.rules[0]
    built = next(r for r in theory.rules.rules if r.label == "sdec_senc")
    assert rule.lhs is built.lhs and rule.rhs is built.rhs


def test_parse_onto_signature_privacy_mismatch():
    theory = build_theory()
    with pytest.raises(ModelError, match="tpm_acc"):
        parse_model("fun tpm_acc/0.\nprocess 0", theory.sig)


def test_render_round_trip():
    mf = parse_model(SMALL_MODEL)
    src = render_model_source(mf)
    again = parse_model(src, mf.bundle.sig)
    assert again.declarations == mf.declarations
    assert [(r.lhs, r.rhs) for r in again.bundle.rules.rules] == \
        [(r.lhs, r.rhs) for r in mf.bundle.rules.rules]
    assert print_process(again.main) == print_process(mf.main)
    assert set(again.proclets) == set(mf.proclets)


def test_rhs_var_not_on_lhs_rejected():
    bad = "fun f/1.\nreduc f(?x) = ?y.\nprocess 0"
    with pytest.raises(ModelError):
        parse_model(bad)


def test_free_name_in_main_rejected():
    bad = "fun c/0.\nprocess out(c, ?loose)"
    with pytest.raises(ModelError):
        parse_model(bad)


def test_nested_comments_skipped():
    src = "(* outer (* inner *) still out *) fun c/0.\nprocess out(c, c)"
    mf = parse_model(src)
    assert isinstance(mf.main, Out)


def test_bang_and_grouping():
    mf = parse_model("fun c/0.\nprocess !( out(c, c) | 0 )")
    s = print_process(mf.main)
    assert s.startswith("!(")
