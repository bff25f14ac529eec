"""Attacker deduction: recipes, saturation oracle, saturated-set lemma."""

import pytest

from drt_verif.deduction import (
    AnalysisIndex,
    BudgetError,
    DeductionBudget,
    KnowledgeSet,
    components,
    deducible,
    eval_recipe,
    is_saturated,
    lemma_saturation_check,
    saturate,
)
from drt_verif.terms import app, name_term, print_term, tup
from drt_verif.theory import ProgramRegistry, build_theory, chain_of, make_state

B = build_theory(bound=2)
REG = ProgramRegistry(B.sig)
N_INIT, PROG_INIT = REG.program_identity("Tinit")
N_PP, PROG_PP = REG.program_identity("Tpp")
N_STM, PROG_STM = REG.program_identity("Tstm")


def c(name):
    return B.constant(name)


def sym(name, arity=None):
    return B.sym(name, arity)


M_NAME, K_NAME = name_term("m"), name_term("k")
KPP, HIPP = name_term("k_pp"), name_term("hi_pp")
HCHAIN = chain_of(c("pd"),
                  tup((app(sym("h"), (PROG_INIT,)), app(sym("h"), (PROG_STM,)))),
                  app(sym("h"), (PROG_PP,)))


def test_knowledge_set_dedup_and_handles():
    m = KnowledgeSet([M_NAME, K_NAME, M_NAME])
    assert len(m) == 2
    assert m.handle_of(M_NAME) == 1
    assert m.handle_of(K_NAME) == 2
    assert m.handle_of(name_term("zz")) is None
    assert M_NAME in m
    m2 = m.extended([name_term("zz")])
    assert len(m2) == 3 and len(m) == 2


def test_budget_validation():
    with pytest.raises(ValueError):
        DeductionBudget(max_term_size=0)
    with pytest.raises(ValueError):
        DeductionBudget(max_depth=0)


def test_deducible_one_destructor():
    m = KnowledgeSet([app(sym("senc"), (M_NAME, K_NAME)), K_NAME])
    r = deducible(m, M_NAME, B)
    assert r is not None
    assert print_term(r) == "sdec(@1,@2)"
    assert eval_recipe(r, m, B) is M_NAME


def test_deducible_respects_private_unseal():
    m = KnowledgeSet([app(sym("seal"), (KPP, HCHAIN))])
    assert deducible(m, KPP, B) is None


def test_deducible_no_entry_from_identity():
    m = KnowledgeSet([PROG_INIT])
    assert deducible(m, N_INIT, B) is None


def test_deducible_synthesis_and_projection():
    m = KnowledgeSet([tup((M_NAME, K_NAME))])
    r = deducible(m, M_NAME, B)
    assert r is not None and print_term(r) == "proj1(@1)"
    r2 = deducible(m, app(sym("h"), (K_NAME,)), B)
    assert r2 is not None and print_term(r2) == "h(proj2(@1))"
    want = app(sym("senc"), (M_NAME, c("true")))
    r3 = deducible(m, want, B)
    assert r3 is not None and eval_recipe(r3, m, B) is want


def test_deducible_reads_state_components():
    secret = name_term("inner_secret")
    s = make_state(B, pcr=HCHAIN, int_flag=c("true"), cache_val=c("bot"),
                   init_val=PROG_INIT, pp_val=PROG_PP, lock=c("true"),
                   stm_val=PROG_STM, smi_val=secret)
    m = KnowledgeSet([s])
    r = deducible(m, HCHAIN, B)
    assert r is not None and print_term(r) == "pcr(@1)"
    assert deducible(m, secret, B) is not None
    assert deducible(m, N_PP, B) is None


def test_recipes_never_contain_private_symbols():
    s = make_state(B, pcr=c("pd"), int_flag=c("true"), cache_val=c("bot"),
                   init_val=PROG_INIT, pp_val=PROG_PP, lock=c("false"),
                   stm_val=PROG_STM, smi_val=c("bot"))
    m = KnowledgeSet([s, app(sym("senc"), (M_NAME, K_NAME)), K_NAME])
    index = AnalysisIndex(m, B)
    from drt_verif.deduction import recipe_is_public
    for t in index.terms():
        assert recipe_is_public(index.recipe_for(t)), t


def test_index_excludes_attacker_written_states():
    s = make_state(B, pcr=c("pd"), int_flag=c("true"), cache_val=c("bot"),
                   init_val=c("bot"), pp_val=c("bot"), lock=c("false"),
                   stm_val=c("bot"), smi_val=c("bot"))
    m = KnowledgeSet([s])
    index = AnalysisIndex(m, B)
    for t in index.terms():
        assert not (t is not s and getattr(t, "sym", None) is s.sym)


def test_eval_recipe_errors():
    m = KnowledgeSet([M_NAME])
    with pytest.raises(ValueError):
        eval_recipe(name_term("@2"), m, B)
    from drt_verif.deduction import proj_sym
    with pytest.raises(ValueError):
        eval_recipe(app(proj_sym(1), (name_term("@1"),)), m, B)


def test_saturate_contains_closure_samples():
    m = KnowledgeSet([M_NAME, K_NAME])
    consts = [s_ for s_ in B.sig.symbols() if s_.arity == 0 and s_.public]
    out = saturate(m, B, 5, max_tuple_arity=2,
                   symbols=[sym("senc"), sym("sdec"), sym("h")] + consts)
    senc, sdec, h = sym("senc"), sym("sdec"), sym("h")
    assert app(senc, (M_NAME, K_NAME)) in out
    assert app(h, (M_NAME,)) in out
    assert tup((M_NAME, K_NAME)) in out
    assert app(sdec, (M_NAME, K_NAME)) in out
    for name in ("os", "pd", "ps", "true", "false", "bot", "reset_req",
                 "tag_plain"):
        assert c(name) in out


def test_saturate_empty_has_constants():
    out = saturate(KnowledgeSet(), B, 2)
    for s_ in B.sig.symbols():
        if s_.arity == 0 and s_.public:
            assert app(s_, ()) in out


def test_saturate_secrecy_kernel():
    m = KnowledgeSet([app(sym("seal"), (KPP, HCHAIN)),
                      app(sym("senc"), (HIPP, KPP))])
    out = saturate(m, B, 8, symbols=[sym("senc"), sym("sdec"), sym("seal"),
                                     sym("h"), sym("prog")])
    assert KPP not in out
    assert HIPP not in out


def test_saturate_entry_stays_hidden():
    n = name_term("n_fresh")
    prog_n = app(sym("prog"), (n,))
    out = saturate(KnowledgeSet([prog_n]), B, 12,
                   symbols=[sym("prog"), sym("h"), sym("senc"), sym("sdec")])
    assert n not in out


def test_saturate_ceiling():
    m = KnowledgeSet([M_NAME, K_NAME])
    with pytest.raises(BudgetError):
        saturate(m, B, 6, ceiling=40)


def test_saturate_monotone():
    m1 = KnowledgeSet([M_NAME])
    m2 = KnowledgeSet([M_NAME, K_NAME])
    s1 = saturate(m1, B, 4, symbols=[sym("senc"), sym("h")])
    s2 = saturate(m2, B, 4, symbols=[sym("senc"), sym("h")])
    assert {t.tid for t in s1} <= {t.tid for t in s2}


def _universe(names, size):
    """Every term over senc/sdec/h and the given names, up to size."""
    by_size = {1: list(names)}
    for n in range(2, size + 1):
        row = []
        for t in by_size.get(n - 1, ()):
            row.append(app(sym("h"), (t,)))
        for i in range(1, n - 1):
            j = n - 1 - i
            for a in by_size.get(i, ()):
                for b_ in by_size.get(j, ()):
                    row.append(app(sym("senc"), (a, b_)))
                    row.append(app(sym("sdec"), (a, b_)))
        by_size[n] = row
    return [t for row in by_size.values() for t in row]


def test_deducible_agrees_with_saturate_exhaustively():
    a, b_ = name_term("ua"), name_term("ub")
    m = KnowledgeSet([app(sym("senc"), (b_, a)), a])
    restricted = [sym("senc"), sym("sdec"), sym("h")]
    oracle = saturate(m, B, 5, symbols=restricted)
    budget = DeductionBudget(max_term_size=5, max_depth=6)
    index = AnalysisIndex(m, B, depth=6)
    for t in _universe((a, b_), 5):
        nf = B.normalize(t)
        got = deducible(m, nf, B, budget, index=index) is not None
        want = nf in oracle
        assert got == want, print_term(t)


def test_components_order_and_domain():
    s = make_state(B, pcr=c("pd"), int_flag=c("true"), cache_val=c("bot"),
                   init_val=c("bot"), pp_val=c("bot"), lock=c("false"),
                   stm_val=name_term("s1"), smi_val=name_term("s2"))
    leaves = components(s)
    assert [print_term(t) for t in leaves] == [
        "pd", "true", "bot", "bot", "bot", "false", "s1", "s2"]
    with pytest.raises(ValueError):
        components(c("pd"))


def test_is_saturated():
    a, b_ = name_term("sa"), name_term("sb")
    m1 = KnowledgeSet([a, b_])
    good = make_state(B, pcr=a, int_flag=b_, cache_val=b_, init_val=b_,
                      pp_val=b_, lock=a, stm_val=a, smi_val=b_)
    assert is_saturated(m1, [good], B)
    fresh = name_term("hidden")
    bad = make_state(B, pcr=a, int_flag=b_, cache_val=fresh, init_val=b_,
                     pp_val=b_, lock=a, stm_val=a, smi_val=b_)
    assert not is_saturated(m1, [bad], B)
    derived = make_state(B, pcr=app(sym("h"), (a,)), int_flag=c("true"),
                         cache_val=tup((a, b_)), init_val=b_, pp_val=b_,
                         lock=a, stm_val=a, smi_val=b_)
    assert is_saturated(m1, [derived], B)


def _lemma_symbols():
    from drt_verif.deduction import closure_symbols
    return closure_symbols(B, constants=False, reads=True)


def test_lemma_check_spec_instance():
    a, b_ = name_term("la"), name_term("lb")
    m1 = KnowledgeSet([a, b_])
    m2 = [make_state(B, pcr=a, int_flag=b_, cache_val=b_, init_val=b_,
                     pp_val=b_, lock=a, stm_val=a, smi_val=b_)]
    assert is_saturated(m1, m2, B)
    assert lemma_saturation_check(m1, m2, B, 7, symbols=_lemma_symbols(),
                                  inert_stuck=True)
    assert lemma_saturation_check(m1, [], B, 7, symbols=_lemma_symbols(),
                                  inert_stuck=True)


def test_lemma_check_fails_on_unsaturated():
    a = name_term("xa")
    hidden = name_term("xh")
    m1 = KnowledgeSet([a])
    m2 = [make_state(B, pcr=hidden, int_flag=a, cache_val=a, init_val=a,
                     pp_val=a, lock=a, stm_val=a, smi_val=a)]
    assert not is_saturated(m1, m2, B)
    assert not lemma_saturation_check(m1, m2, B, 7, symbols=_lemma_symbols(),
                                      inert_stuck=True)
