"""The DRT model corpus: platform processes over the launch theory.

Three variants of one model ship as .drt source: the exact platform,
a platform whose measurement register only chains up to a fixed
length, and a weakened platform whose STM flush ignores the launch
lock. Each is parsed onto the shared theory signature and the parsed
rewrite rules are cross-checked against the rules built in code, so
the text and the code cannot drift apart silently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .dsl import parse_model
from .process import IfElse, In, Let, New, Out, Par, Process, Repl
from . import semantics
from .semantics import Configuration
from .terms import App, Term, Var, app, tup
from .theory import (PUBLIC_CONSTANTS, ProgramRegistry, TheoryBundle,
                     build_theory, chain_of)

TRUSTED_PROGRAMS = ("Tinit", "Tpp", "Tstm")

VARIANT_FILES = {
    "exact": "drt_exact.drt",
    "bounded": "drt_bounded.drt",
    "weak-stm": "drt_weak_stm.drt",
}

# regions present only when cache-mediated SMRAM writes are modeled
_CACHE_BLOCK = re.compile(r"[ \t]*\(\*@cache@\*\).*?\(\*@end cache@\*\)", re.S)
_BOUND_MARK = "(*@bound rules@*)"


@dataclass(frozen=True)
class ModelBundle:
    """One parsed model variant; treat every field as read-only."""

    theory: TheoryBundle
    registry: ProgramRegistry
    processes: dict[str, Process]
    variant: str  # "exact" | "bounded" | "weak-stm"
    bound: int | None
    main: Process
    include_cache: bool
    fresh_nonces: bool

    def label(self) -> str:
        if self.variant == "bounded":
            return "bounded(%d)" % self.bound
        return self.variant


def _bound_rule_lines(b: int) -> list[str]:
    """Length-test rules for bound b, rendered as .drt source."""
    lines = []
    for i in range(b):
        for root in ("pd", "ps"):
            acc = root
            for j in range(1, i + 1):
                acc = "h((%s,?v%d))" % (acc, j)
            lines.append("reduc is_small(%s) = true." % acc)
    acc = "?v0"
    for j in range(1, b + 2):
        acc = "h((%s,?v%d))" % (acc, j)
    lines.append("reduc is_big(%s) = true." % acc)
    return lines


def model_source(variant: str = "exact", b: int = 2,
                 include_cache: bool = True) -> str:
    """The .drt text for a variant, with bound rules and cache regions
    resolved. This is exactly what build_drt_model parses."""
    if variant not in VARIANT_FILES:
        raise ValueError("unknown model variant %r (one of %s)"
                         % (variant, ", ".join(sorted(VARIANT_FILES))))
    path = resources.files("drt_verif").joinpath("models", VARIANT_FILES[variant])
    text = path.read_text()
    if variant == "bounded":
        if b < 2:
            raise ValueError("register bound must be at least 2; soundness "
                             "of the bounded register is only established "
                             "from there up")
        text = text.replace(_BOUND_MARK, "\n".join(_bound_rule_lines(b)))
    if not include_cache:
        text = _CACHE_BLOCK.sub("", text)
    return text


def _extract_tpm_bodies(proclets: dict[str, Process]) -> dict[str, Process]:
    """The reset, extend, and unseal loop bodies, pulled out of the TPM
    role processes. These are open (their channel is bound outside)."""
    tpm_reset = proclets["TPM_RESET"]
    if not (isinstance(tpm_reset, Par) and isinstance(tpm_reset.left, Let)
            and isinstance(tpm_reset.left.body, Repl)):
        raise RuntimeError("unexpected TPM_RESET shape in model source")
    pcr_reset = tpm_reset.left.body.body

    tpm_extend = proclets["TPM_EXTEND"]
    if not (isinstance(tpm_extend, Par) and isinstance(tpm_extend.left, Par)
            and isinstance(tpm_extend.left.left, Let)
            and isinstance(tpm_extend.left.left.body, Repl)):
        raise RuntimeError("unexpected TPM_EXTEND shape in model source")
    pcr_extend = tpm_extend.left.left.body.body

    tpm_unseal = proclets["TPM_UNSEAL"]
    if not (isinstance(tpm_unseal, In) and isinstance(tpm_unseal.body, IfElse)
            and isinstance(tpm_unseal.body.then_body, Let)):
        raise RuntimeError("unexpected TPM_UNSEAL shape in model source")
    unseal = tpm_unseal.body.then_body.body

    return {"PCR_RESET": pcr_reset, "PCR_EXTEND": pcr_extend, "UNSEAL": unseal}


def _fresh_nonces(p: Process, fnonce_sym) -> Process:
    """Replace let x = fnonce(_) bindings with fresh-name restrictions."""
    if isinstance(p, Par):
        return Par(_fresh_nonces(p.left, fnonce_sym),
                   _fresh_nonces(p.right, fnonce_sym))
    if isinstance(p, Repl):
        return Repl(_fresh_nonces(p.body, fnonce_sym))
    if isinstance(p, New):
        return New(p.var, _fresh_nonces(p.body, fnonce_sym))
    if isinstance(p, In):
        return In(p.channel, p.pattern, _fresh_nonces(p.body, fnonce_sym),
                  p.eq_tests)
    if isinstance(p, Out):
        return Out(p.channel, p.payload, _fresh_nonces(p.body, fnonce_sym))
    if isinstance(p, IfElse):
        return IfElse(p.left, p.right, _fresh_nonces(p.then_body, fnonce_sym),
                      _fresh_nonces(p.else_body, fnonce_sym))
    if isinstance(p, Let):
        body = _fresh_nonces(p.body, fnonce_sym)
        if (isinstance(p.pattern, Var) and isinstance(p.rhs, App)
                and p.rhs.sym is fnonce_sym):
            return New(p.pattern, body)
        return Let(p.pattern, p.rhs, body)
    return p


def _check_fidelity(parsed_rules, theory: TheoryBundle, variant: str):
    got = {(r.lhs, r.rhs) for r in parsed_rules}
    want = {(r.lhs, r.rhs) for r in theory.rules.rules}
    if got != want:
        raise RuntimeError("parsed %s model rules diverge from the built "
                           "theory (%d parsed vs %d built, %d shared)"
                           % (variant, len(got), len(want), len(got & want)))


def build_drt_model(variant: str = "exact", b: int = 2,
                    include_cache: bool = True,
                    fresh_nonces: bool = False) -> ModelBundle:
    """Parse one model variant into a ready-to-explore bundle.

    include_cache controls whether the cache-write helper rules and the
    CACHE role are present (default on). fresh_nonces swaps the
    deterministic fnonce bindings for fresh-name restrictions.
    """
    text = model_source(variant, b=b, include_cache=include_cache)
    theory = build_theory(bound=b if variant == "bounded" else None,
                          weakened_stm=variant == "weak-stm",
                          cache_helpers=include_cache)
    registry = ProgramRegistry(theory.sig)
    for name in TRUSTED_PROGRAMS:
        registry.program_identity(name)
    theory.sig.declare("k_pp", 0, private=True)
    theory.sig.declare("hi_pp", 0, private=True)
    mf = parse_model(text, theory.sig)
    _check_fidelity(mf.bundle.rules.rules, theory, variant)
    processes = dict(mf.proclets)
    processes.update(_extract_tpm_bodies(mf.proclets))
    main = mf.main
    if fresh_nonces:
        fn = theory.sym("fnonce", 1)
        main = _fresh_nonces(main, fn)
        processes = {name: _fresh_nonces(p, fn) for name, p in processes.items()}
    return ModelBundle(theory=theory, registry=registry, processes=processes,
                       variant=variant,
                       bound=b if variant == "bounded" else None,
                       main=main, include_cache=include_cache,
                       fresh_nonces=fresh_nonces)


def transform_bounded(m: ModelBundle, b: int) -> ModelBundle:
    """The exact model with its register bounded at length b."""
    if m.variant != "exact":
        raise ValueError("bounding starts from the exact model, got %s"
                         % m.label())
    if b < 2:
        raise ValueError("register bound must be at least 2; soundness "
                         "of the bounded register is only established "
                         "from there up")
    return build_drt_model("bounded", b=b, include_cache=m.include_cache,
                           fresh_nonces=m.fresh_nonces)


def weaken_stm(m: ModelBundle) -> ModelBundle:
    """The exact model plus the lock-blind STM flush rule. Processes
    are unchanged; only the extra rewrite rule differs."""
    if m.variant == "weak-stm":
        return m
    if m.variant != "exact":
        raise ValueError("the STM weakening applies to the exact model, "
                         "got %s" % m.label())
    return build_drt_model("weak-stm", include_cache=m.include_cache,
                           fresh_nonces=m.fresh_nonces)


def initial_configuration(m: ModelBundle) -> Configuration:
    """The whole model running against an attacker who starts out
    knowing every public constant and nothing else."""
    knowledge = [m.theory.constant(name) for name in PUBLIC_CONSTANTS]
    return semantics.initial_configuration(m.main, m.theory, knowledge=knowledge)


def expected_measurement_chain(m: ModelBundle) -> Term:
    """The register value a correct launch of the trusted programs
    produces: the dynamic root extended with the loader and STM
    measurements, then with the protected program's measurement."""
    _, id_init = m.registry.program_identity("Tinit")
    _, id_pp = m.registry.program_identity("Tpp")
    _, id_stm = m.registry.program_identity("Tstm")
    h = m.theory.sym("h", 1)
    return chain_of(m.theory.constant("pd"),
                    tup((app(h, (id_init,)), app(h, (id_stm,)))),
                    app(h, (id_pp,)))


def sealed_secret(m: ModelBundle) -> Term:
    """The key DATA seals against the expected measurement chain."""
    return m.theory.constant("k_pp")


def private_message(m: ModelBundle) -> Term:
    """The payload encrypted under the sealed key."""
    return m.theory.constant("hi_pp")
