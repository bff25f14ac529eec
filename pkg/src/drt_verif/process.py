"""Process algebra AST for protocol roles.

Eight node kinds: inert stop, parallel composition, replication, name
restriction, message input, message output, equality branch, and term
evaluation. Channels, payloads, and patterns are plain terms; pattern
variables bind in the continuation. Input patterns may carry equality
tests (surface syntax =t), stored as a var-to-term mapping so the
pretty-printer can reconstruct the source form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .terms import App, Name, Term, Tup, Var, apply_subst, print_term, vars_of


class Process:
    __slots__ = ()


@dataclass(frozen=True)
class Nil(Process):
    pass


@dataclass(frozen=True)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class Repl(Process):
    body: Process


@dataclass(frozen=True)
class New(Process):
    var: Var
    body: Process


@dataclass(frozen=True)
class In(Process):
    channel: Term
    pattern: Term
    body: Process
    eq_tests: tuple = field(default=())  # (Var, Term) pairs, source-order


@dataclass(frozen=True)
class Out(Process):
    channel: Term
    payload: Term
    body: Process


@dataclass(frozen=True)
class IfElse(Process):
    left: Term
    right: Term
    then_body: Process
    else_body: Process


@dataclass(frozen=True)
class Let(Process):
    pattern: Term
    rhs: Term
    body: Process


NIL = Nil()


def pattern_binders(p: Process) -> set[Var]:
    """Variables bound at this node (not in subprocesses)."""
    if isinstance(p, New):
        return {p.var}
    if isinstance(p, In):
        return vars_of(p.pattern)
    if isinstance(p, Let):
        return vars_of(p.pattern)
    return set()


def free_process_vars(p: Process, bound: frozenset = frozenset()) -> set[Var]:
    if isinstance(p, Nil):
        return set()
    if isinstance(p, Par):
        return free_process_vars(p.left, bound) | free_process_vars(p.right, bound)
    if isinstance(p, Repl):
        return free_process_vars(p.body, bound)
    if isinstance(p, New):
        return free_process_vars(p.body, bound | {p.var})
    if isinstance(p, In):
        out = vars_of(p.channel) - bound
        inner = bound | vars_of(p.pattern)
        for _, t in p.eq_tests:
            # a test may compare against a variable bound by this pattern
            out |= vars_of(t) - inner
        return out | free_process_vars(p.body, inner)
    if isinstance(p, Out):
        out = (vars_of(p.channel) | vars_of(p.payload)) - bound
        return out | free_process_vars(p.body, bound)
    if isinstance(p, IfElse):
        out = (vars_of(p.left) | vars_of(p.right)) - bound
        return (out | free_process_vars(p.then_body, bound)
                | free_process_vars(p.else_body, bound))
    if isinstance(p, Let):
        out = vars_of(p.rhs) - bound
        inner = bound | vars_of(p.pattern)
        return out | free_process_vars(p.body, inner)
    raise TypeError("not a process: %r" % (p,))


def subst_process(p: Process, sub: dict[Var, Term]) -> Process:
    """Capture-avoiding substitution of terms for free variables.

    Binders in this AST are always parser-fresh, so a binder shadowing a
    substituted variable is dropped from the substitution rather than
    renamed.
    """
    if not sub:
        return p
    if isinstance(p, Nil):
        return p
    if isinstance(p, Par):
        return Par(subst_process(p.left, sub), subst_process(p.right, sub))
    if isinstance(p, Repl):
        return Repl(subst_process(p.body, sub))
    if isinstance(p, New):
        inner = {v: t for v, t in sub.items() if v is not p.var}
        return New(p.var, subst_process(p.body, inner))
    if isinstance(p, In):
        binders = vars_of(p.pattern)
        inner = {v: t for v, t in sub.items() if v not in binders}
        tests = tuple((v, apply_subst(t, sub)) for v, t in p.eq_tests)
        return In(apply_subst(p.channel, sub), p.pattern,
                  subst_process(p.body, inner), tests)
    if isinstance(p, Out):
        return Out(apply_subst(p.channel, sub), apply_subst(p.payload, sub),
                   subst_process(p.body, sub))
    if isinstance(p, IfElse):
        return IfElse(apply_subst(p.left, sub), apply_subst(p.right, sub),
                      subst_process(p.then_body, sub),
                      subst_process(p.else_body, sub))
    if isinstance(p, Let):
        binders = vars_of(p.pattern)
        inner = {v: t for v, t in sub.items() if v not in binders}
        return Let(p.pattern, apply_subst(p.rhs, sub),
                   subst_process(p.body, inner))
    raise TypeError("not a process: %r" % (p,))


def process_size(p: Process) -> int:
    if isinstance(p, Nil):
        return 1
    if isinstance(p, Par):
        return 1 + process_size(p.left) + process_size(p.right)
    if isinstance(p, (Repl, New)):
        return 1 + process_size(p.body)
    if isinstance(p, (In, Out, Let)):
        return 1 + process_size(p.body)
    if isinstance(p, IfElse):
        return 1 + process_size(p.then_body) + process_size(p.else_body)
    raise TypeError("not a process: %r" % (p,))


def _print_pattern(pattern: Term, eq_tests: tuple) -> str:
    """Render an input pattern, re-sugaring equality-test variables."""
    tested = {v: t for v, t in eq_tests}

    def rec(t: Term) -> str:
        if isinstance(t, Var):
            if t in tested:
                return "=" + print_term(tested[t])
            return "?" + t.ident
        if isinstance(t, Tup):
            return "(" + ", ".join(rec(i) for i in t.items) + ")"
        if isinstance(t, App) and t.args:
            return t.sym.name + "(" + ", ".join(rec(a) for a in t.args) + ")"
        return print_term(t)

    return rec(pattern)


def _print_binding_pattern(pattern: Term) -> str:
    """Render a let pattern, where every variable is a binder."""

    def rec(t: Term) -> str:
        if isinstance(t, Var):
            return "?" + t.ident
        if isinstance(t, Tup):
            return "(" + ", ".join(rec(i) for i in t.items) + ")"
        if isinstance(t, App) and t.args:
            return t.sym.name + "(" + ", ".join(rec(a) for a in t.args) + ")"
        return print_term(t)

    return rec(pattern)


def print_process(p: Process, indent: str = "") -> str:
    """Multi-line rendering that parses back to an equal AST.

    A prefix continuation extends maximally to the right, so a prefix
    under parallel composition is parenthesized.
    """
    return _pp(p, indent)


def _pp(p: Process, ind: str) -> str:
    if isinstance(p, Nil):
        return ind + "0"
    if isinstance(p, Par):
        parts = []
        for q in _par_list(p):
            if isinstance(q, (Nil, Par, Repl)):
                parts.append(_pp(q, ind + "  "))
            else:
                parts.append(ind + "  (\n" + _pp(q, ind + "    ") + "\n"
                             + ind + "  )")
        return (ind + "(\n" + ("\n" + ind + "|\n").join(parts) + "\n"
                + ind + ")")
    if isinstance(p, Repl):
        body = p.body
        if isinstance(body, (Nil, Repl)):
            return ind + "!" + _pp(body, "").lstrip()
        return ind + "!(\n" + _pp(body, ind + "  ") + "\n" + ind + ")"
    if isinstance(p, New):
        return ind + "new " + p.var.ident + ";\n" + _pp(p.body, ind)
    if isinstance(p, In):
        head = (ind + "in(" + print_term(p.channel) + ", "
                + _print_pattern(p.pattern, p.eq_tests) + ")")
        body = p.body
        for _ in p.eq_tests:
            # the parser materializes each =t as an equality guard wrapped
            # around the continuation; printing re-sugars, so skip them
            body = body.then_body
        if isinstance(body, Nil):
            return head
        return head + ";\n" + _pp(body, ind)
    if isinstance(p, Out):
        head = (ind + "out(" + print_term(p.channel) + ", "
                + print_term(p.payload) + ")")
        if isinstance(p.body, Nil):
            return head
        return head + ";\n" + _pp(p.body, ind)
    if isinstance(p, IfElse):
        head = ind + "if " + print_term(p.left) + " = " + print_term(p.right)
        if isinstance(p.else_body, Nil):
            return head + " then\n" + _pp(p.then_body, ind + "  ")
        return (head + " then (\n" + _pp(p.then_body, ind + "  ") + "\n"
                + ind + ") else (\n" + _pp(p.else_body, ind + "  ") + "\n"
                + ind + ")")
    if isinstance(p, Let):
        return (ind + "let " + _print_binding_pattern(p.pattern) + " = "
                + print_term(p.rhs) + " in\n" + _pp(p.body, ind))
    raise TypeError("not a process: %r" % (p,))


def _par_list(p: Process) -> list[Process]:
    if isinstance(p, Par):
        return _par_list(p.left) + _par_list(p.right)
    return [p]
