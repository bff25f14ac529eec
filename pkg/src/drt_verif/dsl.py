"""Parser for the .drt model format.

A model file is a sequence of declarations followed by a main process:

    fun senc/2.                   (* public constructor *)
    private fun unseal/2.         (* attacker may not apply it *)
    fun os/0.                     (* constant *)
    reduc sdec(senc(?v, ?k), ?k) = ?v.
    let ROLE = in(os, (?x, =os)); out(os, x).
    process ROLE | !ROLE

Processes: 0, P | Q, !P, new n; P, in(ch, pat); P, out(ch, t); P,
if u = v then P else Q, let pat = t in P, and references to earlier
let-bound process names. A prefix continuation extends as far right as
possible, so `new k; P | Q` restricts k over the whole composition;
parenthesize to stop it. Input patterns bind with ?x and test with =t;
each =t becomes a fresh variable guarded by an equality branch around
the continuation. Comments are (* ... *) and nest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .process import (NIL, IfElse, In, Let, New, Out, Par, Process, Repl,
                      free_process_vars, print_process)
from .rewriting import Rule, RewriteSystem
from .terms import App, Signature, Term, Var, app, print_term, tup, var_term
from .theory import TheoryBundle

# identifiers minted for desugared equality tests; user code may not bind them
_RESERVED = re.compile(r"eq_t[0-9]+$")

KEYWORDS = frozenset((
    "fun", "private", "reduc", "let", "process",
    "new", "in", "out", "if", "then", "else",
))

PUNCT = "(),;=!|/.?"


class ModelError(Exception):
    """Parse or resolution failure, carrying a source position."""

    def __init__(self, msg: str, line: int, col: int):
        super().__init__("%d:%d: %s" % (line, col, msg))
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "keyword", "num", one of PUNCT, or "eof"
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[Token]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "(" and src.startswith("(*", i):
            depth, l0, c0 = 1, line, col
            i += 2
            col += 2
            while i < n and depth:
                if src.startswith("(*", i):
                    depth += 1
                    i += 2
                    col += 2
                elif src.startswith("*)", i):
                    depth -= 1
                    i += 2
                    col += 2
                elif src[i] == "\n":
                    i += 1
                    line += 1
                    col = 1
                else:
                    i += 1
                    col += 1
            if depth:
                raise ModelError("unterminated comment", l0, c0)
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            kind = "keyword" if word in KEYWORDS else "ident"
            toks.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("num", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c in PUNCT:
            toks.append(Token(c, c, line, col))
            i += 1
            col += 1
            continue
        raise ModelError("unexpected character %r" % c, line, col)
    toks.append(Token("eof", "", line, col))
    return toks


@dataclass
class ModelFile:
    bundle: TheoryBundle
    proclets: dict
    main: Process
    declarations: list = field(default_factory=list)  # (name, arity, private)


class _Parser:
    def __init__(self, toks: list[Token], sig: Signature):
        self.toks = toks
        self.pos = 0
        self.sig = sig
        self.rules: list[Rule] = []
        self.proclets: dict[str, Process] = {}
        self.declarations: list[tuple[str, int, bool]] = []
        self._eq_count = 0
        self._rule_count = {}

    # token plumbing

    def peek(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            want = text or kind
            raise ModelError("expected %r, found %r" % (want, t.text or t.kind),
                             t.line, t.col)
        return self.advance()

    def fail(self, msg: str):
        t = self.peek()
        raise ModelError(msg, t.line, t.col)

    # declarations

    def parse_model(self) -> ModelFile:
        while not self.at("keyword", "process"):
            if self.at("keyword", "fun") or self.at("keyword", "private"):
                self._fun_decl()
            elif self.at("keyword", "reduc"):
                self._reduc_decl()
            elif self.at("keyword", "let"):
                self._proclet()
            elif self.at("eof"):
                self.fail("missing main process")
            else:
                self.fail("expected a declaration or 'process'")
        self.expect("keyword", "process")
        main = self._process({})
        self.expect("eof")
        self._check_closed(main, "main process")
        bundle = TheoryBundle(self.sig, RewriteSystem(self.rules),
                              bound=None, weakened_stm=False,
                              cache_helpers=False)
        return ModelFile(bundle, self.proclets, main, self.declarations)

    def _fun_decl(self):
        private = False
        if self.at("keyword", "private"):
            self.advance()
            private = True
        self.expect("keyword", "fun")
        name_tok = self.expect("ident")
        self.expect("/")
        arity_tok = self.expect("num")
        self.expect(".")
        name, arity = name_tok.text, int(arity_tok.text)
        if any(d[0] == name and d[1] == arity for d in self.declarations):
            raise ModelError("function %s/%d is already declared" % (name, arity),
                             name_tok.line, name_tok.col)
        # declaring onto a pre-populated signature is fine as long as the
        # arity and privacy agree; declare() raises on a mismatch
        try:
            self.sig.declare(name, arity, private=private)
        except ValueError as e:
            raise ModelError(str(e), name_tok.line, name_tok.col) from None
        self.declarations.append((name, arity, private))

    def _reduc_decl(self):
        self.expect("keyword", "reduc")
        rule_vars: dict[str, Var] = {}
        lhs_tok = self.peek()
        lhs = self._term({}, rule_vars=rule_vars)
        self.expect("=")
        rhs = self._term({}, rule_vars=rule_vars)
        self.expect(".")
        if not isinstance(lhs, App):
            raise ModelError("rewrite left side must be a function application",
                             lhs_tok.line, lhs_tok.col)
        head = lhs.sym.name
        k = self._rule_count.get(head, 0) + 1
        self._rule_count[head] = k
        label = head if k == 1 else "%s_%d" % (head, k)
        try:
            self.rules.append(Rule(label, lhs, rhs))
        except ValueError as e:
            raise ModelError(str(e), lhs_tok.line, lhs_tok.col) from None

    def _proclet(self):
        self.expect("keyword", "let")
        name_tok = self.expect("ident")
        name = name_tok.text
        if name in self.proclets:
            raise ModelError("process %s already defined" % name,
                             name_tok.line, name_tok.col)
        if name in self.sig:
            raise ModelError("%s is a function symbol" % name,
                             name_tok.line, name_tok.col)
        self.expect("=")
        body = self._process({})
        self.expect(".")
        self._check_closed(body, "process %s" % name)
        self.proclets[name] = body

    def _check_closed(self, p: Process, what: str):
        free = free_process_vars(p)
        if free:
            names = ", ".join(sorted(v.ident for v in free))
            t = self.peek()
            raise ModelError("%s has free variables: %s" % (what, names),
                             t.line, t.col)

    # processes

    def _process(self, scope: dict[str, Var]) -> Process:
        p = self._prefix(scope)
        while self.at("|"):
            self.advance()
            p = Par(p, self._prefix(scope))
        return p

    def _prefix(self, scope: dict[str, Var]) -> Process:
        t = self.peek()
        if t.kind == "num" and t.text == "0":
            self.advance()
            return NIL
        if t.kind == "!":
            self.advance()
            return Repl(self._prefix(scope))
        if t.kind == "(":
            self.advance()
            p = self._process(scope)
            self.expect(")")
            return p
        if t.kind == "keyword":
            if t.text == "new":
                return self._new(scope)
            if t.text == "in":
                return self._input(scope)
            if t.text == "out":
                return self._output(scope)
            if t.text == "if":
                return self._branch(scope)
            if t.text == "let":
                return self._eval(scope)
        if t.kind == "ident":
            self.advance()
            body = self.proclets.get(t.text)
            if body is None:
                raise ModelError("unknown process name %s" % t.text, t.line, t.col)
            return body
        self.fail("expected a process")

    def _bind(self, scope: dict[str, Var], tok: Token) -> Var:
        ident = tok.text
        if ident in scope:
            raise ModelError("%s is already bound here" % ident, tok.line, tok.col)
        if ident in self.sig:
            raise ModelError("%s is a function symbol" % ident, tok.line, tok.col)
        if _RESERVED.match(ident):
            raise ModelError("%s is a reserved name" % ident, tok.line, tok.col)
        return var_term(ident)

    def _new(self, scope: dict[str, Var]) -> Process:
        self.expect("keyword", "new")
        tok = self.expect("ident")
        v = self._bind(scope, tok)
        self.expect(";")
        inner = dict(scope)
        inner[tok.text] = v
        return New(v, self._process(inner))

    def _input(self, scope: dict[str, Var]) -> Process:
        self.expect("keyword", "in")
        self.expect("(")
        channel = self._term(scope)
        self.expect(",")
        binders: dict[str, Var] = {}
        eq_tests: list = []
        pattern = self._pattern(scope, binders, eq_tests)
        self.expect(")")
        inner = dict(scope)
        inner.update(binders)
        if self.at(";"):
            self.advance()
            body = self._process(inner)
        else:
            body = NIL
        for v, term in reversed(eq_tests):
            body = IfElse(v, term, body, NIL)
        return In(channel, pattern, body, tuple(eq_tests))

    def _output(self, scope: dict[str, Var]) -> Process:
        self.expect("keyword", "out")
        self.expect("(")
        channel = self._term(scope)
        self.expect(",")
        payload = self._term(scope)
        self.expect(")")
        if self.at(";"):
            self.advance()
            body = self._process(scope)
        else:
            body = NIL
        return Out(channel, payload, body)

    def _branch(self, scope: dict[str, Var]) -> Process:
        self.expect("keyword", "if")
        left = self._term(scope)
        self.expect("=")
        right = self._term(scope)
        self.expect("keyword", "then")
        then_body = self._process(scope)
        if self.at("keyword", "else"):
            self.advance()
            else_body = self._process(scope)
        else:
            else_body = NIL
        return IfElse(left, right, then_body, else_body)

    def _eval(self, scope: dict[str, Var]) -> Process:
        self.expect("keyword", "let")
        binders: dict[str, Var] = {}
        pattern = self._pattern(scope, binders, eq_tests=None)
        self.expect("=")
        rhs = self._term(scope)
        self.expect("keyword", "in")
        inner = dict(scope)
        inner.update(binders)
        return Let(pattern, rhs, self._process(inner))

    # terms and patterns

    def _term(self, scope: dict[str, Var],
              rule_vars: dict[str, Var] | None = None) -> Term:
        t = self.peek()
        if t.kind == "?":
            self.advance()
            tok = self.expect("ident")
            if rule_vars is not None:
                v = rule_vars.get(tok.text)
                if v is None:
                    v = var_term(tok.text)
                    rule_vars[tok.text] = v
                return v
            # in process bodies ?x is an alternate spelling of a bound
            # variable reference, which is what the pretty-printer emits
            v = scope.get(tok.text)
            if v is None:
                raise ModelError("?%s is not bound here" % tok.text,
                                 tok.line, tok.col)
            return v
        if t.kind == "(":
            self.advance()
            items = [self._term(scope, rule_vars)]
            while self.at(","):
                self.advance()
                items.append(self._term(scope, rule_vars))
            self.expect(")")
            return tup(items)
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                self.advance()
                args = [self._term(scope, rule_vars)]
                while self.at(","):
                    self.advance()
                    args.append(self._term(scope, rule_vars))
                self.expect(")")
                sym = self.sig.lookup(t.text, len(args))
                if sym is None:
                    if t.text in self.sig:
                        raise ModelError("%s does not take %d arguments"
                                         % (t.text, len(args)), t.line, t.col)
                    raise ModelError("unknown symbol %s" % t.text, t.line, t.col)
                return app(sym, tuple(args))
            if t.text in scope:
                return scope[t.text]
            sym = self.sig.lookup(t.text, 0)
            if sym is not None:
                return app(sym, ())
            if t.text in self.sig:
                raise ModelError("%s expects arguments" % t.text, t.line, t.col)
            raise ModelError("unknown symbol %s" % t.text, t.line, t.col)
        self.fail("expected a term")

    def _pattern(self, scope: dict[str, Var], binders: dict[str, Var],
                 eq_tests: list | None) -> Term:
        t = self.peek()
        if t.kind == "?":
            self.advance()
            tok = self.expect("ident")
            if tok.text in binders:
                raise ModelError("?%s bound twice in one pattern" % tok.text,
                                 tok.line, tok.col)
            v = self._bind(scope, tok)
            binders[tok.text] = v
            return v
        if t.kind == "=":
            if eq_tests is None:
                self.fail("equality tests are not allowed in let patterns")
            self.advance()
            seen = dict(scope)
            seen.update(binders)
            term = self._term(seen)
            self._eq_count += 1
            v = var_term("eq_t%d" % self._eq_count)
            eq_tests.append((v, term))
            return v
        if t.kind == "(":
            self.advance()
            items = [self._pattern(scope, binders, eq_tests)]
            while self.at(","):
                self.advance()
                items.append(self._pattern(scope, binders, eq_tests))
            self.expect(")")
            return tup(items)
        if t.kind == "ident":
            if t.text in scope or t.text in binders:
                raise ModelError("use =%s to test against a bound variable"
                                 % t.text, t.line, t.col)
            self.advance()
            if self.at("("):
                self.advance()
                args = [self._pattern(scope, binders, eq_tests)]
                while self.at(","):
                    self.advance()
                    args.append(self._pattern(scope, binders, eq_tests))
                self.expect(")")
                sym = self.sig.lookup(t.text, len(args))
                if sym is None:
                    if t.text in self.sig:
                        raise ModelError("%s does not take %d arguments"
                                         % (t.text, len(args)), t.line, t.col)
                    raise ModelError("unknown symbol %s" % t.text, t.line, t.col)
                return app(sym, tuple(args))
            sym = self.sig.lookup(t.text, 0)
            if sym is not None:
                return app(sym, ())
            if t.text in self.sig:
                raise ModelError("%s expects arguments" % t.text, t.line, t.col)
            raise ModelError("unknown symbol %s" % t.text, t.line, t.col)
        self.fail("expected a pattern")


def parse_model(text: str, sig: Signature | None = None) -> ModelFile:
    """Parse a complete .drt model into a theory bundle plus processes.

    Passing a signature parses the model onto it, so terms intern
    identically with terms built elsewhere against the same signature.
    The model's declarations must then agree with it on arity and privacy.
    """
    return _Parser(_tokenize(text), sig if sig is not None else Signature()).parse_model()


def parse_process(text: str, bundle: TheoryBundle,
                  proclets: dict | None = None) -> Process:
    """Parse a standalone process against an existing theory signature."""
    parser = _Parser(_tokenize(text), bundle.sig)
    if proclets:
        parser.proclets.update(proclets)
    p = parser._process({})
    parser.expect("eof")
    parser._check_closed(p, "process")
    return p


def render_model_source(mf: ModelFile) -> str:
    """Render a parsed model back to .drt source text.

    Feeding the result through parse_model on the same signature yields
    the same declarations, rewrite rules, and process terms. Proclet
    references are not recovered (parse inlines them), so the rendered
    main process is fully expanded.
    """
    lines = []
    for name, arity, private in mf.declarations:
        head = "private fun" if private else "fun"
        lines.append("%s %s/%d." % (head, name, arity))
    if mf.declarations:
        lines.append("")
    for rule in mf.bundle.rules.rules:
        lines.append("reduc %s = %s." % (print_term(rule.lhs), print_term(rule.rhs)))
    if mf.bundle.rules.rules:
        lines.append("")
    for name, body in mf.proclets.items():
        lines.append("let %s =" % name)
        lines.append(print_process(body, "  "))
        lines.append(".")
        lines.append("")
    lines.append("process")
    lines.append(print_process(mf.main))
    lines.append("")
    return "\n".join(lines)
