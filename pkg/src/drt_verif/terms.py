"""Interned first-order terms: names, variables, applications, tuples.

Terms are immutable and hash-consed: structural equality is object identity,
and term DAGs share subterms. All construction goes through the factory
functions name_term / var_term / app / tup. The intern table is guarded by a
lock so concurrent builders are safe.
"""

from __future__ import annotations

import itertools
import re
import threading

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(~[0-9]+)?$|@[0-9]+$")
VAR_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


class FunctionSymbol:
    """A declared function symbol with a fixed arity and visibility."""

    __slots__ = ("uid", "name", "arity", "private")

    def __init__(self, uid: int, name: str, arity: int, private: bool):
        self.uid = uid
        self.name = name
        self.arity = arity
        self.private = private

    @property
    def public(self) -> bool:
        return not self.private

    def __repr__(self):
        vis = "private fun" if self.private else "fun"
        return "<%s %s/%d>" % (vis, self.name, self.arity)


# symbols intern into one global term table, so uids must never collide
# across Signature instances
_SYMBOL_UID = itertools.count()


class Signature:
    """Symbol table keyed by (name, arity); a name may be overloaded by arity."""

    def __init__(self):
        self._by_key: dict[tuple[str, int], FunctionSymbol] = {}
        self._arities: dict[str, list[int]] = {}
        self._uid = _SYMBOL_UID

    def declare(self, name: str, arity: int, private: bool = False) -> FunctionSymbol:
        if not NAME_RE.match(name) or name.startswith("@"):
            raise ValueError("bad symbol name: %r" % name)
        if arity < 0:
            raise ValueError("negative arity for %s" % name)
        key = (name, arity)
        sym = self._by_key.get(key)
        if sym is not None:
            if sym.private != private:
                raise ValueError("symbol %s/%d redeclared with different visibility" % key)
            return sym
        sym = FunctionSymbol(next(self._uid), name, arity, private)
        self._by_key[key] = sym
        self._arities.setdefault(name, []).append(arity)
        return sym

    def lookup(self, name: str, arity: int | None = None) -> FunctionSymbol | None:
        if arity is not None:
            return self._by_key.get((name, arity))
        arities = self._arities.get(name)
        if not arities:
            return None
        if len(arities) > 1:
            raise ValueError("symbol %s is overloaded; arity required" % name)
        return self._by_key[(name, arities[0])]

    def symbols(self):
        return list(self._by_key.values())

    def __contains__(self, name: str) -> bool:
        return name in self._arities


class Term:
    __slots__ = ("tid", "size", "has_var")

    def __str__(self):
        return print_term(self)

    def __repr__(self):
        return "Term(%s)" % print_term(self)


class Name(Term):
    """An atomic name: a fresh datum or channel, opaque to the algebra."""

    __slots__ = ("ident",)


class Var(Term):
    """A pattern variable, printed with a leading question mark."""

    __slots__ = ("ident",)


class App(Term):
    """A function symbol applied to exactly symbol.arity arguments."""

    __slots__ = ("sym", "args")


class Tup(Term):
    """An anonymous tuple of one or more terms."""

    __slots__ = ("items",)


_INTERN: dict[tuple, Term] = {}
_INTERN_LOCK = threading.Lock()
_TID = itertools.count()


def _intern(key, build):
    t = _INTERN.get(key)
    if t is None:
        with _INTERN_LOCK:
            t = _INTERN.get(key)
            if t is None:
                t = build()
                t.tid = next(_TID)
                _INTERN[key] = t
    return t


def name_term(ident: str) -> Name:
    if not NAME_RE.match(ident):
        raise ValueError("bad name: %r" % ident)

    def build():
        t = Name()
        t.ident = ident
        t.size = 1
        t.has_var = False
        return t

    return _intern(("n", ident), build)


def var_term(ident: str) -> Var:
    if not VAR_RE.match(ident):
        raise ValueError("bad variable: %r" % ident)

    def build():
        t = Var()
        t.ident = ident
        t.size = 1
        t.has_var = True
        return t

    return _intern(("v", ident), build)


def app(sym: FunctionSymbol, args: tuple[Term, ...] = ()) -> App:
    args = tuple(args)
    if len(args) != sym.arity:
        raise ValueError("%s/%d applied to %d arguments" % (sym.name, sym.arity, len(args)))

    def build():
        t = App()
        t.sym = sym
        t.args = args
        t.size = 1 + sum(a.size for a in args)
        t.has_var = any(a.has_var for a in args)
        return t

    return _intern(("a", sym.uid) + tuple(a.tid for a in args), build)


def tup(items) -> Tup:
    items = tuple(items)
    if not items:
        raise ValueError("empty tuple term")

    def build():
        t = Tup()
        t.items = items
        t.size = 1 + sum(a.size for a in items)
        t.has_var = any(a.has_var for a in items)
        return t

    return _intern(("t",) + tuple(a.tid for a in items), build)


def children(t: Term) -> tuple[Term, ...]:
    if isinstance(t, App):
        return t.args
    if isinstance(t, Tup):
        return t.items
    return ()


def subterms(t: Term):
    """Pre-order walk over t, t itself first."""
    stack = [t]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(children(cur)))


def vars_of(t: Term) -> set[Var]:
    if not t.has_var:
        return set()
    return {s for s in subterms(t) if isinstance(s, Var)}


def is_ground(t: Term) -> bool:
    return not t.has_var


def print_term(t: Term) -> str:
    parts: list[str] = []
    _print_into(t, parts)
    return "".join(parts)


def _print_into(t: Term, parts: list[str]):
    if isinstance(t, Name):
        parts.append(t.ident)
    elif isinstance(t, Var):
        parts.append("?" + t.ident)
    elif isinstance(t, App):
        parts.append(t.sym.name)
        if t.args:
            parts.append("(")
            for i, a in enumerate(t.args):
                if i:
                    parts.append(",")
                _print_into(a, parts)
            parts.append(")")
    else:
        parts.append("(")
        for i, a in enumerate(t.items):
            if i:
                parts.append(",")
            _print_into(a, parts)
        parts.append(")")


def apply_subst(t: Term, subst: dict[Var, Term]) -> Term:
    """Replace variables by their images; unmapped variables stay."""
    if not t.has_var or not subst:
        return t
    memo: dict[int, Term] = {}

    def go(u: Term) -> Term:
        if not u.has_var:
            return u
        hit = memo.get(u.tid)
        if hit is not None:
            return hit
        if isinstance(u, Var):
            out = subst.get(u, u)
        elif isinstance(u, App):
            out = app(u.sym, tuple(go(a) for a in u.args))
        else:
            out = tup(tuple(go(a) for a in u.items))
        memo[u.tid] = out
        return out

    return go(t)


def match_pattern(pattern: Term, subject: Term, bindings=None):
    """Syntactic one-way match; returns a substitution dict or None.

    Repeated variables must bind to identical subjects (callers matching
    modulo a rewrite theory are expected to normalize the subject first).
    """
    out = dict(bindings) if bindings else {}
    if _match(pattern, subject, out):
        return out
    return None


def _match(pattern: Term, subject: Term, out: dict) -> bool:
    if isinstance(pattern, Var):
        bound = out.get(pattern)
        if bound is None:
            out[pattern] = subject
            return True
        return bound is subject
    if pattern is subject:
        return True
    if isinstance(pattern, App):
        if not isinstance(subject, App) or pattern.sym is not subject.sym:
            return False
        return all(_match(p, s, out) for p, s in zip(pattern.args, subject.args))
    if isinstance(pattern, Tup):
        if not isinstance(subject, Tup) or len(pattern.items) != len(subject.items):
            return False
        return all(_match(p, s, out) for p, s in zip(pattern.items, subject.items))
    return False


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__("%s (line %d, col %d)" % (message, line, col))
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*(~[0-9]+)?|@[0-9]+)"
    r"|(?P<var>\?[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[(),])"
)


def tokenize_term(text: str):
    """Yield (kind, value, line, col) triples for the term syntax."""
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError("unexpected character %r" % text[pos], line, col)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            yield (kind, value, line, col)
        nl = value.count("\n")
        if nl:
            line += nl
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    yield ("eof", "", line, col)


def parse_term(text: str, sig: Signature, resolve=None, allow_vars: bool = True) -> Term:
    """Parse the printable term syntax back into an interned term.

    Bare identifiers resolve, in order, through the optional resolve callback,
    then as declared constants, then as plain names. Applications must match a
    declared symbol and arity.
    """
    toks = list(tokenize_term(text))
    pos = 0

    def peek():
        return toks[pos]

    def take(kind):
        nonlocal pos
        tok = toks[pos]
        if tok[0] != kind:
            raise ParseError("expected %s, got %r" % (kind, tok[1] or "end of input"), tok[2], tok[3])
        pos += 1
        return tok

    def term() -> Term:
        nonlocal pos
        kind, value, line, col = peek()
        if kind == "var":
            if not allow_vars:
                raise ParseError("variable %s not allowed here" % value, line, col)
            take("var")
            return var_term(value[1:])
        if kind == "punct" and value == "(":
            take("punct")
            items = [term()]
            while peek()[1] == ",":
                take("punct")
                items.append(term())
            tok = take("punct")
            if tok[1] != ")":
                raise ParseError("expected )", tok[2], tok[3])
            return tup(items)
        if kind == "name":
            take("name")
            if peek()[1] == "(":
                take("punct")
                args = [term()]
                while peek()[1] == ",":
                    take("punct")
                    args.append(term())
                tok = take("punct")
                if tok[1] != ")":
                    raise ParseError("expected )", tok[2], tok[3])
                sym = sig.lookup(value, len(args))
                if sym is None:
                    raise ParseError("unknown symbol %s/%d" % (value, len(args)), line, col)
                return app(sym, tuple(args))
            if resolve is not None:
                hit = resolve(value)
                if hit is not None:
                    return hit
            sym = sig.lookup(value, 0)
            if sym is not None:
                return app(sym, ())
            return name_term(value)
        raise ParseError("expected a term, got %r" % (value or "end of input"), line, col)

    out = term()
    kind, value, line, col = peek()
    if kind != "eof":
        raise ParseError("trailing input %r" % value, line, col)
    return out
