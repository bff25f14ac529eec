"""Ordered rewrite systems: single steps, normalization, critical pairs.

Rule application is plain syntactic matching; equality modulo the theory is
normal-form identity. The reduction strategy is leftmost-innermost and rules
are tried in declaration order, first match wins.
"""

from __future__ import annotations

from .terms import (
    App,
    Term,
    Tup,
    Var,
    app,
    apply_subst,
    children,
    match_pattern,
    print_term,
    subterms,
    tup,
    var_term,
    vars_of,
)

DEFAULT_MAX_STEPS = 100_000


class DivergenceError(RuntimeError):
    """Raised when normalization exceeds its step ceiling."""


class Rule:
    __slots__ = ("label", "lhs", "rhs")

    def __init__(self, label: str, lhs: Term, rhs: Term):
        if not isinstance(lhs, App):
            raise ValueError("rule %s: left side must be a function application" % label)
        extra = vars_of(rhs) - vars_of(lhs)
        if extra:
            raise ValueError("rule %s: right side invents variables %s" % (label, sorted(v.ident for v in extra)))
        self.label = label
        self.lhs = lhs
        self.rhs = rhs

    def __repr__(self):
        return "Rule(%s: %s -> %s)" % (self.label, print_term(self.lhs), print_term(self.rhs))


class RewriteSystem:
    """An ordered list of rules, indexed by head symbol; immutable once built."""

    def __init__(self, rules):
        self.rules = tuple(rules)
        self._by_head: dict[int, list[Rule]] = {}
        for r in self.rules:
            self._by_head.setdefault(r.lhs.sym.uid, []).append(r)
        self._nf: dict[int, Term] = {}
        self.head_symbols = frozenset(r.lhs.sym for r in self.rules)

    def rules_for(self, sym) -> tuple:
        return tuple(self._by_head.get(sym.uid, ()))

    def root_step(self, t: Term) -> Term | None:
        if not isinstance(t, App):
            return None
        for rule in self._by_head.get(t.sym.uid, ()):
            m = match_pattern(rule.lhs, t)
            if m is not None:
                return apply_subst(rule.rhs, m)
        return None

    def is_destructor(self, sym) -> bool:
        return sym in self.head_symbols


def rewrite_step(t: Term, rs: RewriteSystem) -> Term | None:
    """One leftmost-innermost step, or None when t is in normal form."""
    ch = children(t)
    for i, c in enumerate(ch):
        stepped = rewrite_step(c, rs)
        if stepped is not None:
            new_children = ch[:i] + (stepped,) + ch[i + 1:]
            if isinstance(t, App):
                return app(t.sym, new_children)
            return tup(new_children)
    return rs.root_step(t)


def normalize(t: Term, rs: RewriteSystem, max_steps: int = DEFAULT_MAX_STEPS) -> Term:
    """The unique normal form of t; raises DivergenceError past max_steps.

    Reduction order is innermost, matching rewrite_step iterated to fixpoint;
    the ceiling counts rule applications. Results are cached on the system.
    """
    budget = [max_steps]
    try:
        return _norm(t, rs, budget)
    except RecursionError:
        # a growing contractum can exhaust the interpreter stack before the
        # step ceiling; that is still divergence
        raise DivergenceError("normalization diverged on %s" % print_term(t)) from None


def _norm(t: Term, rs: RewriteSystem, budget: list) -> Term:
    cached = rs._nf.get(t.tid)
    if cached is not None:
        return cached
    cur = t
    while True:
        ch = children(cur)
        if ch:
            normed = tuple(_norm(c, rs, budget) for c in ch)
            if any(n is not c for n, c in zip(normed, ch)):
                cur = app(cur.sym, normed) if isinstance(cur, App) else tup(normed)
        contracted = rs.root_step(cur)
        if contracted is None:
            break
        budget[0] -= 1
        if budget[0] < 0:
            raise DivergenceError("normalization exceeded step ceiling on %s" % print_term(t))
        cur = contracted
    rs._nf[t.tid] = cur
    rs._nf[cur.tid] = cur
    return cur


def eq_mod(s: Term, t: Term, rs: RewriteSystem) -> bool:
    """Equality modulo the theory: identical normal forms."""
    return normalize(s, rs) is normalize(t, rs)


def _walk(t: Term, subst: dict) -> Term:
    while isinstance(t, Var):
        nxt = subst.get(t)
        if nxt is None:
            return t
        t = nxt
    return t


def _occurs(v: Var, t: Term, subst: dict) -> bool:
    t = _walk(t, subst)
    if t is v:
        return True
    return any(_occurs(v, c, subst) for c in children(t))


def unify(a: Term, b: Term, subst: dict | None = None) -> dict | None:
    """Syntactic most general unifier as a triangular substitution, or None."""
    if subst is None:
        subst = {}
    a = _walk(a, subst)
    b = _walk(b, subst)
    if a is b:
        return subst
    if isinstance(a, Var):
        if _occurs(a, b, subst):
            return None
        subst[a] = b
        return subst
    if isinstance(b, Var):
        return unify(b, a, subst)
    if isinstance(a, App) and isinstance(b, App) and a.sym is b.sym:
        pairs = zip(a.args, b.args)
    elif isinstance(a, Tup) and isinstance(b, Tup) and len(a.items) == len(b.items):
        pairs = zip(a.items, b.items)
    else:
        return None
    for x, y in pairs:
        subst = unify(x, y, subst)
        if subst is None:
            return None
    return subst


def resolve_subst(subst: dict) -> dict:
    """Flatten a triangular unifier into an idempotent substitution."""

    def expand(t: Term) -> Term:
        t = _walk(t, subst)
        ch = children(t)
        if not ch:
            return t
        new = tuple(expand(c) for c in ch)
        if all(n is c for n, c in zip(new, ch)):
            return t
        return app(t.sym, new) if isinstance(t, App) else tup(new)

    return {v: expand(v) for v in subst}


def _positions(t: Term, path=()):
    yield path, t
    for i, c in enumerate(children(t)):
        yield from _positions(c, path + (i,))


def _replace_at(t: Term, path, new: Term) -> Term:
    if not path:
        return new
    ch = children(t)
    i = path[0]
    rebuilt = ch[:i] + (_replace_at(ch[i], path[1:], new),) + ch[i + 1:]
    return app(t.sym, rebuilt) if isinstance(t, App) else tup(rebuilt)


def _rename_apart(t: Term, taken: set) -> tuple[Term, dict]:
    mapping = {}
    fresh = 0
    for v in sorted(vars_of(t), key=lambda v: v.ident):
        nv = v
        while nv in taken or nv in mapping.values():
            nv = var_term("u%d" % fresh)
            fresh += 1
        mapping[v] = nv
    return apply_subst(t, mapping), mapping


class CriticalPair:
    __slots__ = ("outer", "inner", "position", "peak", "left", "right", "joinable")

    def __init__(self, outer, inner, position, peak, left, right, joinable):
        self.outer = outer
        self.inner = inner
        self.position = position
        self.peak = peak
        self.left = left
        self.right = right
        self.joinable = joinable

    def __repr__(self):
        tag = "joinable" if self.joinable else "NOT JOINABLE"
        return "CriticalPair(%s/%s at %s: %s vs %s, %s)" % (
            self.outer.label, self.inner.label, list(self.position),
            print_term(self.left), print_term(self.right), tag)


class CriticalPairReport:
    def __init__(self, pairs):
        self.pairs = list(pairs)
        self.all_joinable = all(p.joinable for p in self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def critical_pair_scan(rs: RewriteSystem, max_steps: int = DEFAULT_MAX_STEPS) -> CriticalPairReport:
    """All lhs/lhs overlaps between rules, each checked for joinability.

    For every rule pair, the inner rule's left side (variables renamed apart)
    is unified with each non-variable subterm of the outer rule's left side;
    the self-overlap of a rule at its own root is skipped as trivial.
    """
    pairs = []
    for outer in rs.rules:
        outer_vars = vars_of(outer.lhs)
        for inner in rs.rules:
            inner_lhs, mapping = _rename_apart(inner.lhs, outer_vars)
            inner_rhs = apply_subst(inner.rhs, mapping)
            for path, sub in _positions(outer.lhs):
                if isinstance(sub, Var):
                    continue
                if inner is outer and not path:
                    continue
                mgu = unify(sub, inner_lhs, {})
                if mgu is None:
                    continue
                full = resolve_subst(mgu)
                peak = apply_subst(outer.lhs, full)
                left = apply_subst(outer.rhs, full)
                right = apply_subst(_replace_at(outer.lhs, path, inner_rhs), full)
                joinable = normalize(left, rs, max_steps) is normalize(right, rs, max_steps)
                pairs.append(CriticalPair(outer, inner, path, peak, left, right, joinable))
    return CriticalPairReport(pairs)
