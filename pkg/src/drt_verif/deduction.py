"""Attacker deduction: what a term set yields under public computation.

Two engines share the rule-directed core. AnalysisIndex is the practical
one: it decomposes knowledge (projections, public destructor rules) and
records a recipe per derived term. saturate is the brute-force oracle: the
full closure under public symbol application, capped by result size.

Recipes are ordinary terms over public symbols plus @k handles (the k-th
knowledge member, 1-based) and projK pseudo-symbols for tuple projection.
"""

from __future__ import annotations

from dataclasses import dataclass

from .rewriting import Rule
from .terms import (
    App,
    Name,
    Signature,
    Term,
    Tup,
    Var,
    app,
    is_ground,
    match_pattern,
    name_term,
    subterms,
    tup,
)
from .theory import READ_SLOTS, WRITE_FAMILY, TheoryBundle, state_components

SATURATE_CEILING = 1_000_000


class BudgetError(RuntimeError):
    """A closure or candidate enumeration outgrew its configured ceiling."""


@dataclass(frozen=True)
class DeductionBudget:
    max_term_size: int = 14
    max_depth: int = 8

    def __post_init__(self):
        if self.max_term_size < 1 or self.max_depth < 1:
            raise ValueError("deduction budget fields must be >= 1")


DEFAULT_BUDGET = DeductionBudget()

_PROJ_SIG = Signature()
_PROJ_BY_UID: dict[int, int] = {}


def proj_sym(k: int):
    sym = _PROJ_SIG.declare("proj%d" % k, 1)
    _PROJ_BY_UID[sym.uid] = k
    return sym


class KnowledgeSet:
    """Deduplicated, insertion-ordered snapshot of attacker-known terms."""

    __slots__ = ("terms", "_tids")

    def __init__(self, terms=()):
        seen = set()
        out = []
        for t in terms:
            if t.tid not in seen:
                seen.add(t.tid)
                out.append(t)
        self.terms = tuple(out)
        self._tids = frozenset(seen)

    def __contains__(self, t: Term) -> bool:
        return t.tid in self._tids

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return "KnowledgeSet(%d terms)" % len(self.terms)

    def handle_of(self, t: Term) -> int | None:
        for i, u in enumerate(self.terms):
            if u is t:
                return i + 1
        return None

    def extended(self, new_terms) -> "KnowledgeSet":
        return KnowledgeSet(self.terms + tuple(new_terms))


def recipe_is_public(recipe: Term) -> bool:
    for t in subterms(recipe):
        if isinstance(t, App) and t.sym.private:
            return False
    return True


def eval_recipe(recipe: Term, m: KnowledgeSet, bundle: TheoryBundle) -> Term:
    """Run a recipe against knowledge m and normalize the result."""

    def ev(t: Term) -> Term:
        if isinstance(t, Name):
            if t.ident.startswith("@"):
                k = int(t.ident[1:])
                if not 1 <= k <= len(m.terms):
                    raise ValueError("recipe handle @%d out of range" % k)
                return m.terms[k - 1]
            return t
        if isinstance(t, Tup):
            return tup(tuple(ev(x) for x in t.items))
        if isinstance(t, App):
            k = _PROJ_BY_UID.get(t.sym.uid)
            if k is not None:
                inner = ev(t.args[0])
                if not isinstance(inner, Tup) or len(inner.items) < k:
                    raise ValueError("projection %d of non-tuple %s" % (k, inner))
                return inner.items[k - 1]
            return app(t.sym, tuple(ev(a) for a in t.args))
        raise ValueError("recipe contains a variable: %s" % t)

    return bundle.normalize(ev(recipe))


def _directed_instances(rule: Rule, members: list[Term], have: set[int],
                        by_head: dict[int, list[Term]] | None = None):
    """Argument vectors from members that make rule's left side fire.

    Structured argument patterns scan the member list (narrowed by head
    symbol when an index is supplied); ground patterns and already-bound
    variables require the exact term to be known; an unbound variable
    ranges over the member list.
    """
    pats = rule.lhs.args

    def candidates(pat):
        if by_head is not None and isinstance(pat, App):
            return by_head.get(pat.sym.uid, ())
        return members

    def rec(i: int, binding: dict, chosen: tuple):
        if i == len(pats):
            yield chosen
            return
        pat = pats[i]
        if isinstance(pat, Var):
            bound = binding.get(pat)
            if bound is not None:
                if bound.tid in have:
                    yield from rec(i + 1, binding, chosen + (bound,))
                return
            for t in members:
                b2 = dict(binding)
                b2[pat] = t
                yield from rec(i + 1, b2, chosen + (t,))
            return
        if is_ground(pat):
            if pat.tid in have:
                yield from rec(i + 1, binding, chosen + (pat,))
            return
        for t in candidates(pat):
            b2 = match_pattern(pat, t, dict(binding))
            if b2 is not None:
                yield from rec(i + 1, b2, chosen + (t,))

    yield from rec(0, {}, ())


class AnalysisIndex:
    """Forward decomposition closure of a knowledge set, with recipes.

    Closure steps: tuple projection, and any public-headed rule whose result
    is not a platform state (write rules multiply states without adding
    derivable data; attacker-written states are produced on demand by the
    explorer's input synthesis instead).
    """

    def __init__(self, m: KnowledgeSet, bundle: TheoryBundle, depth: int = 4,
                 extra=()):
        self.m = m
        self.bundle = bundle
        self._recipes: dict[int, Term] = {}
        self._order: list[Term] = []

        for i, t in enumerate(m.terms):
            self._add(t, name_term("@%d" % (i + 1)))
        for c in bundle.public_constants():
            self._add(c, c)
        for t, recipe in extra:
            self._add(t, recipe)
        self._rules = [r for r in bundle.rules.rules
                       if r.lhs.sym.public and not (
                           isinstance(r.rhs, App) and r.rhs.sym.name == "state")]
        self._close(depth)

    def _add(self, t: Term, recipe: Term) -> bool:
        if t.tid in self._recipes:
            return False
        self._recipes[t.tid] = recipe
        self._order.append(t)
        return True

    def _close(self, depth: int):
        for _ in range(depth):
            added = False
            snapshot = list(self._order)
            have = set(self._recipes)
            for t in snapshot:
                if isinstance(t, Tup):
                    for k, item in enumerate(t.items, start=1):
                        if item.tid not in self._recipes:
                            r = app(proj_sym(k), (self._recipes[t.tid],))
                            added |= self._add(item, r)
            for rule in self._rules:
                for args in _directed_instances(rule, snapshot, have):
                    redex = app(rule.lhs.sym, args)
                    result = self.bundle.normalize(redex)
                    if result.tid in self._recipes or result is redex:
                        continue
                    recipe = app(rule.lhs.sym,
                                 tuple(self._recipes[a.tid] for a in args))
                    added |= self._add(result, recipe)
            if not added:
                break

    def terms(self) -> list[Term]:
        return list(self._order)

    def covers(self, t: Term) -> bool:
        return t.tid in self._recipes

    def recipe_for(self, t: Term) -> Term | None:
        return self._recipes.get(t.tid)


def deducible(m: KnowledgeSet, t: Term, bundle: TheoryBundle,
              budget: DeductionBudget = DEFAULT_BUDGET,
              index: AnalysisIndex | None = None) -> Term | None:
    """A public recipe over m that normalizes to t, or None within budget.

    Search is bidirectional: the index decomposes m forward; backward
    synthesis splits t through tuples and public applications until it
    bottoms out in indexed terms.
    """
    if index is None:
        index = AnalysisIndex(m, bundle, depth=budget.max_depth)

    def synth(goal: Term, depth: int) -> Term | None:
        hit = index.recipe_for(goal)
        if hit is not None:
            return hit
        if depth <= 0:
            return None
        if isinstance(goal, Tup):
            parts = []
            for item in goal.items:
                r = synth(item, depth - 1)
                if r is None:
                    return None
                parts.append(r)
            return tup(tuple(parts))
        if isinstance(goal, App) and goal.sym.public and goal.sym.arity > 0:
            parts = []
            for a in goal.args:
                r = synth(a, depth - 1)
                if r is None:
                    return None
                parts.append(r)
            return app(goal.sym, tuple(parts))
        return None

    recipe = synth(bundle.normalize(t), budget.max_depth)
    if recipe is None:
        return None
    assert recipe_is_public(recipe), recipe
    assert eval_recipe(recipe, m, bundle) is bundle.normalize(t)
    return recipe


def closure_symbols(bundle: TheoryBundle, constants: bool = True,
                    reads: bool = True, writes: bool = False):
    """Symbol sets for saturate. Writes are off by default: their results
    are full state terms that outsize any desk-scale cap, and their stuck
    applications are junk no rule pattern can consume."""
    out = []
    for s in bundle.sig.symbols():
        if not s.public:
            continue
        key = (s.name, s.arity)
        if key in WRITE_FAMILY:
            if writes:
                out.append(s)
        elif s.arity == 0:
            if constants:
                out.append(s)
        elif s.name in READ_SLOTS and s.arity == 1:
            if reads:
                out.append(s)
        else:
            out.append(s)
    return out


def saturate(m: KnowledgeSet, bundle: TheoryBundle, max_term_size: int,
             ceiling: int = SATURATE_CEILING, symbols=None,
             max_tuple_arity: int = 3, inert_stuck: bool = False) -> KnowledgeSet:
    """Brute-force closure of m under public computation, the Att oracle.

    Initial members are kept whatever their size; every derived term must
    fit max_term_size. Two passes alternate to a fixpoint: rule-directed
    reduction (catches destructor results whose redex would be oversized,
    like a read applied to a known state) and free application of public
    symbols with application size within the cap.

    symbols picks the closure alphabet (default: closure_symbols(bundle)).
    inert_stuck=True keeps stuck destructor applications as members but not
    as argument material; towers of junk collapse, which makes lemma-scale
    size bounds tractable while preserving every reachable reduction.
    """
    if symbols is None:
        symbols = closure_symbols(bundle)
    usable = [s for s in symbols if s.public and s.arity >= 1]
    usable_uids = {s.uid for s in usable}
    rules = [r for r in bundle.rules.rules if r.lhs.sym.uid in usable_uids]
    rs = bundle.rules

    order: list[Term] = []
    have: set[int] = set()
    inert: set[int] = set()
    fresh: list[Term] = []

    def add(t: Term) -> bool:
        if t.tid in have:
            return False
        have.add(t.tid)
        order.append(t)
        fresh.append(t)
        if len(order) > ceiling:
            raise BudgetError("saturation exceeded %d terms" % ceiling)
        if inert_stuck and isinstance(t, App) and rs.is_destructor(t.sym):
            inert.add(t.tid)
        return True

    def norm_of(t: Term) -> Term:
        # normalize and record the result under its own tid, so pool
        # membership can check normality with a single cache lookup
        nf = bundle.normalize(t)
        rs._nf[nf.tid] = nf
        return nf

    def nf_of_app(sym, args) -> Term:
        # args drawn from the pools are already normal, so a failed root
        # match means the application is normal too; only an actual
        # contraction needs the full normalizer
        t = app(sym, args)
        contracted = rs.root_step(t)
        if contracted is None:
            rs._nf[t.tid] = t
            return t
        return norm_of(contracted)

    for t in m.terms:
        nf = norm_of(t)
        add(t)
        if nf is not t:
            add(nf)  # the given form stays a member but only its normal
            # form serves as argument material
    for s in symbols:
        if s.arity == 0 and s.public and 1 <= max_term_size:
            add(norm_of(app(s, ())))

    # argument material, delta-partitioned: old_by_size excludes the batch
    # being integrated so each combination is enumerated exactly once
    all_by_size: dict[int, list[Term]] = {}
    all_active: list[Term] = []
    by_head: dict[int, list[Term]] = {}

    def vectors(pools, room: int):
        if not pools:
            yield ()
            return
        head, rest = pools[0], pools[1:]
        floor = len(rest)
        for sz, terms_of_sz in head.items():
            if sz > room - floor:
                continue
            for t in terms_of_sz:
                for v in vectors(rest, room - sz):
                    yield (t,) + v

    def mixed_vectors(arity: int, room: int, old_sz, new_sz):
        # at least one argument from the new batch: position k is new,
        # earlier positions old-only, later positions either
        for k in range(arity):
            pools = [old_sz] * k + [new_sz] + [all_by_size] * (arity - 1 - k)
            yield from vectors(pools, room)

    while fresh:
        batch = fresh
        fresh = []

        old_by_size = {sz: list(ts) for sz, ts in all_by_size.items()}
        new_by_size: dict[int, list[Term]] = {}
        for t in batch:
            if t.tid in inert or rs._nf.get(t.tid) is not t:
                continue
            all_active.append(t)
            all_by_size.setdefault(t.size, []).append(t)
            new_by_size.setdefault(t.size, []).append(t)
            if isinstance(t, App):
                by_head.setdefault(t.sym.uid, []).append(t)

        for t in batch:
            if isinstance(t, Tup):
                for item in t.items:
                    if item.size <= max_term_size:
                        nf = norm_of(item)
                        add(item)
                        if nf is not item and nf.size <= max_term_size:
                            add(nf)

        # full directed pass each round; the head index keeps it cheap and
        # re-entry of known instances is absorbed by dedup
        for rule in rules:
            for args in _directed_instances(rule, all_active, have, by_head):
                result = norm_of(app(rule.lhs.sym, args))
                if result.size <= max_term_size:
                    add(result)

        room = max_term_size - 1
        for sym in usable:
            for args in mixed_vectors(sym.arity, room, old_by_size, new_by_size):
                add(nf_of_app(sym, args))
        for arity in range(2, max_tuple_arity + 1):
            for items in mixed_vectors(arity, room, old_by_size, new_by_size):
                t2 = tup(items)
                rs._nf[t2.tid] = t2
                add(t2)

    return KnowledgeSet(order)


def components(t: Term) -> list[Term]:
    """The leaves of a platform state in slot order."""
    return list(state_components(t))


def is_saturated(m1: KnowledgeSet, m2, bundle: TheoryBundle,
                 budget: DeductionBudget = DEFAULT_BUDGET) -> bool:
    """True when every component of every state in m2 is deducible from m1."""
    index = AnalysisIndex(m1, bundle, depth=budget.max_depth)
    for t in m2:
        for u in components(t):
            if deducible(m1, u, bundle, budget, index=index) is None:
                return False
    return True


def lemma_saturation_check(m1: KnowledgeSet, m2, bundle: TheoryBundle,
                           size_bound: int, symbols=None,
                           inert_stuck: bool = False) -> bool:
    """Desk-scale check that adding saturated states yields nothing else.

    Compares the closure of m1 plus the states against the closure of m1
    union the states themselves, at the given size bound. symbols and
    inert_stuck flow through to both saturate calls, so any approximation
    applies to the two sides identically.
    """
    m2_terms = tuple(m2)
    joint = saturate(m1.extended(m2_terms), bundle, size_bound,
                     symbols=symbols, inert_stuck=inert_stuck)
    base = saturate(m1, bundle, size_bound,
                    symbols=symbols, inert_stuck=inert_stuck)
    rhs = set(t.tid for t in base) | {t.tid for t in m2_terms}
    lhs = set(t.tid for t in joint)
    return lhs == rhs
