"""Bounded explicit-state exploration against a Dolev-Yao environment.

A configuration holds the attacker's knowledge plus a multiset of live
processes, each tagged with a stable path string. step() enumerates the
kernel transitions one at a time: NIL, PAR, BANG, NEW, LET, IF_T, IF_F,
COMM (process to process, and output absorbed by the environment when
the channel is deducible), and ATTACKER_IN (input synthesized from
knowledge). explore() runs a breadth-first search with two reductions
that keep the state count at desk scale without losing knowledge-
reachability: deterministic transitions are compressed into their
successor (they commute with everything and knowledge only grows), and
configurations are deduplicated by a canonical form that renames fresh
names in order of first occurrence.

Every compressed step is still logged as its own trace event, so traces
replay at kernel granularity regardless of how they were found.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, replace

from .deduction import (
    AnalysisIndex,
    BudgetError,
    DeductionBudget,
    KnowledgeSet,
    eval_recipe,
)
from .process import (
    NIL,
    IfElse,
    In,
    Let,
    New,
    Nil,
    Out,
    Par,
    Process,
    Repl,
    print_process,
    subst_process,
)
from .terms import (
    App,
    Name,
    Signature,
    Term,
    Tup,
    Var,
    app,
    apply_subst,
    match_pattern,
    name_term,
    print_term,
    subterms,
    tup,
)
from .theory import WRITE_FAMILY, READ_SLOTS, TheoryBundle

# distinguished names the attacker may invent; a small pool in its own
# signature so theory signatures stay exactly the declared symbols
_ATT_SIG = Signature()
_ATT_UIDS: set[int] = set()


def att_term(k: int) -> Term:
    sym = _ATT_SIG.declare("att%d" % k, 0)
    _ATT_UIDS.add(sym.uid)
    return app(sym, ())


@dataclass(frozen=True)
class ExploreBudget:
    repl_bound: int = 2
    max_transitions: int = 18       # visible-step depth of the search
    synth_depth: int = 2
    max_term_size: int = 14
    frontier_ceiling: int = 50000
    attacker_names: int = 3
    max_candidates_per_site: int = 4096
    small_member_size: int = 6      # member cap per hole at multi-hole sites
    max_tau_steps: int = 4000
    hole_width: int = 6             # per-hole candidates at multi-hole sites
    site_width: int = 32            # per-hole candidates at one-hole sites
    state_width: int = 6            # state candidates at multi-hole sites
    single_state_width: int = 24    # state candidates at one-hole sites
    state_tier_depth: int = 4       # write-chain length for built states
    state_tier_cap: int = 600       # states the write tier may build
    fanout_width: int = 24          # visible successors kept per config
    beam_width: int = 1600          # frontier kept per level, best first


DEFAULT_EXPLORE = ExploreBudget()


@dataclass(frozen=True)
class Event:
    rule: str                 # NIL BANG PAR NEW COMM IF_T IF_F LET ATTACKER_IN
    path: str
    channel: Term | None = None
    message: Term | None = None
    recipe: Term | None = None
    added: tuple = ()
    path2: str | None = None  # receiver of a process-to-process COMM


@dataclass(frozen=True)
class Configuration:
    live: tuple               # ordered (path, Process) pairs
    knowledge: KnowledgeSet
    fresh_count: int = 0
    repl_spawned: tuple = ()  # (path, count of copies so far)
    events: tuple = ()

    def spawned(self, path: str) -> int:
        for p, n in self.repl_spawned:
            if p == path:
                return n
        return 0


def initial_configuration(p: Process, bundle: TheoryBundle,
                          knowledge=()) -> Configuration:
    terms = [bundle.normalize(t) for t in knowledge]
    return Configuration(live=(("0", p),), knowledge=KnowledgeSet(terms))


# deduction plumbing, cached per knowledge set


_INDEX_CACHE: dict = {}
_DEDUCE_CACHE: dict = {}


def _index_for(m: KnowledgeSet, bundle: TheoryBundle) -> AnalysisIndex:
    key = (id(bundle), m._tids)
    idx = _INDEX_CACHE.get(key)
    if idx is None:
        idx = AnalysisIndex(m, bundle, depth=4)
        _INDEX_CACHE[key] = idx
    return idx


def _deduce(m: KnowledgeSet, t: Term, bundle: TheoryBundle,
            budget: ExploreBudget) -> Term | None:
    """Recipe for t from m, or None; memoized per knowledge set."""
    key = (id(bundle), m._tids, t.tid)
    if key in _DEDUCE_CACHE:
        return _DEDUCE_CACHE[key]
    from .deduction import deducible
    recipe = deducible(m, t, bundle,
                       DeductionBudget(max_term_size=budget.max_term_size),
                       index=_index_for(m, bundle))
    _DEDUCE_CACHE[key] = recipe
    return recipe


# canonical form


def _rename_term(t: Term, mapping: dict) -> Term:
    if isinstance(t, Name):
        new = mapping.get(t.ident)
        return name_term(new) if new else t
    if isinstance(t, Tup):
        return tup(tuple(_rename_term(i, mapping) for i in t.items))
    if isinstance(t, App) and t.args:
        return app(t.sym, tuple(_rename_term(a, mapping) for a in t.args))
    if isinstance(t, App) and t.sym.uid in mapping:
        return mapping[t.sym.uid]
    return t


def _rename_process(p: Process, mapping: dict) -> Process:
    if isinstance(p, Nil):
        return p
    if isinstance(p, Par):
        return Par(_rename_process(p.left, mapping), _rename_process(p.right, mapping))
    if isinstance(p, Repl):
        return Repl(_rename_process(p.body, mapping))
    if isinstance(p, New):
        return New(p.var, _rename_process(p.body, mapping))
    if isinstance(p, In):
        tests = tuple((v, _rename_term(t, mapping)) for v, t in p.eq_tests)
        return In(_rename_term(p.channel, mapping), p.pattern,
                  _rename_process(p.body, mapping), tests)
    if isinstance(p, Out):
        return Out(_rename_term(p.channel, mapping),
                   _rename_term(p.payload, mapping),
                   _rename_process(p.body, mapping))
    if isinstance(p, IfElse):
        return IfElse(_rename_term(p.left, mapping), _rename_term(p.right, mapping),
                      _rename_process(p.then_body, mapping),
                      _rename_process(p.else_body, mapping))
    if isinstance(p, Let):
        return Let(p.pattern, _rename_term(p.rhs, mapping),
                   _rename_process(p.body, mapping))
    raise TypeError("not a process: %r" % (p,))


def _collect_fresh(t: Term, mapping: dict, counters: dict):
    for s in subterms(t):
        if isinstance(s, Name) and "~" in s.ident and s.ident not in mapping:
            base = s.ident.split("~", 1)[0]
            k = counters.get(base, 0)
            counters[base] = k + 1
            mapping[s.ident] = "%s~%d" % (base, k)
        elif (isinstance(s, App) and s.sym.uid in _ATT_UIDS
              and s.sym.uid not in mapping):
            # attacker pool names are interchangeable; number by first use
            k = counters.get("att", 0)
            counters["att"] = k + 1
            mapping[s.sym.uid] = att_term(k + 1)


def _collect_fresh_proc(p: Process, mapping: dict, counters: dict):
    if isinstance(p, Nil):
        return
    if isinstance(p, Par):
        _collect_fresh_proc(p.left, mapping, counters)
        _collect_fresh_proc(p.right, mapping, counters)
        return
    if isinstance(p, (Repl, New)):
        _collect_fresh_proc(p.body, mapping, counters)
        return
    if isinstance(p, In):
        _collect_fresh(p.channel, mapping, counters)
        for _, t in p.eq_tests:
            _collect_fresh(t, mapping, counters)
        _collect_fresh_proc(p.body, mapping, counters)
        return
    if isinstance(p, Out):
        _collect_fresh(p.channel, mapping, counters)
        _collect_fresh(p.payload, mapping, counters)
        _collect_fresh_proc(p.body, mapping, counters)
        return
    if isinstance(p, IfElse):
        _collect_fresh(p.left, mapping, counters)
        _collect_fresh(p.right, mapping, counters)
        _collect_fresh_proc(p.then_body, mapping, counters)
        _collect_fresh_proc(p.else_body, mapping, counters)
        return
    if isinstance(p, Let):
        _collect_fresh(p.rhs, mapping, counters)
        _collect_fresh_proc(p.body, mapping, counters)
        return
    raise TypeError("not a process: %r" % (p,))


def canonical_key(cfg: Configuration) -> tuple:
    """Dedup key: fresh names renumbered by first occurrence, process
    multiset order-blind, knowledge order-blind. A trace and its replay
    share a key; distinct interleavings may or may not, which costs time
    but never soundness."""
    mapping: dict = {}
    counters: dict = {}
    for _, p in cfg.live:
        _collect_fresh_proc(p, mapping, counters)
    for t in cfg.knowledge:
        _collect_fresh(t, mapping, counters)
    procs = sorted(print_process(_rename_process(p, mapping))
                   for _, p in cfg.live if not isinstance(p, Nil))
    know = frozenset(_rename_term(t, mapping).tid for t in cfg.knowledge)
    return (tuple(procs), know)


_PROC_DIGEST_CACHE: dict = {}


def _proc_digest(p: Process) -> bytes:
    """Structural fingerprint of a live process, shared across configs.

    Processes are frozen dataclasses over interned terms, so structural
    equality is dict-key equality and the printed form never goes stale.
    """
    d = _PROC_DIGEST_CACHE.get(p)
    if d is None:
        d = hashlib.sha256(print_process(p).encode()).digest()[:16]
        _PROC_DIGEST_CACHE[p] = d
    return d


def _canonical_digest(cfg: Configuration) -> bytes:
    """Fixed-width stand-in for canonical_key in large visited sets.

    A configuration that never ran a fresh-name binder has nothing to
    renumber (attacker pool names are minted in a fixed order during
    synthesis), so its digest folds cached per-process fingerprints with
    the knowledge id set instead of reprinting every live process.
    """
    h = hashlib.sha256()
    if cfg.fresh_count == 0:
        for d in sorted(_proc_digest(p) for _, p in cfg.live
                        if not isinstance(p, Nil)):
            h.update(d)
        h.update(b"|%d" % hash(cfg.knowledge._tids))
        return h.digest()
    procs, know = canonical_key(cfg)
    for s in procs:
        h.update(s.encode())
        h.update(b"\x00")
    for tid in sorted(know):
        h.update(b"%d," % tid)
    return h.digest()


# single kernel transitions


def _replace(live: tuple, idx: int, entries: tuple) -> tuple:
    return live[:idx] + entries + live[idx + 1:]


def _contains_destructor(t: Term, bundle: TheoryBundle) -> bool:
    return any(isinstance(s, App) and bundle.rules.is_destructor(s.sym)
               for s in subterms(t))


def _internal(cfg: Configuration, idx: int,
              bundle: TheoryBundle) -> tuple | None:
    """Apply the one deterministic rule at live[idx], or None."""
    path, proc = cfg.live[idx]
    if isinstance(proc, Nil):
        ev = Event("NIL", path)
        return Configuration(_replace(cfg.live, idx, ()), cfg.knowledge,
                             cfg.fresh_count, cfg.repl_spawned,
                             cfg.events + (ev,)), ev
    if isinstance(proc, Par):
        ev = Event("PAR", path)
        entries = ((path + ".0", proc.left), (path + ".1", proc.right))
        return Configuration(_replace(cfg.live, idx, entries), cfg.knowledge,
                             cfg.fresh_count, cfg.repl_spawned,
                             cfg.events + (ev,)), ev
    if isinstance(proc, New):
        fresh = name_term("%s~%d" % (proc.var.ident, cfg.fresh_count))
        body = subst_process(proc.body, {proc.var: fresh})
        ev = Event("NEW", path, message=fresh)
        return Configuration(_replace(cfg.live, idx, ((path, body),)),
                             cfg.knowledge, cfg.fresh_count + 1,
                             cfg.repl_spawned, cfg.events + (ev,)), ev
    if isinstance(proc, IfElse):
        same = bundle.normalize(proc.left) is bundle.normalize(proc.right)
        branch = proc.then_body if same else proc.else_body
        ev = Event("IF_T" if same else "IF_F", path)
        return Configuration(_replace(cfg.live, idx, ((path, branch),)),
                             cfg.knowledge, cfg.fresh_count,
                             cfg.repl_spawned, cfg.events + (ev,)), ev
    if isinstance(proc, Let):
        rhs = bundle.normalize(proc.rhs)
        if _contains_destructor(rhs, bundle):
            return None  # evaluation got stuck; the process never moves
        binding = match_pattern(proc.pattern, rhs)
        if binding is None:
            return None
        body = subst_process(proc.body, binding)
        ev = Event("LET", path, message=rhs)
        return Configuration(_replace(cfg.live, idx, ((path, body),)),
                             cfg.knowledge, cfg.fresh_count,
                             cfg.repl_spawned, cfg.events + (ev,)), ev
    return None


def _spawn(cfg: Configuration, idx: int, budget: ExploreBudget) -> tuple | None:
    """Unfold one replication copy at live[idx] if the bound allows."""
    path, proc = cfg.live[idx]
    if not isinstance(proc, Repl):
        return None
    n = cfg.spawned(path)
    if n >= budget.repl_bound:
        return None
    copy_path = "%s.r%d" % (path, n + 1)
    counts = tuple((p, c) for p, c in cfg.repl_spawned if p != path)
    counts += ((path, n + 1),)
    ev = Event("BANG", path)
    live = _replace(cfg.live, idx, ((path, proc), (copy_path, proc.body)))
    return Configuration(live, cfg.knowledge, cfg.fresh_count, counts,
                         cfg.events + (ev,)), ev


def _absorb(cfg: Configuration, idx: int, bundle: TheoryBundle,
            budget: ExploreBudget) -> tuple | None:
    """Environment consumes an output on a deducible channel."""
    path, proc = cfg.live[idx]
    if not isinstance(proc, Out):
        return None
    channel = bundle.normalize(proc.channel)
    if _deduce(cfg.knowledge, channel, bundle, budget) is None:
        return None
    payload = bundle.normalize(proc.payload)
    added = () if payload in cfg.knowledge else (payload,)
    ev = Event("COMM", path, channel=channel, message=payload, added=added)
    return Configuration(_replace(cfg.live, idx, ((path, proc.body),)),
                         cfg.knowledge.extended((payload,)), cfg.fresh_count,
                         cfg.repl_spawned, cfg.events + (ev,)), ev


def _comm_pairs(cfg: Configuration, bundle: TheoryBundle,
                budget: ExploreBudget, private_only: bool = True):
    """Enabled sender/receiver pairs: (sender idx, receiver idx, binding)."""
    outs = []
    for i, (path, proc) in enumerate(cfg.live):
        if isinstance(proc, Out):
            ch = bundle.normalize(proc.channel)
            if private_only and _deduce(cfg.knowledge, ch, bundle, budget) is not None:
                continue
            outs.append((i, ch, bundle.normalize(proc.payload)))
    pairs = []
    for i, ch, payload in outs:
        for j, (path2, proc2) in enumerate(cfg.live):
            if j == i or not isinstance(proc2, In):
                continue
            if bundle.normalize(proc2.channel) is not ch:
                continue
            binding = match_pattern(proc2.pattern, payload)
            if binding is not None:
                pairs.append((i, j, binding))
    return pairs


def _apply_comm(cfg: Configuration, i: int, j: int, binding: dict,
                bundle: TheoryBundle, budget: ExploreBudget) -> tuple:
    path, sender = cfg.live[i]
    path2, receiver = cfg.live[j]
    channel = bundle.normalize(sender.channel)
    payload = bundle.normalize(sender.payload)
    deducible_ch = _deduce(cfg.knowledge, channel, bundle, budget) is not None
    added = ()
    knowledge = cfg.knowledge
    if deducible_ch and payload not in knowledge:
        added = (payload,)
        knowledge = knowledge.extended((payload,))
    ev = Event("COMM", path, channel=channel, message=payload, added=added,
               path2=path2)
    live = list(cfg.live)
    live[i] = (path, sender.body)
    live[j] = (path2, subst_process(receiver.body, binding))
    return Configuration(tuple(live), knowledge, cfg.fresh_count,
                         cfg.repl_spawned, cfg.events + (ev,)), ev


def _apply_attacker_in(cfg: Configuration, idx: int, sub: dict, recipe: Term,
                       bundle: TheoryBundle) -> tuple:
    path, proc = cfg.live[idx]
    message = bundle.normalize(apply_subst(proc.pattern, sub))
    channel = bundle.normalize(proc.channel)
    ev = Event("ATTACKER_IN", path, channel=channel, message=message,
               recipe=recipe)
    body = subst_process(proc.body, sub)
    return Configuration(_replace(cfg.live, idx, ((path, body),)),
                         cfg.knowledge, cfg.fresh_count, cfg.repl_spawned,
                         cfg.events + (ev,)), ev


# attacker input synthesis


def _pattern_vars(pattern: Term) -> list[Var]:
    out = []
    for s in subterms(pattern):
        if isinstance(s, Var) and s not in out:
            out.append(s)
    return out


def _fresh_hint() -> dict:
    return {"state": False, "written": False, "pins": [], "completions": [],
            "guard_shapes": [], "reads": set(), "filters": [],
            "occ": 0, "occ_read": 0, "occ_out": 0}


def _hole_hints(proc: In, bundle: TheoryBundle) -> dict:
    """Per-hole usage analysis of the input's continuation.

    Drives candidate selection: a hole the continuation feeds to a
    symbol whose rewrite patterns expect a platform state there gets
    state-shaped candidates; written holes flow into a write-family
    argument and get program-shaped material; pins are ground terms the
    continuation compares the hole against; completions are shapes that
    satisfy a unary-test guard (taken from the test symbol's own rewrite
    patterns); filters prune state candidates when one guard branch is
    dead; and a hole only ever observed through read symbols can be
    deduplicated by what those reads return.
    """
    hints = {v: _fresh_hint() for v in _pattern_vars(proc.pattern)}
    state_positions: dict[int, set] = {}
    rules_by_head: dict[int, list] = {}
    for rule in bundle.rules.rules:
        rules_by_head.setdefault(rule.lhs.sym.uid, []).append(rule)
        for pos, arg in enumerate(rule.lhs.args):
            if isinstance(arg, App) and arg.sym.name == "state":
                state_positions.setdefault(rule.lhs.sym.uid, set()).add(pos)

    def scan_term(t: Term, in_out: bool):
        if isinstance(t, Var):
            if t in hints:
                hints[t]["occ"] += 1
                if in_out:
                    hints[t]["occ_out"] += 1
            return
        if isinstance(t, Tup):
            for a in t.items:
                scan_term(a, in_out)
            return
        if isinstance(t, App):
            is_read = t.sym.name in READ_SLOTS and t.sym.arity == 1
            for pos, a in enumerate(t.args):
                if isinstance(a, Var) and a in hints:
                    h = hints[a]
                    h["occ"] += 1
                    if pos in state_positions.get(t.sym.uid, ()):
                        h["state"] = True
                    if ((t.sym.name, t.sym.arity) in WRITE_FAMILY
                            and pos > 0):
                        h["written"] = True
                    if is_read:
                        h["reads"].add(t.sym.name)
                        h["occ_read"] += 1
                    if in_out and t.sym.public:
                        h["occ_out"] += 1
                else:
                    scan_term(a, in_out and t.sym.public)

    def completions_for(sym, hole):
        for rule in rules_by_head.get(sym.uid, ()):
            if not rule.lhs.args:
                continue
            shape = rule.lhs.args[0]
            if not shape.has_var:
                continue
            hints[hole]["guard_shapes"].append(shape)
            shape_vars = [s for s in subterms(shape) if isinstance(s, Var)]
            fill = {v: att_term(1) for v in shape_vars}
            hints[hole]["completions"].append(apply_subst(shape, fill))
            # a variant rooted in a platform value, not just noise
            pd = bundle.sig.lookup("pd", 0)
            if pd is not None:
                fill[shape_vars[0]] = app(pd, ())
                hints[hole]["completions"].append(apply_subst(shape, fill))

    def scan_guard(p: IfElse):
        for left, right in ((p.left, p.right), (p.right, p.left)):
            if isinstance(left, Var) and left in hints and not right.has_var:
                hints[left]["pins"].append(right)
            if (isinstance(left, App) and len(left.args) == 1
                    and isinstance(left.args[0], Var)
                    and left.args[0] in hints and not right.has_var):
                hole = left.args[0]
                completions_for(left.sym, hole)
                dead_then = isinstance(p.then_body, Nil)
                dead_else = isinstance(p.else_body, Nil)
                if left.sym.name in READ_SLOTS and dead_then != dead_else:
                    keep_equal = dead_then is False
                    hints[hole]["filters"].append(
                        (left.sym, bundle.normalize(right), keep_equal))

    def scan(p: Process):
        if isinstance(p, Nil):
            return
        if isinstance(p, Par):
            scan(p.left)
            scan(p.right)
        elif isinstance(p, (Repl, New)):
            scan(p.body)
        elif isinstance(p, In):
            scan_term(p.channel, False)
            for _, t in p.eq_tests:
                scan_term(t, False)
            scan(p.body)
        elif isinstance(p, Out):
            scan_term(p.channel, False)
            scan_term(p.payload, True)
            scan(p.body)
        elif isinstance(p, IfElse):
            scan_guard(p)
            scan_term(p.left, False)
            scan_term(p.right, False)
            scan(p.then_body)
            scan(p.else_body)
        elif isinstance(p, Let):
            scan_term(p.rhs, False)
            scan(p.body)

    scan(proc.body)
    for h in hints.values():
        h["read_only"] = h["occ"] > 0 and h["occ_read"] == h["occ"]
        h["opaque"] = (h["occ"] == h["occ_out"] and h["occ_read"] == 0
                       and not h["state"] and not h["written"]
                       and not h["pins"] and not h["completions"])
    return hints


_TIER_CACHE: dict = {}


def _complete_write(arg_pats: tuple, binding: dict, values: list,
                    recipes: dict):
    """Fill the non-state arguments of a write left-hand side.

    The state match may already bind some argument variables (entry
    authentication); those must resolve to values a recipe exists for.
    Free positions range over the supplied value list. Yields
    (args, binding) pairs."""
    def go(i: int, bnd: dict, acc: list):
        if i == len(arg_pats):
            yield tuple(acc), bnd
            return
        inst = apply_subst(arg_pats[i], bnd)
        if not inst.has_var:
            if inst.tid in recipes:
                acc.append(inst)
                yield from go(i + 1, bnd, acc)
                acc.pop()
            return
        for v in values:
            nxt = match_pattern(inst, v, bnd)
            if nxt is not None:
                acc.append(v)
                yield from go(i + 1, nxt, acc)
                acc.pop()

    yield from go(0, binding, [])


def manufactured_states(m: KnowledgeSet, bundle: TheoryBundle,
                        budget: ExploreBudget = DEFAULT_EXPLORE) -> list:
    """(state, recipe) pairs built by driving known states through the
    publicly usable write interface.

    Chains start from the most recently learned states and draw small
    known values plus attacker names; each round applies every public
    write rule once, to the configured depth and cap. The verifier
    consults this tier too: a trigger state reachable by recipe alone
    counts as reachable even if no transition ever carries it.
    """
    key = (id(bundle), m._tids, budget.state_tier_depth,
           budget.state_tier_cap)
    hit = _TIER_CACHE.get(key)
    if hit is not None:
        return hit
    index = _index_for(m, bundle)
    recipes: dict[int, Term] = {}
    states: list[Term] = []
    for t in index.terms():
        if isinstance(t, App) and t.sym.name == "state":
            recipes[t.tid] = index.recipe_for(t)
            states.append(t)
    out: list[tuple] = []
    if not states:
        _TIER_CACHE[key] = out
        return out

    pool = [att_term(k + 1) for k in range(min(2, budget.attacker_names))]
    values: list[Term] = []
    have_v: set[int] = set()

    def value(t: Term, recipe: Term):
        if t.tid not in have_v:
            have_v.add(t.tid)
            values.append(t)
            recipes.setdefault(t.tid, recipe)

    for t in index.terms():
        if t.size <= 3 and not (isinstance(t, App) and t.sym.name == "state"):
            value(t, index.recipe_for(t))
    prog = bundle.sig.lookup("prog", 1)
    for a in pool:
        value(a, a)
        if prog is not None:
            value(app(prog, (a,)), app(prog, (a,)))
    for a in pool:
        for b in pool:
            value(tup((a, b)), tup((a, b)))

    write_rules = [r for r in bundle.rules.rules
                   if (r.lhs.sym.name, r.lhs.sym.arity) in WRITE_FAMILY
                   and r.lhs.sym.public and r.lhs.args]
    bases = list(reversed(states))  # most recent knowledge first
    reachable = {t.tid for t in states}
    for _ in range(budget.state_tier_depth):
        fresh: list[Term] = []
        for rule in write_rules:
            state_pat = rule.lhs.args[0]
            rest = rule.lhs.args[1:]
            for base in bases:
                binding = match_pattern(state_pat, base)
                if binding is None:
                    continue
                for args, _ in _complete_write(rest, binding, values,
                                               recipes):
                    result = bundle.normalize(app(rule.lhs.sym,
                                                  (base,) + args))
                    if not (isinstance(result, App)
                            and result.sym.name == "state"):
                        continue
                    if result.tid in reachable:
                        continue
                    recipe = app(rule.lhs.sym,
                                 (recipes[base.tid],)
                                 + tuple(recipes[a.tid] for a in args))
                    recipes.setdefault(result.tid, recipe)
                    reachable.add(result.tid)
                    fresh.append(result)
                    out.append((result, recipe))
                    if len(out) >= budget.state_tier_cap:
                        _TIER_CACHE[key] = out
                        return out
        bases = fresh
        if not bases:
            break
    _TIER_CACHE[key] = out
    return out


class _SiteFull(Exception):
    pass


def _passes_filters(t: Term, filters: list, bundle: TheoryBundle) -> bool:
    for sym, value, keep_equal in filters:
        got = bundle.normalize(app(sym, (t,)))
        if (got is value) != keep_equal:
            return False
    return True


def instantiate_attacker_inputs(pattern: Term, m: KnowledgeSet,
                                bundle: TheoryBundle,
                                budget: ExploreBudget = DEFAULT_EXPLORE,
                                hints: dict | None = None,
                                site: str = "input",
                                stats: dict | None = None) -> list:
    """(substitution, recipe) pairs the environment can send for pattern.

    Whole-pattern replay of analyzed knowledge comes first. Remaining
    holes get priority-ordered candidates: pinned comparison values and
    guard completions, then state material for state-tested holes
    (known states before manufactured ones, pruned by dead-branch
    filters, deduplicated by read projection when the continuation only
    reads them), then small knowledge members with constructed terms
    ahead of bare constants, attacker pool names, and a shallow public
    constructor layer. Hole usage picks the width: a hole that only
    flows back out over public structure gets one representative.
    Multi-hole products enumerate fair-diagonally so low-priority
    indices combine before any single list is exhausted, and a site
    that overflows its budget is truncated, never failed.
    """
    index = _index_for(m, bundle)
    results: list = []
    seen: set[int] = set()
    truncated = False

    def emit(sub: dict, recipe: Term, message: Term):
        if message.tid in seen:
            return
        if len(results) >= budget.max_candidates_per_site:
            raise _SiteFull
        seen.add(message.tid)
        results.append((sub, recipe))

    holes = _pattern_vars(pattern)
    try:
        for t in index.terms():
            binding = match_pattern(pattern, t)
            if binding is not None:
                emit(binding, index.recipe_for(t), t)
        if holes:
            _synthesize(pattern, holes, m, bundle, budget, hints, emit)
    except _SiteFull:
        truncated = True
    if truncated and stats is not None:
        stats["sites_truncated"] = stats.get("sites_truncated", 0) + 1
        stats.setdefault("truncated_at", []).append(site)
    return results


def _synthesize(pattern: Term, holes: list, m: KnowledgeSet,
                bundle: TheoryBundle, budget: ExploreBudget,
                hints: dict | None, emit) -> None:
    # ground fragments of the pattern must be deducible to synthesize
    ground_recipe: dict[int, Term] = {}

    def fragment_recipes(t: Term) -> bool:
        if not t.has_var:
            r = _deduce(m, bundle.normalize(t), bundle, budget)
            if r is None:
                return False
            ground_recipe[t.tid] = r
            return True
        if isinstance(t, Tup):
            return all(fragment_recipes(i) for i in t.items)
        if isinstance(t, App):
            return all(fragment_recipes(a) for a in t.args)
        return True  # a hole

    if not fragment_recipes(pattern):
        return

    if hints is None:
        hints = {}

    index = _index_for(m, bundle)
    pool = [att_term(k + 1) for k in range(budget.attacker_names)]
    single = len(holes) == 1
    width = budget.site_width if single else budget.hole_width
    state_width = (budget.single_state_width if single
                   else budget.state_width)
    unary = [sym for sym in bundle.sig.symbols()
             if sym.public and sym.arity == 1
             and (sym.name, sym.arity) not in WRITE_FAMILY
             and sym.name not in READ_SLOTS
             and not bundle.rules.is_destructor(sym)]
    member_terms = index.terms()

    candidates: dict[Var, list] = {}
    for v in holes:
        hint = hints.get(v) or _fresh_hint()
        cand: list[tuple] = []
        have: set[int] = set()
        proj_seen: set[tuple] = set()
        read_syms = (sorted(hint["reads"]) if hint.get("read_only")
                     else None)

        def take(term: Term, recipe: Term, is_state: bool = False) -> None:
            if term.tid in have:
                return
            have.add(term.tid)
            if is_state and read_syms:
                parts = []
                for rn in read_syms:
                    sym = bundle.sig.lookup(rn, 1)
                    parts.append(bundle.normalize(app(sym, (term,))).tid)
                key = tuple(parts)
                if key in proj_seen:
                    return  # same view through every read the code does
                proj_seen.add(key)
            cand.append((term, recipe))

        if hint.get("opaque"):
            take(pool[0], pool[0])
            candidates[v] = cand
            continue

        # priority material rides above the width cap
        for t in hint["pins"]:
            tn = bundle.normalize(t)
            r = _deduce(m, tn, bundle, budget)
            if r is not None:
                take(tn, r)
        for t in hint["completions"]:
            tn = bundle.normalize(t)
            take(tn, tn)  # public constructors over pool names and pd
        for shape in hint["guard_shapes"]:
            # guards expecting a constructed shape can also be satisfied
            # over genuine material: wrap recent knowledge in the shape's
            # root constructor when the result still fits the guard
            if not (isinstance(shape, App) and shape.sym.arity == 1
                    and shape.sym.public):
                continue
            n = 0
            for t in reversed(member_terms):
                if n >= 4:
                    break
                built = bundle.normalize(app(shape.sym, (t,)))
                if match_pattern(shape, built) is None:
                    continue
                take(built, app(shape.sym, (index.recipe_for(t),)))
                n += 1
        if hint["state"]:
            n = 0
            tier = [(t, index.recipe_for(t)) for t in member_terms
                    if isinstance(t, App) and t.sym.name == "state"]
            tier += manufactured_states(m, bundle, budget)
            for t, r in tier:
                if n >= state_width:
                    break
                if not _passes_filters(t, hint["filters"], bundle):
                    continue
                before = len(cand)
                take(t, r, is_state=True)
                n += len(cand) - before

        floor = len(cand)

        def full() -> bool:
            return len(cand) - floor >= width

        # constructed members before bare constants; identities matter
        # more often than tags at a typical hole
        for t in member_terms:
            if full():
                break
            if isinstance(t, App) and t.sym.name == "state":
                continue
            if t.size > 1 and t.size <= 3:
                take(t, index.recipe_for(t))
        if not full():
            take(pool[0], pool[0])
        for sym in unary:
            if full():
                break
            take(app(sym, (pool[0],)), app(sym, (pool[0],)))
        for t in member_terms:
            if full():
                break
            if isinstance(t, App) and t.sym.name == "state":
                continue
            if single or t.size <= budget.small_member_size:
                take(t, index.recipe_for(t))
        if single or hint["written"]:
            for a in pool[:2]:
                for b in pool[:2]:
                    if full():
                        break
                    take(tup((a, b)), tup((a, b)))
        if single:
            for sym in unary:
                for t in member_terms:
                    if full():
                        break
                    if t.size <= 3 and not (isinstance(t, App)
                                            and t.sym.name == "state"):
                        take(app(sym, (t,)),
                             app(sym, (index.recipe_for(t),)))
        candidates[v] = cand

    lists = [candidates[v] for v in holes]
    if any(not c for c in lists):
        return

    def emit_vector(vec: tuple) -> None:
        sub = {}
        recipes = {}
        for v, i in zip(holes, vec):
            term, recipe = candidates[v][i]
            sub[v] = term
            recipes[v] = recipe
        message = bundle.normalize(apply_subst(pattern, sub))
        recipe = _recipe_of_pattern(pattern, recipes, ground_recipe)
        emit(sub, recipe, message)

    # fair-diagonal product: shells by max index, so early candidates
    # combine with each other before any list runs deep
    longest = max(len(c) for c in lists)
    for shell in range(longest):
        if not any(len(c) > shell for c in lists):
            break

        def rec(j: int, acc: list, hit: bool):
            if j == len(lists):
                if hit:
                    emit_vector(tuple(acc))
                return
            top = min(shell, len(lists[j]) - 1)
            for i in range(top + 1):
                acc.append(i)
                rec(j + 1, acc, hit or i == shell)
                acc.pop()

        rec(0, [], False)


def _recipe_of_pattern(pattern: Term, hole_recipes: dict,
                       ground_recipe: dict) -> Term:
    if not pattern.has_var:
        return ground_recipe[pattern.tid]
    if isinstance(pattern, Var):
        return hole_recipes[pattern]
    if isinstance(pattern, Tup):
        return tup(tuple(_recipe_of_pattern(i, hole_recipes, ground_recipe)
                         for i in pattern.items))
    if isinstance(pattern, App):
        return app(pattern.sym,
                   tuple(_recipe_of_pattern(a, hole_recipes, ground_recipe)
                         for a in pattern.args))
    raise TypeError("bad pattern: %r" % (pattern,))


# the public one-step relation


def step(cfg: Configuration, bundle: TheoryBundle,
         budget: ExploreBudget = DEFAULT_EXPLORE) -> list[Configuration]:
    """All single kernel transitions out of cfg, in deterministic order."""
    out: list[Configuration] = []
    for idx in range(len(cfg.live)):
        applied = _internal(cfg, idx, bundle)
        if applied is not None:
            out.append(applied[0])
            continue
        spawned = _spawn(cfg, idx, budget)
        if spawned is not None:
            out.append(spawned[0])
        absorbed = _absorb(cfg, idx, bundle, budget)
        if absorbed is not None:
            out.append(absorbed[0])
        path, proc = cfg.live[idx]
        if isinstance(proc, In):
            channel = bundle.normalize(proc.channel)
            if _deduce(cfg.knowledge, channel, bundle, budget) is not None:
                hints = _hints_for(proc, bundle)
                for sub, recipe in instantiate_attacker_inputs(
                        proc.pattern, cfg.knowledge, bundle, budget,
                        hints=hints, site=path):
                    out.append(_apply_attacker_in(cfg, idx, sub, recipe,
                                                  bundle)[0])
    for i, j, binding in _comm_pairs(cfg, bundle, budget, private_only=False):
        out.append(_apply_comm(cfg, i, j, binding, bundle, budget)[0])
    return out


# compressed exploration


def _forced_comm(cfg: Configuration, pairs: list) -> tuple | None:
    """First private pairing whose ambiguity is pure replica symmetry.

    Pairs are grouped into components by shared endpoints. A component
    whose senders are all structurally identical and whose receivers
    are all structurally identical has one outcome up to swapping
    interchangeable copies, so its first pair can fire eagerly; the
    channel is private, so no other consumer exists and any copy left
    over still serves every later sender the same way.
    """
    parent: dict = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in pairs:
        parent.setdefault(("o", i), ("o", i))
        parent.setdefault(("n", j), ("n", j))
        ra, rb = find(("o", i)), find(("n", j))
        if ra != rb:
            parent[rb] = ra
    groups: dict = {}
    for pair in pairs:
        groups.setdefault(find(("o", pair[0])), []).append(pair)
    for group in groups.values():
        senders = {_proc_digest(cfg.live[i][1]) for i, _, _ in group}
        receivers = {_proc_digest(cfg.live[j][1]) for _, j, _ in group}
        if len(senders) == 1 and len(receivers) == 1:
            return group[0]
    return None


def _tau_close(cfg: Configuration, bundle: TheoryBundle,
               budget: ExploreBudget) -> Configuration:
    """Apply forced transitions to a fixpoint: deterministic per-process
    rules, replication unfolds up to bound, outputs the environment can
    hear, and private communications whose only ambiguity is between
    structurally identical copies. All of these commute up to symmetry
    and knowledge only grows, so compressing them preserves knowledge
    reachability."""
    steps = 0
    while True:
        steps += 1
        if steps > budget.max_tau_steps:
            raise BudgetError("internal-step closure did not settle")
        progressed = False
        for idx in range(len(cfg.live)):
            applied = _internal(cfg, idx, bundle)
            if applied is None:
                applied = _spawn(cfg, idx, budget)
            if applied is None:
                applied = _absorb(cfg, idx, bundle, budget)
            if applied is not None:
                cfg = applied[0]
                progressed = True
                break
        if progressed:
            continue
        pairs = _comm_pairs(cfg, bundle, budget)
        if pairs:
            forced = _forced_comm(cfg, pairs)
            if forced is not None:
                i, j, binding = forced
                cfg = _apply_comm(cfg, i, j, binding, bundle, budget)[0]
                progressed = True
        if not progressed:
            return cfg


_HINT_CACHE: dict = {}


def _hints_for(proc: In, bundle: TheoryBundle) -> dict:
    key = (id(bundle), proc)
    hit = _HINT_CACHE.get(key)
    if hit is None:
        hit = _hole_hints(proc, bundle)
        _HINT_CACHE[key] = hit
    return hit


def _visible_successors(cfg: Configuration, bundle: TheoryBundle,
                        budget: ExploreBudget,
                        stats: dict | None = None) -> list[Configuration]:
    """Successor configurations after one environment-visible choice.

    Each input site contributes its synthesized vectors as one column;
    ambiguous process pairings form another. Structurally identical
    sites and pairings collapse into one representative, since the
    copies produce canonically equal successors. Columns hold cheap
    descriptors and are interleaved round-robin, so every site's best
    candidates survive the fanout cap rather than whichever site sits
    first in the live list, and only the survivors are built out.
    """
    site_budget = budget
    if budget.max_candidates_per_site > budget.fanout_width:
        # a column can never contribute past the fanout, so synthesis
        # beyond it would be discarded unbuilt
        site_budget = replace(budget,
                              max_candidates_per_site=budget.fanout_width)
    columns: list[list[tuple]] = []
    pair_shapes: set = set()
    pair_column: list[tuple] = []
    for i, j, binding in _comm_pairs(cfg, bundle, budget):
        shape = (_proc_digest(cfg.live[i][1]), _proc_digest(cfg.live[j][1]))
        if shape in pair_shapes:
            continue
        pair_shapes.add(shape)
        pair_column.append((None, i, j, binding))
    if pair_column:
        columns.append(pair_column)
    site_shapes: set = set()
    for idx, (path, proc) in enumerate(cfg.live):
        if not isinstance(proc, In):
            continue
        shape = _proc_digest(proc)
        if shape in site_shapes:
            continue
        site_shapes.add(shape)
        channel = bundle.normalize(proc.channel)
        if _deduce(cfg.knowledge, channel, bundle, budget) is None:
            continue
        hints = _hints_for(proc, bundle)
        column = [(idx, sub, recipe)
                  for sub, recipe in instantiate_attacker_inputs(
                      proc.pattern, cfg.knowledge, bundle, site_budget,
                      hints=hints, site=path, stats=stats)]
        if column:
            columns.append(column)
    picked: list[tuple] = []
    depth = 0
    while len(picked) < budget.fanout_width:
        row = [col[depth] for col in columns if depth < len(col)]
        if not row:
            break
        picked.extend(row)
        depth += 1
    dropped = sum(len(c) for c in columns) - len(picked)
    if dropped > 0:
        picked = picked[:budget.fanout_width]
        dropped = sum(len(c) for c in columns) - len(picked)
        if stats is not None:
            stats["fanout_dropped"] = stats.get("fanout_dropped", 0) + dropped
    out: list[Configuration] = []
    for item in picked:
        if item[0] is None:
            _, i, j, binding = item
            succ = _apply_comm(cfg, i, j, binding, bundle, budget)[0]
        else:
            idx, sub, recipe = item
            succ = _apply_attacker_in(cfg, idx, sub, recipe, bundle)[0]
        out.append(_tau_close(succ, bundle, budget))
    return out


def _live_counts(cfg: Configuration) -> Counter:
    return Counter(_proc_digest(p) for _, p in cfg.live
                   if not isinstance(p, Nil))


def _subsumed_by_parent(parent: Configuration, parent_counts: Counter,
                        succ: Configuration, bundle: TheoryBundle,
                        budget: ExploreBudget) -> bool:
    """True when succ can do nothing parent cannot.

    Holds when the step consumed or killed processes without leaving a
    new residual, and every term it published was already derivable.
    More live processes and more knowledge never disable a transition
    in this calculus, so pruning such a successor loses no reachable
    knowledge. Typical case: an input whose guard rejects the message.
    """
    for t in succ.knowledge:
        if t not in parent.knowledge:
            if _deduce(parent.knowledge, t, bundle, budget) is None:
                return False
    counts = _live_counts(succ)
    counts.subtract(parent_counts)
    return all(v <= 0 for v in counts.values())


@dataclass
class ExploreResult:
    configs: list
    knowledge: KnowledgeSet      # union over every visited configuration
    witnesses: dict              # term tid -> Configuration that first knew it
    explored: int = 0
    depth_reached: int = 0
    inconclusive: bool = False   # breadth ceiling hit; coverage was cut
    saturated: bool = False      # frontier drained before the depth bound
    stopped_early: bool = False  # stop predicate fired
    stats: dict = field(default_factory=dict)


def explore(initial: Configuration, bundle: TheoryBundle,
            budget: ExploreBudget = DEFAULT_EXPLORE,
            stop=None) -> ExploreResult:
    """Deterministic breadth-first search up to the budget's bounds.

    Reaching the depth bound with work left is the normal bounded
    outcome, reported through depth_reached and saturated; inconclusive
    flags the one failure mode that silently loses coverage inside the
    bounds, the visited-set ceiling. Successors that only lost ground
    against their parent are pruned as subsumed. A stop predicate sees
    every newly learned term and ends the search at the first truthy
    answer, keeping the breadth-first guarantee that no shallower
    witness exists.
    """
    stats: dict = {}
    root = _tau_close(initial, bundle, budget)
    visited = {_canonical_digest(root)}
    configs = [root]
    witnesses: dict[int, Configuration] = {}
    union: list[Term] = []
    stopped = False

    def record(cfg: Configuration) -> bool:
        hit = False
        for t in cfg.knowledge:
            if t.tid not in witnesses:
                witnesses[t.tid] = cfg
                union.append(t)
                if stop is not None and stop(t):
                    hit = True
        return hit

    stopped = record(root)
    frontier = [root]
    depth = 0
    inconclusive = False
    while frontier and depth < budget.max_transitions and not stopped:
        depth += 1
        next_frontier = []
        for cfg in frontier:
            parent_counts = _live_counts(cfg)
            for succ in _visible_successors(cfg, bundle, budget, stats):
                key = _canonical_digest(succ)
                if key in visited:
                    continue
                visited.add(key)
                if _subsumed_by_parent(cfg, parent_counts, succ, bundle,
                                       budget):
                    stats["subsumed"] = stats.get("subsumed", 0) + 1
                    continue
                configs.append(succ)
                if record(succ):
                    stopped = True
                next_frontier.append(succ)
                if stopped:
                    break
                if len(visited) > budget.frontier_ceiling:
                    inconclusive = True
                    next_frontier = []
                    frontier = []
                    break
            if inconclusive or stopped:
                break
        frontier = next_frontier
    stats["visited"] = len(visited)
    return ExploreResult(configs, KnowledgeSet(union), witnesses,
                         explored=len(configs), depth_reached=depth,
                         inconclusive=inconclusive,
                         saturated=not frontier and not stopped,
                         stopped_early=stopped,
                         stats=stats)


# trace replay and rendering


def replay(initial: Configuration, bundle: TheoryBundle, events,
           budget: ExploreBudget = DEFAULT_EXPLORE) -> Configuration:
    """Re-run a trace event by event; raises ValueError on any mismatch."""
    cfg = initial
    for n, ev in enumerate(events):
        idx = None
        for i, (path, _) in enumerate(cfg.live):
            if path == ev.path:
                idx = i
                break
        if idx is None:
            raise ValueError("event %d: no process at path %s" % (n, ev.path))
        if ev.rule in ("NIL", "PAR", "NEW", "IF_T", "IF_F", "LET"):
            applied = _internal(cfg, idx, bundle)
            if applied is None or applied[1].rule != ev.rule:
                raise ValueError("event %d: %s does not apply at %s"
                                 % (n, ev.rule, ev.path))
            cfg = applied[0]
        elif ev.rule == "BANG":
            applied = _spawn(cfg, idx, budget)
            if applied is None:
                raise ValueError("event %d: replication bound hit at %s"
                                 % (n, ev.path))
            cfg = applied[0]
        elif ev.rule == "COMM" and ev.path2 is None:
            applied = _absorb(cfg, idx, bundle, budget)
            if applied is None:
                raise ValueError("event %d: output not absorbable at %s"
                                 % (n, ev.path))
            cfg = applied[0]
        elif ev.rule == "COMM":
            jdx = None
            for j, (path, _) in enumerate(cfg.live):
                if path == ev.path2:
                    jdx = j
                    break
            if jdx is None:
                raise ValueError("event %d: no receiver at %s" % (n, ev.path2))
            _, receiver = cfg.live[jdx]
            _, sender = cfg.live[idx]
            binding = match_pattern(receiver.pattern,
                                    bundle.normalize(sender.payload))
            if binding is None:
                raise ValueError("event %d: message does not match receiver"
                                 % n)
            cfg = _apply_comm(cfg, idx, jdx, binding, bundle, budget)[0]
        elif ev.rule == "ATTACKER_IN":
            _, proc = cfg.live[idx]
            message = eval_recipe(ev.recipe, cfg.knowledge, bundle)
            if message is not ev.message:
                raise ValueError("event %d: recipe rebuilds %s, trace says %s"
                                 % (n, print_term(message),
                                    print_term(ev.message)))
            binding = match_pattern(proc.pattern, message)
            if binding is None:
                raise ValueError("event %d: synthesized input does not match"
                                 % n)
            cfg = _apply_attacker_in(cfg, idx, binding, ev.recipe, bundle)[0]
        else:
            raise ValueError("event %d: unknown rule %s" % (n, ev.rule))
        last = cfg.events[-1]
        if ev.message is not None and last.message is not ev.message:
            raise ValueError("event %d: message mismatch" % n)
        if tuple(ev.added) != tuple(last.added):
            raise ValueError("event %d: knowledge delta mismatch" % n)
    return cfg


def knowledge_digest(m: KnowledgeSet) -> str:
    blob = "\n".join(sorted(print_term(t) for t in m)).encode()
    return hashlib.sha256(blob).hexdigest()


def trace_json(initial: Configuration, final: Configuration) -> str:
    events = []
    for ev in final.events:
        entry = {"rule": ev.rule, "path": ev.path}
        if ev.channel is not None:
            entry["channel"] = print_term(ev.channel)
        if ev.message is not None:
            entry["message"] = print_term(ev.message)
        if ev.recipe is not None:
            entry["recipe"] = print_term(ev.recipe)
        if ev.added:
            entry["knowledge_added"] = [print_term(t) for t in ev.added]
        if ev.path2 is not None:
            entry["path2"] = ev.path2
        events.append(entry)
    doc = {
        "initial": {
            "knowledge": [print_term(t) for t in initial.knowledge],
            "processes": [print_process(p) for _, p in initial.live],
        },
        "events": events,
        "final_knowledge_digest": knowledge_digest(final.knowledge),
    }
    return json.dumps(doc, indent=2)


def trace_text(final: Configuration) -> str:
    lines = []
    for n, ev in enumerate(final.events, start=1):
        bits = ["%3d. %-11s %s" % (n, ev.rule, ev.path)]
        if ev.channel is not None:
            bits.append("on %s" % print_term(ev.channel))
        if ev.message is not None:
            bits.append(print_term(ev.message))
        if ev.recipe is not None:
            bits.append("via %s" % print_term(ev.recipe))
        if ev.added:
            bits.append("(+%d known)" % len(ev.added))
        lines.append(" ".join(bits))
    return "\n".join(lines)
