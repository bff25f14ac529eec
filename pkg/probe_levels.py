import time

from drt_verif import semantics as S
from drt_verif.model import (build_drt_model, expected_measurement_chain,
                             initial_configuration, private_message,
                             sealed_secret)
from drt_verif.terms import App

m = build_drt_model("exact")
cfg = initial_configuration(m)
budget = S.DEFAULT_EXPLORE
hchain = expected_measurement_chain(m)
hi = private_message(m)
kp = sealed_secret(m)
true = m.theory.constant("true")
drt_sym = m.theory.sym("drt", 3)


def goal_state(t):
    if not (isinstance(t, App) and t.sym.name == "state"):
        return False
    if t.args[0].args and t.args[0].args[0] is not hchain:
        return False
    d = t.args[2]
    return isinstance(d, App) and d.sym is drt_sym and d.args[2] is true


t0 = time.time()
root = S._tau_close(cfg, m.theory, budget)
print("tau root: %.1fs live=%d k=%d" % (time.time() - t0, len(root.live),
                                        len(root.knowledge)), flush=True)
visited = {S._canonical_digest(root)}
frontier = [root]
seen_tids = set(t.tid for t in root.knowledge)
hits = {}
for t in root.knowledge:
    if goal_state(t):
        hits.setdefault("goal", 0)
for level in range(1, budget.max_transitions + 1):
    t1 = time.time()
    nxt = []
    pruned = 0
    for c in frontier:
        pc = S._live_counts(c)
        for s in S._visible_successors(c, m.theory, budget):
            k = S._canonical_digest(s)
            if k in visited:
                continue
            visited.add(k)
            if S._subsumed_by_parent(c, pc, s, m.theory, budget):
                pruned += 1
                continue
            nxt.append(s)
            for t in s.knowledge:
                if t.tid in seen_tids:
                    continue
                seen_tids.add(t.tid)
                if goal_state(t):
                    hits.setdefault("goal", level)
                if t is hi:
                    hits.setdefault("hi_pp", level)
                if t is kp:
                    hits.setdefault("k_pp", level)
    frontier = nxt
    print("L%d: frontier=%d pruned=%d visited=%d terms=%d %.1fs hits=%r"
          % (level, len(frontier), pruned, len(visited), len(seen_tids),
             time.time() - t1, hits), flush=True)
    if not frontier:
        break
print("total %.1fs" % (time.time() - t0), flush=True)
