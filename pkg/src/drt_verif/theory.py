"""The platform equational theory: crypto, program loading, platform state.

The platform state is a term state(tpm(pcr), cpu(int, cache), drt(init, pp,
lock), smram(stm, smi)). Read symbols project components; write symbols are
guarded either by a private access token (tpm_acc, cpu_acc) or by knowledge
of a loaded program's private entry constant. The bounded variant adds
is_small / is_big chain tests and keeps set_pcr for the register overwrite
path used once a chain exceeds the bound.
"""

from __future__ import annotations

from .rewriting import RewriteSystem, Rule, normalize
from .terms import App, Signature, Term, Tup, app, tup, var_term

PUBLIC_CONSTANTS = (
    "os", "ps", "pd", "true", "false", "bot",
    "reset_req", "reset_resp", "extend_req", "extend_resp", "ext_channel",
    "drt_req", "drt_resp", "tag_unseal", "tag_plain",
)

PRIVATE_CONSTANTS = ("tpm_acc", "cpu_acc", "cpu_tpm")

READ_SLOTS = ("pcr", "int", "cache", "init", "pp", "lock", "stm", "smi")

WRITE_FAMILY = frozenset({
    ("reset", 3), ("extend", 3), ("set_pcr", 3), ("set_int", 3),
    ("cache", 2), ("flush_smi", 1), ("flush_stm", 1), ("set_init", 3),
    ("set_pp", 3), ("set_lock", 3), ("set_stm", 3), ("set_smih", 3),
})


def _v(ident: str):
    return var_term(ident)


class TheoryBundle:
    """Signature plus rewrite system for one theory variant."""

    def __init__(self, sig: Signature, rules: RewriteSystem, bound: int | None,
                 weakened_stm: bool, cache_helpers: bool):
        self.sig = sig
        self.rules = rules
        self.bound = bound
        self.weakened_stm = weakened_stm
        self.cache_helpers = cache_helpers

    def sym(self, name: str, arity: int | None = None):
        found = self.sig.lookup(name, arity)
        if found is None:
            raise KeyError("no symbol %s in theory" % name)
        return found

    def constant(self, name: str) -> Term:
        return app(self.sym(name, 0), ())

    def public_constants(self) -> list[Term]:
        return [app(s, ()) for s in self.sig.symbols() if s.arity == 0 and s.public]

    def private_symbols(self):
        return [s for s in self.sig.symbols() if s.private]

    def write_rules(self) -> list[Rule]:
        return [r for r in self.rules.rules
                if (r.lhs.sym.name, r.lhs.sym.arity) in WRITE_FAMILY]

    def normalize(self, t: Term) -> Term:
        return normalize(t, self.rules)


def classify_symbol(bundle: TheoryBundle, f) -> str:
    """A symbol heading some rule left side is a destructor."""
    return "destructor" if bundle.rules.is_destructor(f) else "constructor"


def declare_signature(sig: Signature | None = None) -> Signature:
    """Declare every symbol of the platform theory into sig."""
    if sig is None:
        sig = Signature()
    for c in PUBLIC_CONSTANTS:
        sig.declare(c, 0)
    for c in PRIVATE_CONSTANTS:
        sig.declare(c, 0, private=True)
    sig.declare("senc", 2)
    sig.declare("sdec", 2)
    sig.declare("h", 1)
    sig.declare("seal", 2)
    sig.declare("unseal", 2, private=True)
    sig.declare("prog", 1)
    sig.declare("get_entry", 1, private=True)
    sig.declare("tpm_ch", 1, private=True)
    sig.declare("fnonce", 1, private=True)
    sig.declare("state", 4, private=True)
    sig.declare("tpm", 1, private=True)
    sig.declare("cpu", 2, private=True)
    sig.declare("drt", 3, private=True)
    sig.declare("smram", 2, private=True)
    for r in READ_SLOTS:
        sig.declare(r, 1)
    sig.declare("reset", 3)
    sig.declare("extend", 3)
    sig.declare("set_pcr", 3, private=True)
    sig.declare("is_small", 1, private=True)
    sig.declare("is_big", 1, private=True)
    sig.declare("set_int", 3)
    sig.declare("cache", 2)
    sig.declare("flush_smi", 1)
    sig.declare("flush_stm", 1)
    sig.declare("set_init", 3)
    sig.declare("set_pp", 3)
    sig.declare("set_lock", 3)
    sig.declare("set_stm", 3)
    sig.declare("set_smih", 3)
    return sig


def chain_of(*values: Term) -> Term:
    """Left-nested hash chain: chain_of(t0, v1, ..., vn)."""
    if not values:
        raise ValueError("chain_of needs at least the reset value")
    sig = _shared_sig()
    h = sig.lookup("h", 1)
    acc = values[0]
    for v in values[1:]:
        acc = app(h, (tup((acc, v)),))
    return acc


def chain_length(t: Term) -> int | None:
    """Number of extensions when t is a chain rooted at ps or pd, else None."""
    n = 0
    while isinstance(t, App) and t.sym.name == "h" and t.sym.arity == 1:
        arg = t.args[0]
        if not isinstance(arg, Tup) or len(arg.items) != 2:
            return None
        t = arg.items[0]
        n += 1
    if isinstance(t, App) and t.sym.arity == 0 and t.sym.name in ("ps", "pd"):
        return n
    return None


_SHARED_SIG: Signature | None = None


def _shared_sig() -> Signature:
    global _SHARED_SIG
    if _SHARED_SIG is None:
        _SHARED_SIG = declare_signature()
    return _SHARED_SIG


class ProgramRegistry:
    """Issues a fresh private entry constant n_P per program name."""

    def __init__(self, sig: Signature):
        self.sig = sig
        self._entries: dict[str, Term] = {}

    def program_identity(self, name: str) -> tuple[Term, Term]:
        """Returns (entry constant, public identity prog(entry))."""
        entry = self._entries.get(name)
        if entry is None:
            entry = app(self.sig.declare("n" + name, 0, private=True), ())
            self._entries[name] = entry
        prog = self.sig.lookup("prog", 1)
        return entry, app(prog, (entry,))

    def names(self):
        return list(self._entries)


def _state_pat(pcr=None, cpu_pair=None, drt_triple=None, smram_pair=None,
               x=("x1", "x2", "x3", "x4")):
    """State pattern with given component patterns, the rest catch-all vars."""
    sig = _shared_sig()
    st = sig.lookup("state", 4)
    tpm_, cpu_, drt_, smram_ = (sig.lookup("tpm", 1), sig.lookup("cpu", 2),
                                sig.lookup("drt", 3), sig.lookup("smram", 2))
    slots = [
        app(tpm_, (pcr,)) if pcr is not None else _v(x[0]),
        app(cpu_, cpu_pair) if cpu_pair is not None else _v(x[1]),
        app(drt_, drt_triple) if drt_triple is not None else _v(x[2]),
        app(smram_, smram_pair) if smram_pair is not None else _v(x[3]),
    ]
    return app(st, tuple(slots))


def _small_rules(sig: Signature, b: int) -> list[Rule]:
    """is_small accepts chains of length 0..b-1 rooted at pd or ps."""
    is_small = sig.lookup("is_small", 1)
    true = app(sig.lookup("true", 0), ())
    rules = []
    for i in range(b):
        for root in ("pd", "ps"):
            t: Term = app(sig.lookup(root, 0), ())
            for k in range(1, i + 1):
                t = app(sig.lookup("h", 1), (tup((t, _v("v%d" % k))),))
            rules.append(Rule("is_small_%d_%s" % (i, root), app(is_small, (t,)), true))
    return rules


def _big_rule(sig: Signature, b: int) -> Rule:
    """is_big accepts any chain shape of b+1 or more extensions; the root
    variable absorbs longer prefixes."""
    is_big = sig.lookup("is_big", 1)
    true = app(sig.lookup("true", 0), ())
    t: Term = _v("v0")
    for k in range(1, b + 2):
        t = app(sig.lookup("h", 1), (tup((t, _v("v%d" % k))),))
    return Rule("is_big", app(is_big, (t,)), true)


def build_rules(sig: Signature, bound: int | None = None, weakened_stm: bool = False,
                cache_helpers: bool = False) -> list[Rule]:
    def s(name, arity=None):
        return sig.lookup(name, arity)

    def c(name):
        return app(s(name, 0), ())

    xv, xk, xp = _v("x_val"), _v("x_key"), _v("x_pcr")
    y, v, z = _v("y"), _v("value"), _v("z")
    x1, x2, x3 = _v("x1"), _v("x2"), _v("x3")
    y1, y2, y3 = _v("y1"), _v("y2"), _v("y3")
    z1, z2 = _v("z1"), _v("z2")
    w1, w2 = _v("w1"), _v("w2")
    h, prog = s("h", 1), s("prog", 1)
    tpm_acc, cpu_acc = c("tpm_acc"), c("cpu_acc")
    true, false = c("true"), c("false")

    rules = [
        Rule("sdec_senc", app(s("sdec"), (app(s("senc"), (xv, xk)), xk)), xv),
        Rule("unseal_seal", app(s("unseal"), (app(s("seal"), (xv, xp)), xp)), xv),
        Rule("get_entry_prog", app(s("get_entry"), (app(prog, (xv,)),)), xv),
    ]

    reads = {
        "pcr": (_state_pat(pcr=y), y),
        "int": (_state_pat(cpu_pair=(y1, y2)), y1),
        "cache": (_state_pat(cpu_pair=(y1, y2)), y2),
        "init": (_state_pat(drt_triple=(y1, y2, y3)), y1),
        "pp": (_state_pat(drt_triple=(y1, y2, y3)), y2),
        "lock": (_state_pat(drt_triple=(y1, y2, y3)), y3),
        "stm": (_state_pat(smram_pair=(y1, y2)), y1),
        "smi": (_state_pat(smram_pair=(y1, y2)), y2),
    }
    for slot in READ_SLOTS:
        pat, out = reads[slot]
        rules.append(Rule("read_" + slot, app(s(slot, 1), (pat,)), out))

    rules.extend([
        Rule("reset_pd",
             app(s("reset"), (_state_pat(pcr=y), tpm_acc, c("pd"))),
             _state_pat(pcr=c("pd"))),
        Rule("reset_ps",
             app(s("reset"), (_state_pat(pcr=y), tpm_acc, c("ps"))),
             _state_pat(pcr=c("ps"))),
        Rule("extend",
             app(s("extend"), (_state_pat(pcr=y), tpm_acc, v)),
             _state_pat(pcr=app(h, (tup((y, v)),)))),
        Rule("set_pcr",
             app(s("set_pcr"), (_state_pat(pcr=y), tpm_acc, v)),
             _state_pat(pcr=v)),
    ])

    if bound is not None:
        rules.extend(_small_rules(sig, bound))
        rules.append(_big_rule(sig, bound))

    rules.extend([
        Rule("set_int_acc",
             app(s("set_int"), (_state_pat(cpu_pair=(y1, y2)), cpu_acc, v)),
             _state_pat(cpu_pair=(v, y2))),
        Rule("set_int_entry",
             app(s("set_int"), (_state_pat(cpu_pair=(y1, y2),
                                           drt_triple=(z1, app(prog, (z2,)), true)), z2, v)),
             _state_pat(cpu_pair=(v, y2), drt_triple=(z1, app(prog, (z2,)), true))),
        Rule("cache_write",
             app(s("cache", 2), (_state_pat(cpu_pair=(y1, y2)), v)),
             _state_pat(cpu_pair=(y1, v))),
        Rule("flush_smi",
             app(s("flush_smi"), (_state_pat(cpu_pair=(y1, y2), smram_pair=(z1, z2)),)),
             _state_pat(cpu_pair=(y1, y2), smram_pair=(z1, y2))),
        Rule("flush_stm",
             app(s("flush_stm"), (_state_pat(cpu_pair=(y1, y2), drt_triple=(w1, w2, false),
                                             smram_pair=(z1, z2)),)),
             _state_pat(cpu_pair=(y1, y2), drt_triple=(w1, w2, false),
                        smram_pair=(y2, z2))),
    ])

    if weakened_stm:
        rules.append(Rule(
            "flush_stm_weak",
            app(s("flush_stm"), (_state_pat(cpu_pair=(y1, y2), smram_pair=(z1, z2)),)),
            _state_pat(cpu_pair=(y1, y2), smram_pair=(y2, z2))))

    rules.extend([
        Rule("set_init_acc",
             app(s("set_init"), (_state_pat(drt_triple=(y1, y2, y3)), cpu_acc, v)),
             _state_pat(drt_triple=(v, y2, y3))),
        Rule("set_pp_acc",
             app(s("set_pp"), (_state_pat(drt_triple=(y1, y2, y3)), cpu_acc, v)),
             _state_pat(drt_triple=(y1, v, y3))),
        Rule("set_pp_entry",
             app(s("set_pp"), (_state_pat(drt_triple=(app(prog, (y1,)), y2, y3)), y1, v)),
             _state_pat(drt_triple=(app(prog, (y1,)), v, y3))),
        Rule("set_pp_pair",
             app(s("set_pp"), (_state_pat(cpu_pair=(true, z), drt_triple=(y1, y2, y3),
                                          smram_pair=(app(prog, (z1,)), app(prog, (z2,)))),
                               tup((z1, z2)), v)),
             _state_pat(cpu_pair=(true, z), drt_triple=(y1, v, y3),
                        smram_pair=(app(prog, (z1,)), app(prog, (z2,))))),
        Rule("set_lock_acc",
             app(s("set_lock"), (_state_pat(drt_triple=(y1, y2, y3)), cpu_acc, v)),
             _state_pat(drt_triple=(y1, y2, v))),
        Rule("set_lock_entry",
             app(s("set_lock"), (_state_pat(drt_triple=(y1, app(prog, (y2,)), y3)), y2, v)),
             _state_pat(drt_triple=(y1, app(prog, (y2,)), v))),
        Rule("set_lock_pair",
             app(s("set_lock"), (_state_pat(cpu_pair=(true, z), drt_triple=(y1, y2, y3),
                                            smram_pair=(app(prog, (z1,)), app(prog, (z2,)))),
                                 tup((z1, z2)), v)),
             _state_pat(cpu_pair=(true, z), drt_triple=(y1, y2, v),
                        smram_pair=(app(prog, (z1,)), app(prog, (z2,))))),
    ])

    if cache_helpers:
        rules.extend([
            Rule("set_stm_acc",
                 app(s("set_stm"), (_state_pat(smram_pair=(y1, y2)), cpu_acc, v)),
                 _state_pat(smram_pair=(v, y2))),
            Rule("set_smih_acc",
                 app(s("set_smih"), (_state_pat(smram_pair=(y1, y2)), cpu_acc, v)),
                 _state_pat(smram_pair=(y1, v))),
        ])

    return rules


def build_theory(bound: int | None = None, weakened_stm: bool = False,
                 cache_helpers: bool = False) -> TheoryBundle:
    """The full rule set over the shared signature.

    bound=None gives the unbounded extend theory; bound=b adds the 2b
    is_small instances and the is_big rule.
    """
    if bound is not None and bound < 1:
        raise ValueError("bound must be a positive natural")
    sig = _shared_sig()
    rules = build_rules(sig, bound, weakened_stm, cache_helpers)
    return TheoryBundle(sig, RewriteSystem(rules), bound, weakened_stm, cache_helpers)


def make_state(bundle: TheoryBundle, pcr, int_flag, cache_val, init_val, pp_val,
               lock, stm_val, smi_val) -> Term:
    s = bundle.sig
    return app(s.lookup("state", 4), (
        app(s.lookup("tpm", 1), (pcr,)),
        app(s.lookup("cpu", 2), (int_flag, cache_val)),
        app(s.lookup("drt", 3), (init_val, pp_val, lock)),
        app(s.lookup("smram", 2), (stm_val, smi_val)),
    ))


def state_components(t: Term) -> tuple[Term, ...]:
    """All leaves of a state term in slot order: pcr, int, cache, init, pp,
    lock, stm, smi."""
    if not (isinstance(t, App) and t.sym.name == "state" and t.sym.arity == 4):
        raise ValueError("not a state term: %s" % t)
    tpm_, cpu_, drt_, smram_ = t.args
    return tpm_.args + cpu_.args + drt_.args + smram_.args


def theory_report(bundle: TheoryBundle) -> str:
    """Markdown table of every rule with its access guard."""
    lines = [
        "| rule | family | guard |",
        "| --- | --- | --- |",
    ]
    for r in bundle.rules.rules:
        fam = ("data" if r.label in ("sdec_senc", "unseal_seal") else
               "program" if r.label == "get_entry_prog" else
               "read" if r.label.startswith("read_") else
               "chain test" if r.label.startswith("is_") else "write")
        guard = "none"
        if isinstance(r.lhs, App):
            toks = [a for a in r.lhs.args
                    if isinstance(a, App) and a.sym.arity == 0 and a.sym.private]
            if toks:
                guard = ", ".join(t.sym.name for t in toks)
            elif r.label.endswith("_entry"):
                guard = "program entry argument"
            elif r.label.endswith("_pair"):
                guard = "loaded program entries, interrupts enabled"
            elif r.label == "flush_stm":
                guard = "drt lock false"
        lines.append("| %s | %s | %s |" % (r.label, fam, guard))
    return "\n".join(lines) + "\n"
