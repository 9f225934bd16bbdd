"""Session-key secrecy oracle.

Two stages:

* :func:`label_passive` lets an eavesdropper absorb every message of the
  honest run and asks whether a session key becomes derivable.
* :func:`label_active` explores a bounded number of interleaved sessions
  in which the adversary controls the network.  Each honest session runs
  the role script obtained from the message trees: it builds what it
  sends, and on receipt checks the components it can compute, binds the
  ones it cannot, opens ciphertexts it holds the key for and verifies
  signatures.  The adversary answers each receive with candidate messages
  synthesised from the receiver's expected shape over its own closure.

An attack is a reachable state in which an honest session that believes
it talks to an honest peer has accepted a key the adversary can derive.
The search is complete only for the configured session bound and
candidate caps; the verdict records the bound it used.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

from . import vocab
from .knowledge import (KnowledgeSet, _build_tower, _tower, absorb_all, derivable,
                        dh_normalize, initial_knowledge)
from .protocol import (ACTIVE, INSECURE, PASSIVE, SECURE, TIMEOUT, UNKNOWN,
                       NoSessionKey, Protocol, SecurityLabel, Witness)
from .terms import SK, Term, atom, public_atoms, render_term

NONCE_SYMBOLS = ("esk", "SK")
K_E = atom("K", "E")


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    session_bound: int = 2
    depth_bound: int = 3          # max depth of adversary-composed terms
    time_budget: float = 5.0      # seconds per protocol
    max_states: int = 20_000      # deterministic cap on explored states
    max_candidates: int = 6       # per message element
    max_messages: int = 24        # per receive step

    def __post_init__(self):
        if self.session_bound < 1:
            raise ValueError("session_bound must be at least 1")
        if self.time_budget <= 0:
            raise ValueError("time_budget must be positive")


def adversary_initial() -> KnowledgeSet:
    k = initial_knowledge("E")
    return k.absorb(K_E)


# -- passive ------------------------------------------------------------------

def label_passive(p: Protocol) -> SecurityLabel:
    """Eavesdropper-only check; Insecure is definitive, otherwise Unknown."""
    keys = p.accepted_keys()
    if not keys:
        raise NoSessionKey("protocol defines no session key")
    adv0 = adversary_initial()
    observed = tuple(el for m in p.sends for el in m.children)
    adv = absorb_all(adv0, observed)
    for party in sorted(keys):
        key = keys[party]
        if derivable(adv, key):
            w = Witness(tuple(sorted(adv0.basis, key=render_term)), observed, key,
                        (f"eavesdrop all {len(p.sends)} messages; derive key of {party}",))
            return SecurityLabel(INSECURE, PASSIVE, None, w)
    return SecurityLabel(UNKNOWN, PASSIVE, detail="not passively derivable")


# -- role scripts ---------------------------------------------------------------

def _is_var(t: Term) -> bool:
    lab = t.label
    return (lab.kind == vocab.ATOMIC and lab.symbol in NONCE_SYMBOLS
            and lab.session is None and lab.role != "E")


@dataclass(frozen=True)
class SessionSpec:
    role: str    # protocol role played: I or R
    agent: str   # honest agent running it
    peer: str    # agent it believes it talks to (E = adversary)

    def __str__(self):
        return f"{self.role}[{self.agent}->{self.peer}]"


class Role:
    """Instantiated role script for one session."""

    def __init__(self, p: Protocol, spec: SessionSpec, sid: int):
        self.spec = spec
        self.sid = sid
        owner = p.sk_owner()
        self._map = {}
        steps = []
        for m in p.messages:
            s = m.label.symbol
            if s in vocab.SEND_SENDER:
                els = tuple(self.inst(e, owner) for e in m.children)
                if vocab.SEND_SENDER[s] == spec.role:
                    steps.append(("send", els))
                else:
                    steps.append(("recv", els))
            elif vocab.ACCEPT_PARTY[s] == spec.role:
                steps.append(("accept", self.inst(m.children[0], owner)))
        if not p.accepts and owner is not None:
            steps.append(("accept", self.inst(SK, owner)))
        self.steps = tuple(steps)
        a, b = spec.agent, spec.peer
        known = set(public_atoms(adversary_aware=True))
        known |= {atom("lsk", a), K_E if b == "E" else atom("K")}
        known |= {atom("esk", a, i, sid) for i in vocab.FRESH_INDICES}
        if owner == spec.role:
            known.add(atom("SK", None, None, sid))
        known |= {t for t in self._map.values() if t.label.role == "E" and t.is_atom}
        self.known = frozenset(known)

    def inst(self, t: Term, owner) -> Term:
        return dh_normalize(self._inst(t, owner))

    def _inst(self, t, owner):
        if t.children:
            return Term(t.label, [self._inst(c, owner) for c in t.children])
        hit = self._map.get(t)
        if hit is not None:
            return hit
        lab = t.label
        spec = self.spec
        if lab.role in ("I", "R"):
            who = spec.agent if lab.role == spec.role else spec.peer
            if lab.symbol == "esk":
                if lab.role == spec.role:
                    out = atom("esk", who, lab.index, self.sid)
                else:
                    out = t  # variable, whoever the peer is
            else:
                out = atom(lab.symbol, who)
        elif lab.symbol == "K":
            out = K_E if spec.peer == "E" else t
        elif lab.symbol == "SK":
            out = atom("SK", None, None, self.sid) if owner == spec.role else t
        else:
            out = t
        self._map[t] = out
        return out


def construct(t: Term, known, subst, top=True):
    """Value the session computes for template ``t``, or None if it cannot."""
    if top:
        v = subst.get(t)
        if v is not None:
            return v
    if not t.children:
        if _is_var(t) or t not in known:
            return None
        return t
    if t.label.symbol == "exp":
        base, exps = _tower(t)
        for i, e in enumerate(exps):
            ev = construct(e, known, subst)
            if ev is None:
                continue
            rest = construct(_build_tower(base, exps[:i] + exps[i + 1:]), known, subst)
            if rest is not None:
                return dh_normalize(Term(t.label, (rest, ev)))
        return None
    kids = []
    for c in t.children:
        v = construct(c, known, subst)
        if v is None:
            return None
        kids.append(v)
    return dh_normalize(Term(t.label, kids))


_FAIL = object()
_WAIT = object()


def _step(tpl, val, role, subst):
    """One matching step: returns list of new pairs, _WAIT, or _FAIL."""
    c = construct(tpl, role.known, subst, top=False)
    if c is not None:
        return [] if c == val else _FAIL
    seen = subst.get(tpl)
    if seen is not None and seen != val:
        return _FAIL
    lab = tpl.label
    if lab.kind == vocab.ATOMIC:
        subst[tpl] = val
        return []
    s = lab.symbol
    if s == "tuple":
        if val.label.symbol != "tuple" or len(val.children) != len(tpl.children):
            return _FAIL
        return list(zip(tpl.children, val.children))
    if s in vocab.KEYED_FUNCTIONS:
        k = tpl.children[-1]
        if s == "senc":
            kv = construct(k, role.known, subst)
            if kv is None:
                return _WAIT
        elif s == "aenc":
            if k.label.role != role.spec.agent:
                return _WAIT
            kv = k
        else:
            kv = k
        if (val.label.symbol != s or len(val.children) != len(tpl.children)
                or val.children[-1] != kv):
            return _FAIL
        return list(zip(tpl.children[:-1], val.children[:-1]))
    return _WAIT


def match(role, subst, pending, pairs):
    """Run the receive-side checks.  Returns (subst, pending) or None on mismatch."""
    subst = dict(subst)
    work = list(pending) + list(pairs)
    progress = True
    while progress:
        progress = False
        waiting = []
        for tpl, val in work:
            r = _step(tpl, val, role, subst)
            if r is _FAIL:
                return None
            if r is _WAIT:
                waiting.append((tpl, val))
            else:
                waiting.extend(r)
                progress = True
        work = waiting
    for tpl, val in work:
        seen = subst.get(tpl)
        if seen is None:
            subst[tpl] = val
        elif seen != val:
            return None  # one component received as two different values
    return subst, tuple(work)


# -- adversary message synthesis --------------------------------------------------

class Synth:
    def __init__(self, cfg: OracleConfig):
        self.cfg = cfg

    def message(self, role, subst, adv, tpls):
        per = []
        for t in tpls:
            c = self.element(role, subst, adv, t, 0)
            if not c:
                return []
            per.append(c)
        out = []
        for combo in itertools.product(*per):
            out.append(combo)
            if len(out) >= self.cfg.max_messages:
                break
        return out

    def element(self, role, subst, adv, t, depth):
        cap = self.cfg.max_candidates
        c = construct(t, role.known, subst)
        if c is not None:
            return [c] if derivable(adv, c) else []
        if not t.children:
            out = [a for a in adv.atoms() if a.label.symbol in NONCE_SYMBOLS
                   and not (a.label.role == "E" and a.label.index != 1)]
            return out[:cap]
        s = t.label.symbol
        out = []
        seen = set()
        for b in sorted(adv.basis, key=render_term):
            if b.label.symbol == s and len(b.children) == len(t.children) and self._key_ok(role, subst, t, b):
                out.append(b)
                seen.add(b)
        if depth < self.cfg.depth_bound:
            for v in self._compose(role, subst, adv, t, depth):
                if v not in seen:
                    seen.add(v)
                    out.append(v)
                if len(out) >= cap:
                    break
        return out[:cap]

    def _key_ok(self, role, subst, t, b):
        s = t.label.symbol
        if s not in vocab.KEYED_FUNCTIONS:
            return True
        k = t.children[-1]
        if s == "senc":
            kv = construct(k, role.known, subst)
            return kv is None or b.children[-1] == kv
        return b.children[-1] == k

    def _compose(self, role, subst, adv, t, depth):
        s = t.label.symbol
        kids = t.children
        keyv = None
        if s in vocab.KEYED_FUNCTIONS:
            k = kids[-1]
            keyv = construct(k, role.known, subst) if s == "senc" else k
            if keyv is None:
                keyv = K_E
            if not derivable(adv, keyv):
                return []
            kids = kids[:-1]
        per = []
        for c in kids:
            vals = self.element(role, subst, adv, c, depth + 1)
            if not vals:
                return []
            per.append(vals)
        out = []
        for combo in itertools.product(*per):
            args = list(combo) + ([keyv] if keyv is not None else [])
            out.append(dh_normalize(Term(t.label, args)))
            if len(out) >= self.cfg.max_candidates:
                break
        return out


# -- search -------------------------------------------------------------------------

SESSION_TYPES = tuple(
    SessionSpec(r, a, b) for r in vocab.HONEST for a in vocab.HONEST
    for b in ("I", "R", "E") if b != a)


def _swap(spec: SessionSpec) -> SessionSpec:
    sw = {"I": "R", "R": "I", "E": "E"}
    return SessionSpec(spec.role, sw[spec.agent], sw[spec.peer])


def scenarios(bound: int) -> list[tuple[SessionSpec, ...]]:
    """Session multisets up to ``bound``, one per agent-renaming class,
    each with at least one session that has an honest peer."""
    out = []
    seen = set()
    order = {s: i for i, s in enumerate(SESSION_TYPES)}
    for n in range(1, bound + 1):
        for combo in itertools.combinations_with_replacement(SESSION_TYPES, n):
            if not any(s.peer != "E" for s in combo):
                continue
            key = tuple(sorted(combo, key=order.get))
            alt = tuple(sorted(map(_swap, combo), key=order.get))
            canon = min(key, alt, key=lambda c: [order[s] for s in c])
            if canon in seen:
                continue
            seen.add(canon)
            out.append(canon)
    return out


class _Search:
    def __init__(self, p, cfg, deadline):
        self.p = p
        self.cfg = cfg
        self.deadline = deadline
        self.synth = Synth(cfg)
        self.states = 0

    def run(self, combo):
        roles = [Role(self.p, spec, sid + 1) for sid, spec in enumerate(combo)]
        adv0 = adversary_initial()
        sess = tuple((0, {}, (), None) for _ in roles)
        start = self._advance(roles, sess, adv0, (), ())
        if start is None:
            return None
        stack = [start]
        visited = set()
        while stack:
            sess, adv, observed, trace = stack.pop()
            hit = self._attack(roles, sess, adv)
            if hit is not None:
                return self._witness(adv0, observed, hit, trace)
            fp = (tuple((pc, frozenset(su.items()), pe) for pc, su, pe, _ in sess), adv.basis)
            if fp in visited:
                continue
            visited.add(fp)
            self.states += 1
            if self.states > self.cfg.max_states or time.monotonic() > self.deadline:
                raise BudgetExceeded()
            succ = []
            for i, role in enumerate(roles):
                pc, subst, pending, key = sess[i]
                if pc < 0 or pc >= len(role.steps) or role.steps[pc][0] != "recv":
                    continue
                tpls = role.steps[pc][1]
                for msg in self.synth.message(role, subst, adv, tpls):
                    r = match(role, subst, pending, zip(tpls, msg))
                    if r is None:
                        continue
                    new = list(sess)
                    new[i] = (pc + 1, r[0], r[1], key)
                    ev = f"adversary -> s{role.sid} {role.spec}: " + ", ".join(map(render_term, msg))
                    nxt = self._advance(roles, tuple(new), adv, observed, trace + (ev,))
                    if nxt is not None:
                        succ.append(nxt)
            stack.extend(reversed(succ))
        return None

    def _advance(self, roles, sess, adv, observed, trace):
        sess = list(sess)
        moved = True
        while moved:
            moved = False
            for i, role in enumerate(roles):
                pc, subst, pending, key = sess[i]
                while 0 <= pc < len(role.steps) and role.steps[pc][0] != "recv":
                    kind, body = role.steps[pc]
                    if kind == "send":
                        vals = [construct(t, role.known, subst) for t in body]
                        if any(v is None for v in vals):
                            pc = -1
                            break
                        adv = absorb_all(adv, vals)
                        observed = observed + tuple(vals)
                        trace = trace + (f"s{role.sid} {role.spec} sends " + ", ".join(map(render_term, vals)),)
                    else:
                        key = construct(body, role.known, subst)
                        if key is None:
                            pc = -1
                            break
                        trace = trace + (f"s{role.sid} {role.spec} accepts {render_term(key)}",)
                    pc += 1
                    moved = True
                sess[i] = (pc, subst, pending, key)
        return tuple(sess), adv, observed, trace

    def _attack(self, roles, sess, adv):
        for role, (_, _, _, key) in zip(roles, sess):
            if key is not None and role.spec.peer != "E" and derivable(adv, key):
                return role, key
        return None

    def _witness(self, adv0, observed, hit, trace):
        role, key = hit
        trace = trace + (f"adversary derives key of s{role.sid} {role.spec}",)
        return Witness(tuple(sorted(adv0.basis, key=render_term)), observed, key, trace)


def label_active(p: Protocol, cfg: OracleConfig = OracleConfig()) -> SecurityLabel:
    """Bounded active search over up to ``cfg.session_bound`` sessions.

    Eavesdropping on one honest run is always within the active
    adversary's power, so a passive witness is returned first whatever the
    bound (a single role instance could never complete that run itself).
    """
    passive = label_passive(p)
    if passive.verdict == INSECURE:
        return passive
    deadline = time.monotonic() + cfg.time_budget
    search = _Search(p, cfg, deadline)
    try:
        for combo in scenarios(cfg.session_bound):
            w = search.run(combo)
            if w is not None:
                return SecurityLabel(INSECURE, ACTIVE, cfg.session_bound, w,
                                     detail=" + ".join(map(str, combo)))
    except BudgetExceeded:
        return SecurityLabel(UNKNOWN, TIMEOUT, cfg.session_bound,
                             detail=f"budget exhausted after {search.states} states")
    return SecurityLabel(SECURE, ACTIVE, cfg.session_bound,
                         detail=f"{search.states} states explored")


def label(p: Protocol, cfg: OracleConfig = OracleConfig()) -> SecurityLabel:
    """Passive check first; the active search runs only when that finds nothing."""
    return label_active(p, cfg)
