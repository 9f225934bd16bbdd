"""Dolev-Yao knowledge sets.

A knowledge set keeps its basis closed under *decomposition* (projection
of tuples, decryption with a held key, reading a signed payload).  The
*composition* side is answered on demand by :func:`derivable`, which
checks whether a term can be rebuilt from the basis by applying
constructors.  Term equality is taken modulo :func:`dh_normalize`.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Iterable

from . import vocab
from .terms import K, Term, atom, esk, fn, lsk, public_atoms, render_term

OWNERS = ("I", "R", "E")
# stands in for a decryption key that no principal can hold
_NO_KEY = atom("lsk", None, None, -1)


@lru_cache(maxsize=200_000)
def dh_normalize(t: Term) -> Term:
    """Canonical form of exponent towers.

    ``exp(exp(b; x); y)`` and ``exp(exp(b; y); x)`` both become the tower
    over ``b`` with exponents sorted by their canonical text.
    """
    if not t.children:
        return t
    kids = tuple(dh_normalize(c) for c in t.children)
    if t.label.symbol == "exp":
        base, exps = _tower(kids[0])
        return _build_tower(base, exps + [kids[1]])
    if all(a is b for a, b in zip(kids, t.children)):
        return t
    return Term(t.label, kids)


def _tower(t: Term) -> tuple[Term, list[Term]]:
    exps = []
    while t.label.symbol == "exp":
        exps.append(t.children[1])
        t = t.children[0]
    return t, exps


def _build_tower(base: Term, exps) -> Term:
    t = base
    for e in sorted(exps, key=render_term):
        t = fn("exp", t, e)
    return t


def _decryption_key(ct: Term) -> Term | None:
    """Atom needed to open ``ct``; None when the payload is always readable."""
    s = ct.label.symbol
    if s == "senc":
        return ct.children[-1]
    if s == "aenc":
        k = ct.children[-1]
        if k.label.symbol == "pk":
            return lsk(k.label.role)
        return _NO_KEY
    return None


class KnowledgeSet:
    """Closure-maintained set of terms known by one principal."""

    __slots__ = ("basis", "owner", "_locked", "_memo")

    def __init__(self, basis: Iterable[Term] = (), owner: str = "E", _locked=None):
        if _locked is None:
            ks = absorb_all(KnowledgeSet._raw(frozenset(), owner, {}), basis)
            basis, _locked = ks.basis, ks._locked
        self.basis = frozenset(basis)
        self.owner = owner
        self._locked = _locked
        self._memo = {}

    @classmethod
    def _raw(cls, basis, owner, locked):
        obj = cls.__new__(cls)
        obj.basis = basis
        obj.owner = owner
        obj._locked = locked
        obj._memo = {}
        return obj

    def __contains__(self, t: Term) -> bool:
        return dh_normalize(t) in self.basis

    def __len__(self):
        return len(self.basis)

    def __iter__(self):
        return iter(sorted(self.basis, key=render_term))

    def __eq__(self, other):
        return isinstance(other, KnowledgeSet) and self.basis == other.basis

    def __hash__(self):
        return hash(self.basis)

    def __repr__(self):
        return f"KnowledgeSet({self.owner}, {len(self.basis)} terms)"

    def atoms(self) -> list[Term]:
        return sorted((t for t in self.basis if t.is_atom), key=render_term)

    def absorb(self, t: Term) -> "KnowledgeSet":
        return absorb(self, t)

    def derivable(self, t: Term) -> bool:
        return derivable(self, t)


def initial_knowledge(owner: str, publics: Iterable[Term] | None = None) -> KnowledgeSet:
    """Starting knowledge: public atoms plus the owner's own secrets.

    Honest parties hold their ephemeral keys, long-term key and the
    pre-shared key ``K``; the adversary holds its own keys but not ``K``.
    """
    if owner == "adversary":
        owner = "E"
    if owner not in OWNERS:
        raise ValueError(f"unknown owner {owner!r}")
    if publics is None:
        publics = public_atoms(adversary_aware=(owner == "E"))
    own = {esk(owner, i) for i in vocab.FRESH_INDICES} | {lsk(owner)}
    if owner == "E":
        own |= {atom("ID", "E"), atom("pk", "E"), atom("T", "E")}
    else:
        own.add(K)
    return KnowledgeSet(set(publics) | own, owner)


def absorb(k: KnowledgeSet, t: Term) -> KnowledgeSet:
    """Decomposition closure of ``k.basis`` plus ``t``.

    A behaviour-rooted message contributes its elements, not the root.
    """
    return absorb_all(k, [t])


def absorb_all(k: KnowledgeSet, terms: Iterable[Term]) -> KnowledgeSet:
    basis = set(k.basis)
    locked = dict(k._locked)
    work = []
    for t in terms:
        if t.label.kind == vocab.BEHAVIOR:
            work.extend(t.children)
        else:
            work.append(t)
    work = [dh_normalize(t) for t in work]
    changed = False
    while work:
        x = work.pop()
        if x in basis:
            continue
        basis.add(x)
        changed = True
        s = x.label.symbol
        if x.children:
            if s in ("tuple", "sign"):
                work.extend(x.payload())
            elif s in ("senc", "aenc"):
                need = _decryption_key(x)
                if need in basis:
                    work.extend(x.payload())
                else:
                    locked[need] = locked.get(need, ()) + (x,)
        elif x in locked:
            for ct in locked.pop(x):
                work.extend(ct.payload())
    if not changed:
        return k
    return KnowledgeSet._raw(frozenset(basis), k.owner, locked)


def derivable(k: KnowledgeSet, t: Term) -> bool:
    """Can the owner of ``k`` build ``t`` by applying constructors to its basis?"""
    return _derivable(k, dh_normalize(t))


def _derivable(k: KnowledgeSet, t: Term) -> bool:
    if t in k.basis:
        return True
    if not t.children:
        return False
    memo = k._memo
    hit = memo.get(t)
    if hit is not None:
        return hit
    if t.label.symbol == "exp":
        base, exps = _tower(t)
        ok = False
        seen = set()
        for i, e in enumerate(exps):
            if e in seen:
                continue
            seen.add(e)
            if _derivable(k, e) and _derivable(k, _build_tower(base, exps[:i] + exps[i + 1:])):
                ok = True
                break
    elif t.label.kind != "function":
        ok = False
    else:
        ok = all(_derivable(k, c) for c in t.children)
    memo[t] = ok
    return ok


def replay_witness(witness) -> bool:
    """Re-derive an attack witness: absorb the observed traffic, then test the target."""
    k = KnowledgeSet(witness.initial, "E")
    k = absorb_all(k, witness.observed)
    return derivable(k, witness.target)
