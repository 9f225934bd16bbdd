"""Random protocol generation over the message grammar.

``generate_protocol`` alternates ``sendIR``/``sendRI`` roots, fills each
message from the sender's current knowledge and lets the receiver absorb
it.  Establishment protocols then pick a jointly derivable session key;
transport protocols give a fresh ``SK`` atom to one party.

Randomness comes from numpy's PCG64.  Every stream is keyed by
``SeedSequence(seed, spawn_key=(attempt, slot))`` where slot 0 drives the
header draws (message count, key owner), slot ``i`` drives message ``i``
and slot 99 drives session-key selection.  The protocol kind is drawn
once from ``spawn_key=(100,)`` and kept across retries.  A dataset is
therefore reproducible from its seeds alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import vocab
from .knowledge import KnowledgeSet, derivable, dh_normalize, initial_knowledge
from .protocol import ESTABLISHMENT, TRANSPORT, Protocol, validate_protocol
from .terms import SK, K, Term, behavior, fn, lsk, pk, public_atoms, render_term

MAX_RETRIES = 20
MAX_DEPTH = 4
KEY_SLOT = 99


class Rng:
    """Seedable PCG64 stream with the two draws the generator needs."""

    def __init__(self, seed: int, stream: tuple[int, ...] = ()):
        ss = np.random.SeedSequence(seed & (2**64 - 1), spawn_key=stream)
        self._g = np.random.Generator(np.random.PCG64(ss))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]``."""
        return int(self._g.integers(lo, hi + 1))

    def choice(self, seq):
        return seq[int(self._g.integers(0, len(seq)))]

    def random(self) -> float:
        return float(self._g.random())

    def permutation(self, n: int) -> list[int]:
        return [int(i) for i in self._g.permutation(n)]


class ScriptedRng:
    """Replays a fixed list of draws; ``choice`` accepts the chosen element itself."""

    def __init__(self, values):
        self.values = list(values)
        self.pos = 0

    def _next(self):
        if self.pos >= len(self.values):
            raise IndexError("scripted draws exhausted")
        v = self.values[self.pos]
        self.pos += 1
        return v

    def randint(self, lo, hi):
        v = self._next()
        if not lo <= v <= hi:
            raise ValueError(f"scripted draw {v} outside [{lo}, {hi}]")
        return v

    def choice(self, seq):
        v = self._next()
        for x in seq:
            if x == v:
                return x
        raise ValueError(f"scripted choice {v!r} not among the options")

    def random(self):
        return float(self._next())

    def permutation(self, n):
        return list(range(n))


@dataclass(frozen=True)
class GenConfig:
    m_max: int = vocab.DEFAULT_M_MAX
    c_max: int = vocab.DEFAULT_C_MAX
    kind_mix: float = 0.5  # probability of an establishment protocol
    seed: int = 0
    with_accept: bool = True
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        if self.m_max < 1 or self.c_max < 1:
            raise ValueError("m_max and c_max must be at least 1")
        if not 0.0 <= self.kind_mix <= 1.0:
            raise ValueError("kind_mix must lie in [0, 1]")


def _pool(k: KnowledgeSet, atoms_only: bool) -> list:
    terms = sorted((t for t in k.basis if t.is_atom or not atoms_only), key=render_term)
    if atoms_only:
        return terms
    return terms + list(vocab.GENERATED_FUNCTIONS)


def generate_message(c_max: int, k: KnowledgeSet, sender: str, rng, depth: int = 0,
                     parent: str = "send", max_depth: int = MAX_DEPTH) -> list[Term]:
    """Children for a node under construction.

    Draws ``c`` uniform in ``1..c_max`` elements from the sender's
    knowledge plus the function symbols; a drawn function recurses.
    ``exp`` always gets exactly two children and keyed functions get the
    forced key (``K``, the partner's ``pk``, the sender's ``lsk``) appended.
    """
    receiver = "R" if sender == "I" else "I"
    c = 2 if parent == "exp" else rng.randint(1, c_max)
    pool = _pool(k, atoms_only=depth >= max_depth)
    out = []
    for _ in range(c):
        e = rng.choice(pool)
        if isinstance(e, Term):
            out.append(e)
            continue
        kids = generate_message(c_max, k, sender, rng, depth + 1, e, max_depth)
        if e == "senc":
            kids.append(K)
        elif e == "aenc":
            kids.append(pk(receiver))
        elif e == "sign":
            kids.append(lsk(sender))
        out.append(fn(e, *kids))
    return out


def _jointly_derivable(k_i, k_r, t):
    return derivable(k_i, t) and derivable(k_r, t)


def session_key_candidates(k_i: KnowledgeSet, k_r: KnowledgeSet,
                           prefer_secret: bool = True) -> list[Term]:
    """Terms both parties can compute: shared atoms, hashes of one or two of
    them, and two-level exponentials built on an exchanged ``exp`` term.

    With ``prefer_secret`` only candidates containing a non-public atom are
    returned whenever any exist.
    """
    publics = public_atoms()
    shared = sorted(
        {t for t in k_i.basis | k_r.basis if t.is_atom and _jointly_derivable(k_i, k_r, t)},
        key=render_term)
    cands = [a for a in shared if a not in publics]
    cands += [fn("hash", a) for a in shared]
    cands += [fn("hash", a, b) for a, b in combinations(shared, 2)]
    exps = sorted({t for t in k_i.basis | k_r.basis if t.label.symbol == "exp"
                   and t.children[0].label.symbol != "exp"}, key=render_term)
    for e in exps:
        for x in shared + [a for a in (k_i.basis | k_r.basis) if a.is_atom and a not in shared]:
            t = dh_normalize(fn("exp", e, x))
            if t not in cands and _jointly_derivable(k_i, k_r, t):
                cands.append(t)
    cands = sorted(set(cands), key=render_term)
    if not prefer_secret:
        return cands
    secret = [t for t in cands if any(a not in publics for a in t.atoms())]
    return secret or cands


def choose_session_keys(p: Protocol, k_i: KnowledgeSet, k_r: KnowledgeSet, rng) -> Protocol:
    """Append ``acceptI``/``acceptR`` over one jointly derivable term.

    Raises ValueError (empty intersection) when no candidate exists.
    """
    if p.accepts:
        raise ValueError("protocol already has accept events")
    cands = session_key_candidates(k_i, k_r)
    if not cands:
        raise ValueError("empty intersection: no jointly derivable session key")
    t = rng.choice(cands)
    msgs = list(p.messages) + [behavior("acceptI", t), behavior("acceptR", t)]
    return Protocol(tuple(msgs), ESTABLISHMENT, p.seed, dict(p.meta))


def _build_sends(cfg: GenConfig, m: int, owner: str | None, rng_for):
    publics = public_atoms()
    know = {P: initial_knowledge(P, publics) for P in vocab.HONEST}
    if owner is not None:
        know[owner] = know[owner].absorb(SK)
    msgs = []
    for i in range(1, m + 1):
        root, P, Q = ("sendIR", "I", "R") if i % 2 == 1 else ("sendRI", "R", "I")
        body = generate_message(cfg.c_max, know[P], P, rng_for(i), max_depth=cfg.max_depth)
        msg = behavior(root, *body)
        msgs.append(msg)
        know[Q] = know[Q].absorb(msg)
    return msgs, know


def generate_protocol(cfg: GenConfig, rng=None) -> Protocol:
    """Random valid protocol, deterministic in ``cfg.seed``.

    Pass ``rng`` (e.g. a :class:`ScriptedRng`) to drive every draw from a
    single source instead of the per-slot seeded streams.
    """
    kind_rng = Rng(cfg.seed, (KEY_SLOT + 1,)) if rng is None else rng
    establishment = kind_rng.random() < cfg.kind_mix
    for attempt in range(MAX_RETRIES):
        p = _attempt(cfg, attempt, rng, establishment)
        if p is not None:
            return p
    # establishment retries exhausted: fall back to transport
    return _attempt(cfg, MAX_RETRIES, rng, False, last=True)


def _attempt(cfg, attempt, rng, establishment, last=False):
    if rng is None:
        rng_for = lambda slot: Rng(cfg.seed, (attempt, slot))
    else:
        rng_for = lambda slot: rng
    head = rng_for(0)
    m = head.randint(1, cfg.m_max)
    meta = {"attempt": attempt, "with_accept": cfg.with_accept}
    if establishment:
        msgs, know = _build_sends(cfg, m, None, rng_for)
        p = Protocol(tuple(msgs), ESTABLISHMENT, cfg.seed, meta)
        try:
            return choose_session_keys(p, know["I"], know["R"], rng_for(KEY_SLOT))
        except ValueError:
            return None
    owner = "I" if m == 1 else head.choice(vocab.HONEST)
    msgs, know = _build_sends(cfg, m, owner, rng_for)
    other = "R" if owner == "I" else "I"
    if not (any(SK in msg.atoms() for msg in msgs) and derivable(know[other], SK)):
        if not last:
            return None
        # bounded-retry fallback: the owner's first message carries senc(SK; K)
        j = 0 if owner == "I" else 1
        msgs[j] = behavior(msgs[j].label.symbol, *msgs[j].children, fn("senc", SK, K))
        meta["fallback"] = True
    if cfg.with_accept:
        msgs += [behavior("acceptI", SK), behavior("acceptR", SK)]
    p = Protocol(tuple(msgs), TRANSPORT, cfg.seed, meta)
    return p


def generate_corpus(cfg: GenConfig, count: int) -> list[Protocol]:
    """``count`` protocols with seeds ``cfg.seed, cfg.seed + 1, ...``."""
    out = []
    for i in range(count):
        c = GenConfig(cfg.m_max, cfg.c_max, cfg.kind_mix, cfg.seed + i,
                      cfg.with_accept, cfg.max_depth)
        out.append(generate_protocol(c))
    return out


def check_generated(p: Protocol) -> list[str]:
    return validate_protocol(p)
