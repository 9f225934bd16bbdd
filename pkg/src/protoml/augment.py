"""Insecurity-injecting transformations that turn secure protocols into
near-identical insecure ones.

All three transforms keep the protocol valid (alternation, arities,
sender constructibility, accept keys derivable by their parties).
:func:`augment_corpus` relabels every variant with the oracle and keeps
only those that actually became insecure.
"""
from __future__ import annotations

from .generator import Rng, session_key_candidates
from .knowledge import absorb_all, derivable
from .oracle import OracleConfig, adversary_initial, label
from .protocol import (ACTIVE, ESTABLISHMENT, INSECURE, SECURE, Protocol, SecurityLabel,
                       knowledge_trace, validate_protocol)
from .terms import SK, K, Term, atom, behavior, fn, lsk, public_atoms, render_term
from . import vocab

LEAK_SECRET = "leak_secret"
WEAKEN_ENCRYPTION = "weaken_encryption"
WEAKEN_SESSION_KEY = "weaken_session_key"
AUGMENT_KINDS = (LEAK_SECRET, WEAKEN_ENCRYPTION, WEAKEN_SESSION_KEY)


class AugmentError(ValueError):
    pass


class NoSecretAvailable(AugmentError):
    pass


class NoEncryptionNode(AugmentError):
    pass


class NotEstablishment(AugmentError):
    pass


def _eavesdropper(p: Protocol):
    return absorb_all(adversary_initial(), [el for m in p.sends for el in m.children])


def passively_broken(p: Protocol) -> bool:
    adv = _eavesdropper(p)
    return any(derivable(adv, k) for k in p.accepted_keys().values())


def accepts_derivable(p: Protocol) -> bool:
    """Each accepting party can compute the key it accepts."""
    _, final = knowledge_trace(p)
    return all(derivable(final[vocab.ACCEPT_PARTY[m.label.symbol]], m.children[0])
               for m in p.accepts)


def is_valid_variant(p: Protocol) -> bool:
    return not validate_protocol(p) and accepts_derivable(p)


def _append(p: Protocol, index: int, el: Term, kind: str) -> Protocol:
    msgs = list(p.messages)
    m = msgs[index]
    msgs[index] = behavior(m.label.symbol, *m.children, el)
    return p.with_messages(msgs, augment=kind)


def leak_secret(p: Protocol, rng) -> Protocol:
    """Append one secret as an extra plaintext element of a send message.

    The secret is drawn uniformly from those whose disclosure exposes the
    session key, then the message uniformly from the sends whose sender
    already holds it.
    """
    keys = p.accepted_keys()
    if not keys:
        raise NoSecretAvailable("protocol defines no session key")
    key = p.session_key()
    in_run = set()
    for m in p.messages:
        in_run |= m.atoms()
    publics = public_atoms(adversary_aware=True)
    secrets = [key]
    secrets += [a for a in (SK, K, lsk("I"), lsk("R")) if a in in_run]
    secrets += sorted((a for a in key.atoms() if a not in publics), key=render_term)
    secrets = list(dict.fromkeys(secrets))
    before, _ = knowledge_trace(p)
    options = []
    for s in secrets:
        where = [i for i, k in enumerate(before) if k is not None and derivable(k, s)]
        if not where:
            continue
        trial = _append(p, where[0], s, LEAK_SECRET)
        if passively_broken(trial):
            options.append((s, where))
    if not options:
        raise NoSecretAvailable("no secret whose disclosure exposes the session key")
    s, where = rng.choice(options)
    return _append(p, rng.choice(where), s, LEAK_SECRET)


def _adversary_known_before(p: Protocol, index: int):
    earlier = [el for m in p.messages[:index] if m.label.symbol in vocab.SEND_SENDER
               for el in m.children]
    return absorb_all(adversary_initial(), earlier)


def weaken_encryption(p: Protocol, rng) -> Protocol:
    """Re-key one ``senc``/``aenc`` node with a key the adversary holds.

    ``aenc`` switches to ``pk_E``; ``senc`` switches to an atom already
    visible to the adversary that the sender also holds.  Options are
    tried in random order and the first valid result is returned.
    """
    before, _ = knowledge_trace(p)
    sites = []
    for i, m in enumerate(p.messages):
        if m.label.symbol not in vocab.SEND_SENDER:
            continue
        for path, t in m.paths():
            s = t.label.symbol
            if s == "aenc":
                sites.append((i, path, atom("pk", "E")))
            elif s == "senc":
                adv = _adversary_known_before(p, i)
                for a in adv.atoms():
                    if a != t.children[-1] and derivable(before[i], a):
                        sites.append((i, path, a))
    if not sites:
        raise NoEncryptionNode("no encryption node to weaken")
    for j in rng.permutation(len(sites)):
        i, path, new_key = sites[j]
        m = p.messages[i]
        node = m.subterm(path)
        repl = Term(node.label, node.children[:-1] + (new_key,))
        msgs = list(p.messages)
        msgs[i] = m.replace_at(path, repl)
        q = p.with_messages(msgs, augment=WEAKEN_ENCRYPTION)
        if is_valid_variant(q):
            return q
    raise NoEncryptionNode("no encryption node can be weakened validly")


def weaken_session_key(p: Protocol, rng) -> Protocol:
    """Replace both accept bodies with a jointly derivable term the
    eavesdropper can also build, preferring one that mixes in a value
    sent in the clear."""
    if p.kind != ESTABLISHMENT or len(p.accepts) != 2:
        raise NotEstablishment("needs an establishment protocol with both accepts")
    _, final = knowledge_trace(p)
    adv = _eavesdropper(p)
    current = p.accepts[0].children[0]
    cands = [t for t in session_key_candidates(final["I"], final["R"], prefer_secret=False)
             if t != current and derivable(adv, t)]
    if not cands:
        ids = [atom("ID", "I"), atom("ID", "R")]
        cands = [fn("hash", *ids)]
    publics = public_atoms(adversary_aware=True)
    mixed = [t for t in cands if any(a not in publics for a in t.atoms())]
    t = rng.choice(mixed or cands)
    msgs = [m for m in p.messages if m.label.symbol in vocab.SEND_SENDER]
    msgs += [behavior("acceptI", t), behavior("acceptR", t)]
    return p.with_messages(msgs, augment=WEAKEN_SESSION_KEY)


TRANSFORMS = {
    LEAK_SECRET: leak_secret,
    WEAKEN_ENCRYPTION: weaken_encryption,
    WEAKEN_SESSION_KEY: weaken_session_key,
}


def augment_one(p: Protocol, rng, cfg: OracleConfig = OracleConfig(), kinds=AUGMENT_KINDS):
    """Try the transforms in random order; first variant the oracle calls
    Insecure wins.  Returns ``(variant, label)`` or None."""
    order = [kinds[j] for j in rng.permutation(len(kinds))]
    for kind in order:
        try:
            q = TRANSFORMS[kind](p, rng)
        except AugmentError:
            continue
        lab = label(q, cfg)
        if lab.verdict == INSECURE:
            return q, lab
    return None


def augment_corpus(secure: list[Protocol], per_item: int = 1, seed: int = 0,
                   cfg: OracleConfig = OracleConfig(), kinds=AUGMENT_KINDS):
    """Originals (labelled Secure) followed by up to ``per_item`` relabelled
    insecure variants each, in input order."""
    out = []
    for i, p in enumerate(secure):
        out.append((p, SecurityLabel(SECURE, ACTIVE)))
        seen = set()
        for j in range(per_item):
            r = augment_one(p, Rng(seed, (i, j)), cfg, kinds)
            if r is None or r[0].messages in seen:
                continue
            seen.add(r[0].messages)
            out.append(r)
    return out
