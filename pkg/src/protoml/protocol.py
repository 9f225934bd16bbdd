"""Protocols as ordered lists of behaviour-rooted messages, plus labels and records."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from . import vocab
from .knowledge import derivable, initial_knowledge
from .terms import SK, Term, parse_term, public_atoms, render_term, term_violations

TRANSPORT = "transport"
ESTABLISHMENT = "establishment"
KINDS = (TRANSPORT, ESTABLISHMENT)

SECURE = "secure"
INSECURE = "insecure"
UNKNOWN = "unknown"
VERDICTS = (SECURE, INSECURE, UNKNOWN)

PASSIVE = "passive"
ACTIVE = "active"
EXTERNAL = "external"
TIMEOUT = "timeout"


class NoSessionKey(ValueError):
    pass


@dataclass(frozen=True)
class Protocol:
    messages: tuple[Term, ...]
    kind: str = TRANSPORT
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))

    @property
    def sends(self) -> list[Term]:
        return [m for m in self.messages if m.label.symbol in vocab.SEND_SENDER]

    @property
    def accepts(self) -> list[Term]:
        return [m for m in self.messages if m.label.symbol in vocab.ACCEPT_PARTY]

    @property
    def size(self) -> int:
        return protocol_size(self)

    def accepted_keys(self) -> dict[str, Term]:
        """Session key per party: accept bodies, or the ``SK`` atom when no accepts exist."""
        keys = {vocab.ACCEPT_PARTY[m.label.symbol]: m.children[0] for m in self.accepts}
        if keys:
            return keys
        if any(SK in m.atoms() for m in self.sends):
            return {"I": SK, "R": SK}
        return {}

    def session_key(self) -> Term:
        keys = self.accepted_keys()
        if not keys:
            raise NoSessionKey("protocol defines no session key")
        return keys.get("I", keys.get("R"))

    def sk_owner(self) -> str | None:
        """Party that generates the fresh ``SK`` atom: first sender of a message containing it."""
        for m in self.sends:
            if SK in m.atoms():
                return vocab.SEND_SENDER[m.label.symbol]
        return None

    def with_messages(self, messages, **meta) -> "Protocol":
        return Protocol(tuple(messages), self.kind, self.seed, {**self.meta, **meta})

    def text(self) -> str:
        return "\n".join(render_term(m) for m in self.messages)


@dataclass(frozen=True)
class Witness:
    """Adversary derivation: initial knowledge + observed traffic entail ``target``."""
    initial: tuple[Term, ...]
    observed: tuple[Term, ...]
    target: Term
    trace: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "initial": [render_term(t) for t in self.initial],
            "observed": [render_term(t) for t in self.observed],
            "target": render_term(self.target),
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Witness":
        p = lambda s: parse_term(s, check=False)
        return cls(tuple(map(p, d["initial"])), tuple(map(p, d["observed"])),
                   p(d["target"]), tuple(d.get("trace", ())))


@dataclass(frozen=True)
class SecurityLabel:
    verdict: str
    provenance: str
    bound: int | None = None
    witness: Witness | None = None
    detail: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == INSECURE and self.witness is None:
            raise ValueError("insecure verdict requires a witness")

    def to_dict(self) -> dict:
        d = {"verdict": self.verdict, "provenance": self.provenance}
        if self.bound is not None:
            d["bound"] = self.bound
        if self.witness is not None:
            d["witness"] = self.witness.to_dict()
        if self.detail:
            d["detail"] = self.detail
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SecurityLabel":
        w = d.get("witness")
        return cls(d["verdict"], d["provenance"], d.get("bound"),
                   Witness.from_dict(w) if w else None, d.get("detail", ""))


def protocol_size(p: Protocol) -> int:
    """Total node count over all message trees, behaviour roots included."""
    return sum(m.size() for m in p.messages)


def knowledge_trace(p: Protocol, publics=None):
    """Replay party knowledge through the honest run.

    Returns ``(before, final)`` where ``before[i]`` is the sender's
    knowledge when message ``i`` is sent (None for accept events) and
    ``final`` maps each party to its knowledge after the run.
    """
    if publics is None:
        publics = public_atoms(adversary_aware=True)
    know = {P: initial_knowledge(P, publics) for P in vocab.HONEST}
    owner = p.sk_owner()
    if owner is not None:
        know[owner] = know[owner].absorb(SK)
    before = []
    for m in p.messages:
        s = m.label.symbol
        if s in vocab.SEND_SENDER:
            before.append(know[vocab.SEND_SENDER[s]])
            q = vocab.SEND_RECEIVER[s]
            know[q] = know[q].absorb(m)
        else:
            before.append(None)
    return before, know


def validate_protocol(p: Protocol) -> list[str]:
    """Structural and constructibility violations; empty when the protocol is valid."""
    out = []
    for i, m in enumerate(p.messages):
        if m.label.kind != vocab.BEHAVIOR:
            out.append(f"root: message {i + 1} is not rooted at a behaviour")
        for v in term_violations(m):
            out.append(f"message {i + 1}: {v}")
    if p.kind not in KINDS:
        out.append(f"kind: unknown protocol kind {p.kind!r}")
    sends = p.sends
    if not sends:
        out.append("alternation: protocol has no send message")
    for j, m in enumerate(sends):
        want = "sendIR" if j % 2 == 0 else "sendRI"
        if m.label.symbol != want:
            out.append(f"alternation: send {j + 1} is {m.label.symbol}, expected {want}")
    seen_accept = False
    parties = set()
    for m in p.messages:
        s = m.label.symbol
        if s in vocab.ACCEPT_PARTY:
            seen_accept = True
            who = vocab.ACCEPT_PARTY[s]
            if who in parties:
                out.append(f"accept: more than one {s}")
            parties.add(who)
        elif seen_accept and s in vocab.SEND_SENDER:
            out.append("accept: send message after an accept event")
    if protocol_size(p) < 2:
        out.append("size: protocol has fewer than 2 nodes")
    if out:
        return out
    before, _ = knowledge_trace(p)
    for i, (m, k) in enumerate(zip(p.messages, before)):
        if k is None:
            continue
        for j, el in enumerate(m.children):
            if not derivable(k, el):
                who = vocab.SEND_SENDER[m.label.symbol]
                out.append(
                    f"not derivable by sender: element {j + 1} of message {i + 1} "
                    f"{render_term(el)} is unknown to {who}")
    return out


# -- line-delimited records ---------------------------------------------------

def to_record(p: Protocol, label: SecurityLabel | str | None = None, **extra) -> dict:
    rec = {
        "messages": [render_term(m) for m in p.messages],
        "kind": p.kind,
        "seed": p.seed,
    }
    if label is not None:
        if isinstance(label, SecurityLabel):
            rec["label"] = label.verdict
            rec["provenance"] = label.provenance
        else:
            rec["label"] = label
    if p.meta:
        rec["meta"] = p.meta
    rec.update(extra)
    return rec


def from_record(rec: dict) -> tuple[Protocol, str | None]:
    if not isinstance(rec.get("messages"), list):
        raise ValueError("record has no 'messages' list")
    msgs = tuple(parse_term(s) for s in rec["messages"])
    p = Protocol(msgs, rec.get("kind", TRANSPORT), rec.get("seed"), dict(rec.get("meta", {})))
    return p, rec.get("label")


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def write_records(path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(dumps_record(rec) + "\n")
            n += 1
    return n


def read_records(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def parse_protocol(text: str, kind: str = TRANSPORT) -> Protocol:
    """One message per non-empty line; ``#`` starts a comment."""
    msgs = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            msgs.append(parse_term(line))
    return Protocol(tuple(msgs), kind)
