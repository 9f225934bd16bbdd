"""Term algebra for protocol messages: labels, syntax trees, canonical text.

Messages are node-labelled ordered trees.  Leaves are atomic message
components (``ID``, ``esk``, ``pk`` ...), inner nodes are cryptographic
operations, and the root of every message is a party behaviour
(``sendIR``, ``acceptR`` ...).

The canonical text form is parenthesised prefix notation::

    (sendRI (ID I) (aenc (ID R) (SK) (pk I)))

Atom fields follow the symbol: a party tag (``I``, ``R`` or ``E``), a
fresh index for ephemeral keys and, for terms that only exist inside the
attack search, a session tag ``@n``.
"""
from __future__ import annotations

import re
from typing import Iterator, NamedTuple

from . import vocab
from .vocab import ATOMIC, BEHAVIOR, FUNCTION


class TermError(ValueError):
    """Raised for malformed term text or terms violating arity rules."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)
        self.position = position


class NodeLabel(NamedTuple):
    kind: str
    symbol: str
    role: str | None = None
    index: int | None = None
    session: int | None = None

    def fields(self) -> list[str]:
        out = []
        if self.role is not None:
            out.append(self.role)
        if self.index is not None:
            out.append(str(self.index))
        if self.session is not None:
            out.append(f"@{self.session}")
        return out

    def name(self) -> str:
        """Flat identifier such as ``esk_I1`` or ``aenc``."""
        s = self.symbol
        if self.role is not None:
            s += "_" + self.role
        if self.index is not None:
            s += str(self.index)
        if self.session is not None:
            s += f"@{self.session}"
        return s


def _kind_of(symbol: str) -> str:
    if symbol in vocab.ATOM_SYMBOLS:
        return ATOMIC
    if symbol in vocab.FUNCTION_SYMBOLS:
        return FUNCTION
    if symbol in vocab.BEHAVIOR_SYMBOLS:
        return BEHAVIOR
    raise TermError(f"unknown symbol {symbol!r}")


class Term:
    """Immutable node-labelled ordered tree with a cached structural hash."""

    __slots__ = ("label", "children", "_hash", "_text")

    def __init__(self, label: NodeLabel, children=()):
        self.label = label
        self.children = tuple(children)
        self._hash = hash((label, self.children))
        self._text = None

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Term):
            return NotImplemented
        return (
            self._hash == other._hash
            and self.label == other.label
            and self.children == other.children
        )

    def __lt__(self, other):
        return render_term(self) < render_term(other)

    def __repr__(self):
        return f"Term({render_term(self)})"

    @property
    def symbol(self) -> str:
        return self.label.symbol

    @property
    def kind(self) -> str:
        return self.label.kind

    @property
    def is_atom(self) -> bool:
        return self.label.kind == ATOMIC

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def depth(self) -> int:
        """Edges on the longest root-to-leaf path."""
        if not self.children:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def walk(self) -> Iterator["Term"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            t = stack.pop()
            yield t
            stack.extend(reversed(t.children))

    def atoms(self) -> set["Term"]:
        return {t for t in self.walk() if t.is_atom}

    def payload(self) -> tuple["Term", ...]:
        """Children without the trailing key of senc/aenc/sign."""
        if self.label.symbol in vocab.KEYED_FUNCTIONS:
            return self.children[:-1]
        return self.children

    def key(self) -> "Term | None":
        if self.label.symbol in vocab.KEYED_FUNCTIONS:
            return self.children[-1]
        return None

    def replace_at(self, path: tuple[int, ...], new: "Term") -> "Term":
        """Return a copy with the subtree at ``path`` (child indices) replaced."""
        if not path:
            return new
        i = path[0]
        kids = list(self.children)
        kids[i] = kids[i].replace_at(path[1:], new)
        return Term(self.label, kids)

    def subterm(self, path: tuple[int, ...]) -> "Term":
        t = self
        for i in path:
            t = t.children[i]
        return t

    def paths(self) -> Iterator[tuple[tuple[int, ...], "Term"]]:
        stack = [((), self)]
        while stack:
            p, t = stack.pop()
            yield p, t
            for i in range(len(t.children) - 1, -1, -1):
                stack.append((p + (i,), t.children[i]))


# -- constructors -----------------------------------------------------------

def atom(symbol: str, role: str | None = None, index: int | None = None,
         session: int | None = None) -> Term:
    return Term(NodeLabel(ATOMIC, symbol, role, index, session))


def fn(symbol: str, *children: Term) -> Term:
    return Term(NodeLabel(FUNCTION, symbol), children)


def behavior(symbol: str, *children: Term) -> Term:
    return Term(NodeLabel(BEHAVIOR, symbol), children)


def ID(p): return atom("ID", p)
def esk(p, i=1): return atom("esk", p, i)
def lsk(p): return atom("lsk", p)
def pk(p): return atom("pk", p)
def T(p): return atom("T", p)


K = atom("K")
SK = atom("SK")


def public_atoms(adversary_aware: bool = False) -> frozenset[Term]:
    """ID, public key and timestamp of each party."""
    parties = vocab.ROLES if adversary_aware else vocab.HONEST
    return frozenset(a(p) for p in parties for a in (ID, pk, T))


def all_labels() -> list[NodeLabel]:
    """Every label that may occur in a protocol, in a fixed order."""
    out = []
    for s in vocab.ATOM_SYMBOLS:
        if s == "esk":
            out += [NodeLabel(ATOMIC, s, r, i) for r in vocab.ROLES for i in vocab.FRESH_INDICES]
        elif s in vocab.PARTY_ATOMS:
            out += [NodeLabel(ATOMIC, s, r) for r in vocab.ROLES]
        else:
            out.append(NodeLabel(ATOMIC, s))
    out += [NodeLabel(FUNCTION, s) for s in vocab.FUNCTION_SYMBOLS]
    out += [NodeLabel(BEHAVIOR, s) for s in vocab.BEHAVIOR_SYMBOLS]
    return out


# -- rendering and parsing --------------------------------------------------

def render_term(t: Term) -> str:
    if t._text is None:
        parts = [t.label.symbol, *t.label.fields()]
        parts += [render_term(c) for c in t.children]
        t._text = "(" + " ".join(parts) + ")"
    return t._text


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def _tokens(text: str):
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                return
            raise TermError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastindex)
        yield m.group(m.lastindex), start
        pos = m.end()


def parse_term(text: str, check: bool = True) -> Term:
    """Parse canonical text into a Term.

    Whitespace is insignificant.  With ``check`` the arity and key rules
    are enforced and :class:`TermError` is raised on violation.
    """
    toks = list(_tokens(text))
    if not toks:
        raise TermError("empty input", 0)
    pos = 0

    def parse_one():
        nonlocal pos
        if pos >= len(toks):
            raise TermError("unexpected end of input", len(text))
        tok, off = toks[pos]
        if tok != "(":
            raise TermError(f"expected '(' but found {tok!r}", off)
        pos += 1
        if pos >= len(toks) or toks[pos][0] in "()":
            raise TermError("expected a symbol", off)
        symbol, soff = toks[pos]
        pos += 1
        try:
            kind = _kind_of(symbol)
        except TermError as e:
            raise TermError(str(e), soff) from None
        role = index = session = None
        while pos < len(toks) and toks[pos][0] not in "()":
            f, foff = toks[pos]
            pos += 1
            if f in vocab.ROLES and role is None and index is None:
                role = f
            elif f.isdigit() and index is None:
                index = int(f)
            elif f.startswith("@") and f[1:].isdigit() and session is None:
                session = int(f[1:])
            else:
                raise TermError(f"bad field {f!r} for {symbol}", foff)
        children = []
        while pos < len(toks) and toks[pos][0] == "(":
            children.append(parse_one())
        if pos >= len(toks) or toks[pos][0] != ")":
            raise TermError(f"unclosed {symbol!r}", off)
        pos += 1
        return Term(NodeLabel(kind, symbol, role, index, session), children)

    t = parse_one()
    if pos != len(toks):
        raise TermError(f"trailing input {toks[pos][0]!r}", toks[pos][1])
    if check:
        problems = term_violations(t)
        if problems:
            raise TermError(problems[0])
    return t


def canonical(text: str) -> str:
    return render_term(parse_term(text))


# -- structural rules -------------------------------------------------------

def label_violations(label: NodeLabel) -> list[str]:
    s = label.symbol
    out = []
    if label.kind == ATOMIC:
        if s in vocab.PARTY_ATOMS:
            if label.role not in vocab.ROLES:
                out.append(f"arity: atom {s} needs a party tag")
        elif label.role is not None:
            out.append(f"arity: atom {s} takes no party tag")
        if s == "esk":
            if label.index not in vocab.FRESH_INDICES:
                out.append(f"arity: esk needs a fresh index in {vocab.FRESH_INDICES}")
        elif label.index is not None:
            out.append(f"arity: atom {s} takes no fresh index")
    elif label.role is not None or label.index is not None:
        out.append(f"arity: {s} takes no fields")
    if label.session is not None:
        out.append(f"arity: session tag on {s} is internal only")
    return out


def term_violations(t: Term, at_root: bool = True) -> list[str]:
    """Arity and key-position rules; a behaviour label is only legal at the root."""
    out = list(label_violations(t.label))
    s, kids, kind = t.label.symbol, t.children, t.label.kind
    if kind == ATOMIC and kids:
        out.append(f"arity: atom {s} has children")
    elif kind == BEHAVIOR:
        if not at_root:
            out.append(f"arity: behaviour {s} below the root")
        if s.startswith("send") and len(kids) < 1:
            out.append(f"arity: {s} requires at least one child")
        if s.startswith("accept") and len(kids) != 1:
            out.append(f"arity: {s} requires exactly one child")
    elif kind == FUNCTION:
        if s in vocab.KEYED_FUNCTIONS:
            if len(kids) < 2:
                out.append(f"arity: {s} requires a payload and a key")
            else:
                key = kids[-1]
                want = {"senc": None, "aenc": "pk", "sign": "lsk"}[s]
                if not key.is_atom or (want is not None and key.label.symbol != want):
                    out.append(f"arity: {s} key must be {'an atom' if want is None else want}")
        elif s == "hash" and len(kids) < 1:
            out.append("arity: hash requires at least one child")
        elif s == "exp" and len(kids) != 2:
            out.append("arity: exp requires exactly two children")
        elif s == "tuple" and len(kids) < 2:
            out.append("arity: tuple requires at least two children")
    for c in kids:
        out += term_violations(c, at_root=False)
    return out
