"""ProVerif script emission and optional cross-checking.

Each role is rendered as a process: sends become ``out``, receives become
``in`` patterns with ``=expr`` for components the role can compute, fresh
bindings for unknown atoms and ``mN`` names for composite elements it
cannot rebuild (``N`` counts message elements across the whole run).
Bound composites are then opened with ``adec``/``sdec``, verified with
``verif`` or compared, in the same order the internal oracle uses.
"""
from __future__ import annotations

import re
import shutil
import subprocess
import tempfile
from pathlib import Path

from . import vocab
from .knowledge import _build_tower, _tower, dh_normalize
from .protocol import INSECURE, SECURE, UNKNOWN, Protocol
from .terms import SK, Term, atom, public_atoms

TEMPLATE_VERSION = "v1"


class UnsupportedConstruct(ValueError):
    pass


PREAMBLE = f"""(* template: {TEMPLATE_VERSION} *)
free c:channel.
free message:bitstring [private].
free ID_I:bitstring.
free ID_R:bitstring.
free ID_E:bitstring.
free lsk_E:bitstring.
free esk_E1:bitstring.
free esk_E2:bitstring.
free T_E:bitstring.

fun senc(bitstring, bitstring):bitstring.
reduc forall m:bitstring, k:bitstring; sdec(senc(m,k),k) = m.
fun pk(bitstring):bitstring.
fun aenc(bitstring, bitstring):bitstring.
reduc forall m:bitstring, k:bitstring; adec(aenc(m,pk(k)),k) = m.
fun sign(bitstring, bitstring):bitstring.
reduc forall m:bitstring, k:bitstring; getmess(sign(m,k)) = m.
reduc forall m:bitstring, k:bitstring; verif(sign(m,k),m,pk(k)) = true.
fun hash(bitstring):bitstring.
fun exp(bitstring, bitstring):bitstring.
equation forall x:bitstring, y:bitstring, z:bitstring; exp(exp(x,y),z) = exp(exp(x,z),y).

event protocol_start_I(bitstring).
event protocol_start_R(bitstring).
event acceptI(bitstring).
event acceptR(bitstring).

query attacker(message).
"""

MAIN = """process
  new lsk_I:bitstring;
  new lsk_R:bitstring;
  new K:bitstring;
  let pk_I = pk(lsk_I) in
  let pk_R = pk(lsk_R) in
  out(c, pk_I);
  out(c, pk_R);
  ( (!Initiator(lsk_I, pk_I, pk_R, K)) | (!Responder(lsk_R, pk_R, pk_I, K)) )
"""


def _name(t: Term) -> str:
    lab = t.label
    if lab.session is not None:
        raise UnsupportedConstruct(f"session-tagged atom {lab.name()}")
    if lab.symbol == "pk" and lab.role == "E":
        return "pk(lsk_E)"
    return lab.name()


def _seq(parts) -> str:
    return parts[0] if len(parts) == 1 else "(" + ",".join(parts) + ")"


class _RoleWriter:
    def __init__(self, p: Protocol, role: str):
        self.role = role
        self.peer = "R" if role == "I" else "I"
        self.owner = p.sk_owner()
        known = set(public_atoms(adversary_aware=True))
        known |= {atom("lsk", role), atom("K"), atom("lsk", "E"), atom("T", "I"), atom("T", "R")}
        known |= {atom("esk", r, i) for r in (role, "E") for i in vocab.FRESH_INDICES}
        if self.owner == role:
            known.add(SK)
        self.known = known
        self.env: dict[Term, str] = {}
        self.pending: list[tuple[Term, str, bool]] = []   # (term, name, verify_only)
        self.lines: list[str] = []

    # expressions
    def expr(self, t: Term, top=True):
        """Expression for ``t``; composites are rebuilt structurally when possible."""
        if not t.children:
            if t in self.env:
                return self.env[t]
            return _name(t) if t in self.known else None
        e = self._build(t)
        if e is None and top:
            e = self.env.get(t)
        return e

    def _build(self, t):
        s = t.label.symbol
        if s == "exp":
            base, exps = _tower(t)
            for i, e in enumerate(exps):
                ev = self.expr(e)
                if ev is None:
                    continue
                rest = self.expr(_build_tower(base, exps[:i] + exps[i + 1:]))
                if rest is not None:
                    return f"exp({rest},{ev})"
            return None
        kids = [self.expr(c) for c in t.children]
        if any(k is None for k in kids):
            return None
        if s in vocab.KEYED_FUNCTIONS:
            return f"{s}({_seq(kids[:-1])},{kids[-1]})"
        if s == "hash":
            return f"hash({_seq(kids)})"
        if s == "tuple":
            return "(" + ",".join(kids) + ")"
        raise UnsupportedConstruct(f"symbol {s}")

    # patterns
    def pattern(self, t: Term, name: str, bound: set) -> str:
        e = self.expr(t)
        if e is not None:
            return "=" + e
        if not t.children:
            n = _name(t)
            if n in bound:
                n = f"{n}_{len(bound)}"
            bound.add(n)
            self.env[t] = n
            return f"{n}:bitstring"
        bound.add(name)
        self.env[t] = name
        self.pending.append((t, name, False))
        return f"{name}:bitstring"

    def payload_pattern(self, kids, name):
        bound = set()
        pats = [self.pattern(c, f"{name}_{j + 1}", bound) for j, c in enumerate(kids)]
        return _seq(pats)

    def drain(self):
        progress = True
        while progress:
            progress = False
            for item in list(self.pending):
                t, name, verify_only = item
                line = self._open(t, name, verify_only)
                if line is None:
                    continue
                self.pending.remove(item)
                self.lines.extend(line)
                progress = True

    def _open(self, t, name, verify_only):
        s = t.label.symbol
        if s == "sign":
            payload = [self.expr(c) for c in t.children[:-1]]
            key = t.children[-1]
            pk_expr = "pk_" + key.label.role if key.label.role in vocab.HONEST else "pk(lsk_E)"
            if all(x is not None for x in payload):
                return [f"if verif({name}, {_seq(payload)},{pk_expr})=true then"]
            if verify_only:
                return None
            pat = self.payload_pattern(t.children[:-1], name)
            self.pending.append((t, name, True))
            return [f"let {pat} = getmess({name}) in"]
        e = self.expr(t, top=False)
        if e is not None:
            return [f"if {name} = {e} then"]
        if s == "senc":
            k = self.expr(t.children[-1])
            if k is None:
                return None
            pat = self.payload_pattern(t.children[:-1], name)
            return [f"let {pat} = sdec({name},{k}) in"]
        if s == "aenc":
            k = t.children[-1]
            if k.label.role != self.role:
                return None
            pat = self.payload_pattern(t.children[:-1], name)
            return [f"let {pat} = adec({name},lsk_{self.role}) in"]
        if s == "tuple":
            pat = self.payload_pattern(t.children, name)
            return [f"let {pat} = {name} in"]
        return None


def _role_block(p: Protocol, role: str) -> list[str]:
    w = _RoleWriter(p, role)
    counter = 0
    key = None
    for m in p.messages:
        m = dh_normalize(m)
        s = m.label.symbol
        if s in vocab.SEND_SENDER:
            first = counter + 1
            counter += len(m.children)
            if vocab.SEND_SENDER[s] == role:
                parts = [w.expr(c) for c in m.children]
                if any(x is None for x in parts):
                    raise UnsupportedConstruct(f"{role} cannot build message {m}")
                w.lines.append(f"out(c,({','.join(parts)}));")
            else:
                bound = set()
                pats = [w.pattern(c, f"m{first + j}", bound) for j, c in enumerate(m.children)]
                w.lines.append(f"in(c, ({','.join(pats)}));")
                w.drain()
        elif vocab.ACCEPT_PARTY[s] == role:
            key = w.expr(m.children[0])
            if key is None:
                raise UnsupportedConstruct(f"{role} cannot compute its session key")
            w.lines.append(f"event accept{role}({key});")
    if not p.accepts and p.sk_owner() is not None:
        key = w.expr(SK)
        if key is not None:
            w.lines.append(f"event accept{role}({key});")
    if key is not None:
        w.lines.append(f"out(c, senc(message, {key})).")
    else:
        w.lines.append("0.")
    return w.lines


def emit_proverif(p: Protocol) -> str:
    """Complete ProVerif script for ``p``; byte-deterministic."""
    for m in p.messages:
        for t in m.walk():
            if t.label.symbol not in vocab.ATOM_SYMBOLS + vocab.FUNCTION_SYMBOLS + vocab.BEHAVIOR_SYMBOLS:
                raise UnsupportedConstruct(f"symbol {t.label.symbol}")
    owner = p.sk_owner()
    out = [PREAMBLE]
    heads = {
        "I": ("Initiator", "lsk_I:bitstring, pk_I:bitstring, pk_R:bitstring, K:bitstring", "R"),
        "R": ("Responder", "lsk_R:bitstring, pk_R:bitstring, pk_I:bitstring, K:bitstring", "I"),
    }
    for role in vocab.HONEST:
        title, params, peer = heads[role]
        out.append(f"(* {title} *)")
        out.append(f"let {title}({params}) =")
        out.append(f"  event protocol_start_{role}(ID_{peer});")
        out.append(f"  new esk_{role}1:bitstring;")
        out.append(f"  new esk_{role}2:bitstring;")
        if owner == role:
            out.append("  new SK:bitstring;")
        out.append(f"  new T_{role}:bitstring;")
        out.append("")
        if role == "I":
            out += ["  out (c, T_I);", "  in (c, T_R:bitstring);"]
        else:
            out += ["  in (c, T_I:bitstring);", "  out (c, T_R);"]
        out.append("")
        out.append(f"  (* AUTOMATIC_{role} *)")
        out += ["  " + line for line in _role_block(p, role)]
        out.append("")
    out.append(MAIN)
    return "\n".join(out)


_RESULT = re.compile(r"RESULT .*attacker\(message(?:\[\])?\) (is true|is false|cannot be proved)")


def proverif_available() -> bool:
    return shutil.which("proverif") is not None


def run_proverif(script: str, timeout: float = 5.0) -> str:
    """Verdict of an installed ``proverif`` binary: secure, insecure or unknown."""
    exe = shutil.which("proverif")
    if exe is None:
        raise FileNotFoundError("proverif is not installed")
    with tempfile.TemporaryDirectory() as d:
        f = Path(d) / "p.pv"
        f.write_text(script, encoding="utf-8")
        try:
            r = subprocess.run([exe, str(f)], capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            return UNKNOWN
    return parse_result(r.stdout)


def parse_result(stdout: str) -> str:
    m = _RESULT.search(stdout)
    if m is None:
        return UNKNOWN
    return {"is true": SECURE, "is false": INSECURE}.get(m.group(1), UNKNOWN)
