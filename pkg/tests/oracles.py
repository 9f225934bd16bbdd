"""Independent reference implementations used by the tests.

These deliberately share no code with the package beyond the term type:
the deduction oracle enumerates a finite term universe bottom-up instead of
running the worklist/top-down procedure under test.
"""
from __future__ import annotations

import math

import numpy as np

from protoml.terms import Term, atom, fn

# five atoms: a nonce, the shared key, one key pair and an identity
ATOMS = (atom("esk", "I", 1), atom("K"), atom("pk", "R"), atom("lsk", "R"), atom("ID", "I"))
PK_R, LSK_R = atom("pk", "R"), atom("lsk", "R")


def universe(depth: int = 3) -> list[Term]:
    """Every term of depth <= ``depth`` over :data:`ATOMS` built with
    binary tuples, unary hash, and single-payload senc/aenc/sign."""
    levels = [list(ATOMS)]
    for _ in range(depth - 1):
        below = [t for lv in levels for t in lv]
        new = set()
        for x in below:
            new.add(fn("hash", x))
            new.add(fn("aenc", x, PK_R))
            new.add(fn("sign", x, LSK_R))
            for k in ATOMS:
                new.add(fn("senc", x, k))
            for y in below:
                new.add(fn("tuple", x, y))
        seen = set(below)
        levels.append(sorted(new - seen, key=repr))
    return [t for lv in levels for t in lv]


def _opens(t: Term, have: set) -> list[Term]:
    s = t.label.symbol
    if s in ("tuple", "sign"):
        return list(t.children if s == "tuple" else t.children[:-1])
    if s == "senc" and t.children[-1] in have:
        return list(t.children[:-1])
    if s == "aenc":
        k = t.children[-1]
        if k.label.symbol == "pk" and atom("lsk", k.label.role) in have:
            return list(t.children[:-1])
    return []


def decompose_closure(terms) -> set:
    """Smallest superset closed under projection, readable signatures and
    decryption with a held key, computed by naive iteration to a fixpoint."""
    have = set(terms)
    while True:
        new = {c for t in have for c in _opens(t, have)} - have
        if not new:
            return have
        have |= new


def derivable_set(terms, univ) -> set:
    """Members of ``univ`` an adversary holding ``terms`` can produce."""
    have = decompose_closure(terms)
    by_depth = sorted(univ, key=lambda t: t.depth())
    while True:
        grew = False
        for u in by_depth:
            if u not in have and u.children and all(c in have for c in u.children):
                have.add(u)
                grew = True
        if not grew:
            break
        # composed terms never open anything new, but a freshly composed key could
        opened = decompose_closure(have)
        if opened != have:
            have = opened
    return have & set(univ)


def naive_derivable(have: set, t: Term) -> bool:
    """Composition by plain recursion over an already decomposed set."""
    if t in have:
        return True
    if not t.children or t.label.kind != "function":
        return False
    return all(naive_derivable(have, c) for c in t.children)


# -- numerics --------------------------------------------------------------------

def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def reference_logits(params: dict, protocol, label_id, n: int) -> np.ndarray:
    """Node-by-node recursive Child-Sum Tree-LSTM, then a plain LSTM over the
    message roots, then the linear head.  Gate blocks are ordered i, o, u, f."""
    E, W, Ui, Uf, b = (params[k] for k in ("embedding", "tree_W", "tree_U_iou", "tree_U_f", "tree_b"))

    def node(t):
        kids = [node(c) for c in t.children]
        z = W @ E[label_id(t)]
        hsum = sum((h for h, _ in kids), np.zeros(n))
        iou = z[:3 * n] + Ui @ hsum + b[:3 * n]
        i, o, u = _sig(iou[:n]), _sig(iou[n:2 * n]), np.tanh(iou[2 * n:])
        c = i * u
        for h_k, c_k in kids:
            f = _sig(z[3 * n:] + Uf @ h_k + b[3 * n:])
            c = c + f * c_k
        return o * np.tanh(c), c

    sW, sU, sb = params["seq_W"], params["seq_U"], params["seq_b"]
    h, c = np.zeros(n), np.zeros(n)
    for j, m in enumerate(protocol.messages):
        x, _ = node(m)
        z = sW @ x + sU @ h + sb
        i, o, u, f = _sig(z[:n]), _sig(z[n:2 * n]), np.tanh(z[2 * n:3 * n]), _sig(z[3 * n:])
        c = i * u + (f * c if j else 0.0)
        h = o * np.tanh(c)
    return params["out_W"] @ h + params["out_b"]


def rmsprop_reference(theta, grads, lr, decay, eps):
    """Plain-Python RMSprop over a sequence of gradients."""
    theta = list(theta)
    v = [0.0] * len(theta)
    for g in grads:
        for k in range(len(theta)):
            v[k] = decay * v[k] + (1 - decay) * g[k] * g[k]
            theta[k] -= lr * g[k] / (math.sqrt(v[k]) + eps)
    return theta


def finite_difference_errors(loss_fn, params: dict, eps: float = 1e-5, floor: float = 1e-8,
                             limit: int | None = None, seed: int = 0) -> dict:
    """Worst per-coordinate relative error between ``param.grad`` (already
    filled by a backward pass) and central differences of ``loss_fn``.

    ``limit`` caps the coordinates checked per group (uniform sample)."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name, t in params.items():
        flat = t.data.reshape(-1)
        grad = t.grad.reshape(-1) if t.grad is not None else np.zeros_like(flat)
        idx = np.arange(flat.size)
        if limit is not None and flat.size > limit:
            idx = rng.choice(flat.size, limit, replace=False)
        err = 0.0
        for j in idx:
            old = flat[j]
            flat[j] = old + eps
            up = float(loss_fn())
            flat[j] = old - eps
            down = float(loss_fn())
            flat[j] = old
            fd = (up - down) / (2 * eps)
            err = max(err, abs(fd - grad[j]) / max(abs(fd), abs(grad[j]), floor))
        worst[name] = err
    return worst
