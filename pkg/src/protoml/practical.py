"""Hand-encoded textbook key-exchange protocols with their attack flags.

Conventions used in the encodings:

* nonces and ephemeral values are ``esk``; a party's second fresh value
  (``esk X 2``) plays the role of a key contribution;
* MACs and key-derivation functions keyed with the shared key become
  ``hash`` over ``K`` and the inputs;
* Diffie-Hellman uses ``T I`` as the public generator;
* protocols that encrypt under the freshly derived key, rely on a trusted
  server or on static Diffie-Hellman keys cannot be written in the
  vocabulary and are listed in :data:`UNSUPPORTED` (or simplified, as noted).

Each secure entry may name an insecure twin: the same protocol with one
secret appended in the clear to a given message.
"""
from __future__ import annotations

from dataclasses import dataclass

from .augment import LEAK_SECRET, _append
from .protocol import ESTABLISHMENT, INSECURE, SECURE, TRANSPORT, Protocol, parse_protocol
from .terms import parse_term


@dataclass(frozen=True)
class Entry:
    number: str
    name: str
    kind: str
    text: str
    attack: bool                 # attack flag from the textbook table
    twin: tuple | None = None    # (secret, 1-based message index) for the leak twin
    note: str = ""


def _acc(key):
    return f"(acceptI {key})\n(acceptR {key})"


DH_KEY = "(exp (exp (T I) (esk I 1)) (esk R 1))"
GX, GY = "(exp (T I) (esk I 1))", "(exp (T I) (esk R 1))"

ENTRIES = (
    Entry("1.9", "STS protocol", ESTABLISHMENT, f"""
(sendIR {GX})
(sendRI {GY} (sign {GY} {GX} (lsk R)))
(sendIR (sign {GX} {GY} (lsk I)))
{_acc(DH_KEY)}""", False, ("(esk I 1)", 3),
          "encryption of the signatures under the new key omitted"),
    Entry("1.10", "STS protocol modified to include identifiers", ESTABLISHMENT, f"""
(sendIR {GX})
(sendRI {GY} (sign (ID I) {GY} {GX} (lsk R)))
(sendIR (sign (ID R) {GX} {GY} (lsk I)))
{_acc(DH_KEY)}""", False, None,
          "encryption of the signatures under the new key omitted"),
    Entry("3.14", "Revised Andrew protocol of Burrows et al.", TRANSPORT, f"""
(sendIR (ID I) (esk I 1))
(sendRI (senc (esk I 1) (SK) (esk R 1) (K)))
(sendIR (senc (esk R 1) (SK)))
(sendRI (esk R 2))
{_acc("(SK)")}""", True),
    Entry("3.16", "Boyd two-pass protocol", ESTABLISHMENT, f"""
(sendIR (esk I 1))
(sendRI (esk R 1))
{_acc("(hash (K) (esk I 1) (esk R 1))")}""", False, ("(K)", 1),
          "MAC-based key derivation written as a keyed hash"),
    Entry("3.17", "ISO/IEC 11770-2 Key Establishment Mechanism 1", ESTABLISHMENT, f"""
(sendIR (T I))
{_acc("(hash (K) (T I))")}""", False, ("(K)", 1)),
    Entry("3.18", "ISO/IEC 11770-2 Key Establishment Mechanism 2", TRANSPORT, f"""
(sendIR (senc (T I) (ID R) (SK) (K)))
{_acc("(SK)")}""", False, ("(SK)", 1)),
    Entry("3.19", "ISO/IEC 11770-2 Key Establishment Mechanism 3", TRANSPORT, f"""
(sendIR (T I) (ID R) (senc (SK) (K)) (hash (K) (T I) (ID R) (senc (SK) (K))))
{_acc("(SK)")}""", False, ("(K)", 1), "MAC written as a keyed hash"),
    Entry("3.20", "ISO/IEC 11770-2 Key Establishment Mechanism 4", TRANSPORT, f"""
(sendIR (esk I 1))
(sendRI (senc (esk I 1) (ID I) (SK) (K)))
{_acc("(SK)")}""", False, ("(SK)", 2), "roles renamed so the challenger sends first"),
    Entry("3.21", "ISO/IEC 11770-2 Key Establishment Mechanism 5", ESTABLISHMENT, f"""
(sendIR (senc (T I) (ID R) (esk I 2) (K)))
(sendRI (senc (T R) (ID I) (esk R 2) (K)))
{_acc("(hash (esk I 2) (esk R 2))")}""", False, ("(hash (esk I 2) (esk R 2))", 2)),
    Entry("3.22", "ISO/IEC 11770-2 Key Establishment Mechanism 6", ESTABLISHMENT, f"""
(sendIR (esk I 1))
(sendRI (senc (esk R 1) (esk I 1) (ID I) (esk R 2) (K)))
(sendIR (senc (esk I 1) (esk R 1) (esk I 2) (K)))
{_acc("(hash (esk I 2) (esk R 2))")}""", False, ("(hash (esk I 2) (esk R 2))", 3)),
    Entry("4.11", "ISO/IEC 11770-3 Key Transport Mechanism 1", TRANSPORT, f"""
(sendIR (aenc (ID I) (SK) (T I) (pk R)))
{_acc("(SK)")}""", False, ("(SK)", 1)),
    Entry("4.12", "ISO/IEC 11770-3 Key Transport Mechanism 2", TRANSPORT, f"""
(sendIR (ID R) (T I) (aenc (ID I) (SK) (pk R)) (sign (ID R) (T I) (aenc (ID I) (SK) (pk R)) (lsk I)))
{_acc("(SK)")}""", False, ("(SK)", 1)),
    Entry("4.13", "ISO/IEC 11770-3 Key Transport Mechanism 3", TRANSPORT, f"""
(sendIR (aenc (ID I) (SK) (T I) (sign (ID R) (SK) (T I) (lsk I)) (pk R)))
{_acc("(SK)")}""", False, ("(SK)", 1)),
    Entry("4.14", "Denning-Sacco public key protocol", TRANSPORT, f"""
(sendIR (aenc (sign (SK) (T I) (lsk I)) (pk R)))
{_acc("(SK)")}""", False, ("(SK)", 1), "certificates omitted"),
    Entry("4.15", "ISO/IEC 11770-3 Key Transport Mechanism 4", TRANSPORT, f"""
(sendIR (esk I 1))
(sendRI (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) (sign (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) (lsk R)))
{_acc("(SK)")}""", False, ("(SK)", 2)),
    Entry("4.16", "ISO/IEC 11770-3 Key Transport Mechanism 5", ESTABLISHMENT, f"""
(sendIR (esk I 1))
(sendRI (ID I) (esk I 1) (esk R 1) (aenc (ID R) (esk R 2) (pk I)) (sign (ID I) (esk I 1) (esk R 1) (aenc (ID R) (esk R 2) (pk I)) (lsk R)))
(sendIR (ID R) (esk R 1) (aenc (ID I) (esk I 2) (pk R)) (sign (ID R) (esk R 1) (aenc (ID I) (esk I 2) (pk R)) (lsk I)))
{_acc("(hash (esk I 2) (esk R 2))")}""", False, ("(hash (esk I 2) (esk R 2))", 3)),
    Entry("4.17", "ISO/IEC 11770-3 Key Transport Mechanism 6", ESTABLISHMENT, f"""
(sendIR (aenc (ID I) (esk I 2) (esk I 1) (pk R)))
(sendRI (aenc (ID R) (esk R 2) (esk I 1) (esk R 1) (pk I)))
(sendIR (esk R 1))
{_acc("(hash (esk I 2) (esk R 2))")}""", False, ("(hash (esk I 2) (esk R 2))", 3)),
    Entry("4.18", "Helsinki protocol", ESTABLISHMENT, f"""
(sendIR (aenc (ID I) (esk I 2) (esk I 1) (pk R)))
(sendRI (aenc (esk R 2) (esk I 1) (esk R 1) (pk I)))
(sendIR (esk R 1))
{_acc("(hash (esk I 2) (esk R 2))")}""", True),
    Entry("4.19", "Blake-Wilson-Menezes key transport protocol", TRANSPORT, f"""
(sendIR (esk I 1))
(sendRI (esk R 1) (aenc (SK) (pk I)) (sign (ID R) (ID I) (esk I 1) (esk R 1) (aenc (SK) (pk I)) (lsk R)))
(sendIR (sign (ID I) (esk R 1) (lsk I)))
{_acc("(SK)")}""", False, ("(SK)", 2)),
    Entry("4.20", "Needham-Schroeder public key protocol", ESTABLISHMENT, f"""
(sendIR (aenc (esk I 1) (ID I) (pk R)))
(sendRI (aenc (esk I 1) (esk R 1) (pk I)))
(sendIR (aenc (esk R 1) (pk R)))
{_acc("(hash (esk I 1) (esk R 1))")}""", True),
    Entry("4.22", "Needham-Schroeder-Lowe protocol modified by Basin et al.", ESTABLISHMENT, f"""
(sendIR (aenc (esk I 1) (ID I) (pk R)))
(sendRI (aenc (esk I 1) (esk R 1) (ID R) (pk I)))
(sendIR (aenc (esk R 1) (pk R)))
{_acc("(hash (esk I 1) (esk R 1))")}""", False, ("(hash (esk I 1) (esk R 1))", 3)),
    Entry("4.24", "X.509 one-pass authentication", TRANSPORT, f"""
(sendIR (T I) (esk I 1) (ID R) (aenc (SK) (pk R)) (sign (T I) (esk I 1) (ID R) (aenc (SK) (pk R)) (lsk I)))
{_acc("(SK)")}""", False, ("(SK)", 1)),
    Entry("4.26", "X.509 two-pass authentication", ESTABLISHMENT, f"""
(sendIR (T I) (esk I 1) (ID R) (aenc (esk I 2) (pk R)) (sign (T I) (esk I 1) (ID R) (aenc (esk I 2) (pk R)) (lsk I)))
(sendRI (T R) (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) (sign (T R) (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) (lsk R)))
{_acc("(hash (esk I 2) (esk R 2))")}""", False, None),
    Entry("4.27", "X.509 three-pass authentication", ESTABLISHMENT, f"""
(sendIR (esk I 1) (ID R) (aenc (esk I 2) (pk R)) (sign (esk I 1) (ID R) (aenc (esk I 2) (pk R)) (lsk I)))
(sendRI (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) (sign (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) (lsk R)))
(sendIR (sign (esk R 1) (ID R) (lsk I)))
{_acc("(hash (esk I 2) (esk R 2))")}""", False, ("(hash (esk I 2) (esk R 2))", 3)),
    Entry("5.1", "Diffie-Hellman key agreement", ESTABLISHMENT, f"""
(sendIR {GX})
(sendRI {GY})
{_acc(DH_KEY)}""", True),
)

UNSUPPORTED = {
    "1.15": "Protocol ntor of Goldberg, Stebila and Ustaoglu: needs static Diffie-Hellman keys (pk as a power of lsk)",
}


def practical_protocol(e: Entry) -> Protocol:
    p = parse_protocol(e.text, e.kind)
    return Protocol(p.messages, e.kind, None, {"source": e.number, "name": e.name})


def leak_twin(e: Entry) -> Protocol:
    secret, index = e.twin
    p = practical_protocol(e)
    q = _append(p, index - 1, parse_term(secret), LEAK_SECRET)
    meta = dict(q.meta)
    meta["source"] = e.number + "-leak"
    meta["twin_of"] = e.number
    meta["leaked"] = secret
    return Protocol(q.messages, q.kind, None, meta)


def encode_practical_corpus() -> list[tuple[Protocol, str]]:
    """Table entries (ground truth from their attack flag) followed by the
    leak twins (ground truth Insecure)."""
    out = []
    for e in ENTRIES:
        out.append((practical_protocol(e), INSECURE if e.attack else SECURE))
    for e in ENTRIES:
        if e.twin is not None:
            out.append((leak_twin(e), INSECURE))
    return out
