"""Symbolic key-exchange protocols: random generation, Dolev-Yao labeling,
augmentation and tree-structured neural classification."""

from .protocol import INSECURE, SECURE, UNKNOWN, Protocol, SecurityLabel, parse_protocol
from .terms import Term, parse_term, render_term

__version__ = "0.1.0"

__all__ = ["INSECURE", "SECURE", "UNKNOWN", "Protocol", "SecurityLabel", "Term",
           "parse_protocol", "parse_term", "render_term"]
