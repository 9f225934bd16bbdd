"""Fixed-length protocol vectors and an MLP head for comparison.

``convert_tlm`` keeps one label histogram per message slot, so it sees
which message a symbol sits in but not how symbols are nested.
``convert_counts`` pools everything into one histogram plus a few shape
statistics and is weaker still.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from . import vocab
from .model import LABEL_INDEX, label_id
from .protocol import Protocol
from .terms import all_labels

TLM = "tlm"
COUNTS = "counts"
CONVERSIONS = (TLM, COUNTS)

SLOTS = vocab.DEFAULT_M_MAX + 2            # sends plus the two accept events
V = len(LABEL_INDEX)
_NON_BEHAVIOR = [i for i, lab in enumerate(all_labels()) if lab.kind != vocab.BEHAVIOR]


def convert_tlm(p: Protocol, slots: int = SLOTS) -> np.ndarray:
    """Per-slot label multiplicities, zero padded to ``slots`` messages.

    Messages beyond the last slot are pooled into it.
    """
    out = np.zeros((slots, V))
    for j, m in enumerate(p.messages):
        row = out[min(j, slots - 1)]
        for t in m.walk():
            row[label_id(t)] += 1
    return out.ravel()


def convert_counts(p: Protocol) -> np.ndarray:
    """Global histogram of non-behaviour labels, then message count,
    maximum depth and mean depth of the message trees."""
    hist = np.zeros(V)
    for m in p.messages:
        for t in m.walk():
            hist[label_id(t)] += 1
    depths = [m.depth() for m in p.messages]
    stats = [len(p.messages), max(depths, default=0), float(np.mean(depths)) if depths else 0.0]
    return np.concatenate([hist[_NON_BEHAVIOR], stats])


CONVERTERS = {TLM: convert_tlm, COUNTS: convert_counts}


def vector_width(scheme: str) -> int:
    return SLOTS * V if scheme == TLM else len(_NON_BEHAVIOR) + 3


@dataclass(frozen=True)
class MlpConfig:
    conversion: str = TLM
    hidden: int = 128
    seed: int = 0
    arch: str = "mlp"

    def __post_init__(self):
        if self.conversion not in CONVERSIONS:
            raise ValueError(f"unknown conversion {self.conversion!r}")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


MLP_PARAMS = ("W1", "b1", "W2", "b2", "W3", "b3")


class MlpClassifier:
    """V -> hidden -> hidden -> 2 with ReLU activations."""

    def __init__(self, cfg: MlpConfig = MlpConfig(), params: dict | None = None):
        self.cfg = cfg
        self.step = 0
        if params is None:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
            w, h = vector_width(cfg.conversion), cfg.hidden
            params = {
                "W1": ag.glorot_uniform(rng, h, w), "b1": np.zeros(h),
                "W2": ag.glorot_uniform(rng, h, h), "b2": np.zeros(h),
                "W3": ag.glorot_uniform(rng, 2, h), "b3": np.zeros(2),
            }
        self.params = {k: ag.param(params[k], k) for k in MLP_PARAMS}
        self._cache: dict[int, tuple] = {}

    def trainable(self):
        return list(self.params.values())

    def state(self):
        return {k: t.data for k, t in self.params.items()}

    def vectors(self, protocols) -> np.ndarray:
        conv = CONVERTERS[self.cfg.conversion]
        rows = []
        for p in protocols:
            hit = self._cache.get(id(p))
            if hit is None or hit[0] is not p:
                hit = (p, conv(p))
                self._cache[id(p)] = hit
            rows.append(hit[1])
        return np.stack(rows)

    def logits(self, protocols):
        P = self.params
        x = ag.const(self.vectors(protocols))
        h = ag.relu(ag.add(ag.matmul(x, ag.transpose(P["W1"])), P["b1"]))
        h = ag.relu(ag.add(ag.matmul(h, ag.transpose(P["W2"])), P["b2"]))
        return ag.add(ag.matmul(h, ag.transpose(P["W3"])), P["b3"])

    def classify(self, p: Protocol) -> tuple[float, float]:
        pr = ag.softmax(self.logits([p])).data[0]
        return float(pr[0]), float(pr[1])

    def predict(self, protocols, batch: int = 1024) -> np.ndarray:
        out = [ag.softmax(self.logits(protocols[i:i + batch])).data
               for i in range(0, len(protocols), batch)]
        return np.concatenate(out) if out else np.zeros((0, 2))


def train_mlp(protocols, labels, scheme: str = TLM, cfg=None, hidden: int = 128, seed: int = 0):
    """Same loss, optimiser and batching as the tree model."""
    from .model import TrainConfig, train
    model = MlpClassifier(MlpConfig(scheme, hidden, seed))
    curve = train(model, protocols, labels, cfg or TrainConfig(seed=seed))
    return model, curve
