"""Tree-LSTM then LSTM protocol classifier.

Every node label owns an embedding row.  Each message tree is encoded
bottom-up by a Child-Sum Tree-LSTM; the root hidden states of the
messages are fed in order to a sequence LSTM whose final hidden state
goes through a linear layer and softmax over (secure, insecure).

A batch of protocols is evaluated level by level: all nodes of the same
height across the batch are updated with one set of matrix products,
children are fetched with row gathers and summed with segment sums.
Single-protocol classification instead walks the trees node by node in
plain numpy, which keeps its cost proportional to the node count.
"""
from __future__ import annotations

import hashlib
import json
import time
import zipfile
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .protocol import INSECURE, SECURE, Protocol
from .terms import Term, all_labels

FORMAT_VERSION = 1
LABEL_INDEX = {lab: i for i, lab in enumerate(all_labels())}
CLASSES = (SECURE, INSECURE)


class UnknownLabel(KeyError):
    pass


class EmptyDataset(ValueError):
    pass


class SingleClassDataset(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def label_id(t: Term) -> int:
    try:
        return LABEL_INDEX[t.label]
    except KeyError:
        raise UnknownLabel(f"no embedding for {t.label.name()}") from None


def class_index(verdict: str) -> int:
    return CLASSES.index(verdict)


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 128
    embed: int = 128
    positional: bool = False      # sinusoidal child-position tag on inputs
    trainable_embeddings: bool = True
    seed: int = 0
    arch: str = "tree"

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- flattening ------------------------------------------------------------------

@dataclass
class _Flat:
    labels: list          # label id per node
    heights: list
    parent: list          # parent node id or -1
    position: list        # index among the parent's children
    roots: list           # node id of each message root, in order


def flatten(p: Protocol) -> _Flat:
    f = _Flat([], [], [], [], [])
    for m in p.messages:
        f.roots.append(_add_tree(f, m, -1, 0))
    return f


def _add_tree(f, t, parent, pos):
    nid = len(f.labels)
    f.labels.append(label_id(t))
    f.heights.append(0)
    f.parent.append(parent)
    f.position.append(pos)
    h = 0
    for k, c in enumerate(t.children):
        cid = _add_tree(f, c, nid, k)
        h = max(h, f.heights[cid] + 1)
    f.heights[nid] = h
    return nid


class _Plan:
    """Index arrays for evaluating a batch of flattened protocols."""

    def __init__(self, flats):
        labels, heights, parent, position = [], [], [], []
        roots = []
        for b, f in enumerate(flats):
            off = len(labels)
            labels += f.labels
            heights += f.heights
            parent += [q + off if q >= 0 else -1 for q in f.parent]
            position += f.position
            roots.append([r + off for r in f.roots])
        heights = np.asarray(heights)
        parent = np.asarray(parent)
        self.n_nodes = len(labels)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.position = np.asarray(position, dtype=np.int64)
        # state order: by height, then node id
        order = np.lexsort((np.arange(self.n_nodes), heights))
        state_pos = np.empty(self.n_nodes, dtype=np.int64)
        state_pos[order] = np.arange(self.n_nodes)
        self.levels = []
        H = int(heights.max()) if self.n_nodes else -1
        for h in range(H + 1):
            nodes = order[heights[order] == h]
            local = {int(v): i for i, v in enumerate(nodes)}
            kids = np.nonzero((parent >= 0) & np.isin(parent, nodes))[0]
            kids = kids[np.argsort(state_pos[kids], kind="stable")]
            self.levels.append((
                nodes,
                state_pos[kids],
                np.asarray([local[int(parent[k])] for k in kids], dtype=np.int64),
            ))
        self.batch = len(flats)
        self.steps = max((len(r) for r in roots), default=0)
        flat_roots = [r for rs in roots for r in rs]
        self.root_state = state_pos[np.asarray(flat_roots, dtype=np.int64)] if flat_roots else np.zeros(0, np.int64)
        self.seq_index, self.seq_mask = [], []
        base = 0
        starts = []
        for rs in roots:
            starts.append(base)
            base += len(rs)
        for t in range(self.steps):
            idx = np.asarray([starts[b] + t if t < len(roots[b]) else 0 for b in range(self.batch)])
            mask = np.asarray([1.0 if t < len(roots[b]) else 0.0 for b in range(self.batch)])
            self.seq_index.append(idx)
            self.seq_mask.append(None if mask.all() else mask[:, None])


def sinusoid(pos: np.ndarray, d: int) -> np.ndarray:
    i = np.arange(d // 2)
    ang = pos[:, None] / np.power(10000.0, 2 * i / d)[None, :]
    out = np.zeros((len(pos), d))
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)[:, : d - d // 2]
    return out


def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


# -- model ---------------------------------------------------------------------------

PARAM_NAMES = ("embedding", "tree_W", "tree_U_iou", "tree_U_f", "tree_b",
               "seq_W", "seq_U", "seq_b", "out_W", "out_b")


class TreeLstmClassifier:
    """Gate blocks are stacked in the order i, o, u, f in every W/U/b."""

    def __init__(self, cfg: ModelConfig = ModelConfig(), params: dict | None = None):
        self.cfg = cfg
        self.step = 0
        if params is None:
            params = self._init(cfg)
        self.params = {k: ag.param(params[k], k) for k in PARAM_NAMES}
        self._flat_cache: dict[int, tuple] = {}

    @staticmethod
    def _init(cfg):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
        n, d, V = cfg.hidden, cfg.embed, len(LABEL_INDEX)
        g = lambda o, i: ag.glorot_uniform(rng, o, i)
        fb = np.zeros(4 * n)
        fb[3 * n:] = 1.0
        return {
            "embedding": rng.standard_normal((V, d)),
            "tree_W": np.concatenate([g(n, d) for _ in range(4)]),
            "tree_U_iou": np.concatenate([g(n, n) for _ in range(3)]),
            "tree_U_f": g(n, n),
            "tree_b": fb.copy(),
            "seq_W": np.concatenate([g(n, n) for _ in range(4)]),
            "seq_U": np.concatenate([g(n, n) for _ in range(4)]),
            "seq_b": fb.copy(),
            "out_W": g(2, n),
            "out_b": np.zeros(2),
        }

    def trainable(self) -> list[Tensor]:
        return [t for k, t in self.params.items()
                if k != "embedding" or self.cfg.trainable_embeddings]

    def _flat(self, p):
        key = id(p)
        hit = self._flat_cache.get(key)
        if hit is not None and hit[0] is p:
            return hit[1]
        f = flatten(p)
        if len(self._flat_cache) > 100_000:
            self._flat_cache.clear()
        self._flat_cache[key] = (p, f)
        return f

    # forward pieces
    def _tree_states(self, plan: _Plan):
        P = self.params
        n = self.cfg.hidden
        x = ag.gather_rows(P["embedding"], plan.labels)
        if self.cfg.positional:
            x = ag.add(x, sinusoid(plan.position.astype(float), self.cfg.embed))
        xw = ag.matmul(x, ag.transpose(P["tree_W"]))
        b_iou = ag.slice_cols(P["tree_b"], 0, 3 * n)
        b_f = ag.slice_cols(P["tree_b"], 3 * n, 4 * n)
        S_h = S_c = None
        for nodes, child_pos, child_parent in plan.levels:
            xl = ag.gather_rows(xw, nodes)
            pre = ag.add(ag.slice_cols(xl, 0, 3 * n), b_iou)
            if len(child_pos):
                hc = ag.gather_rows(S_h, child_pos)
                cc = ag.gather_rows(S_c, child_pos)
                hsum = ag.segment_sum(hc, child_parent, len(nodes))
                pre = ag.add(pre, ag.matmul(hsum, ag.transpose(P["tree_U_iou"])))
                fx = ag.gather_rows(ag.slice_cols(xl, 3 * n, 4 * n), child_parent)
                f = ag.sigmoid(ag.add(ag.add(fx, ag.matmul(hc, ag.transpose(P["tree_U_f"]))), b_f))
                fc = ag.segment_sum(ag.mul(f, cc), child_parent, len(nodes))
            i = ag.sigmoid(ag.slice_cols(pre, 0, n))
            o = ag.sigmoid(ag.slice_cols(pre, n, 2 * n))
            u = ag.tanh(ag.slice_cols(pre, 2 * n, 3 * n))
            c = ag.mul(i, u)
            if len(child_pos):
                c = ag.add(c, fc)
            h = ag.mul(o, ag.tanh(c))
            S_h = h if S_h is None else ag.concat([S_h, h])
            S_c = c if S_c is None else ag.concat([S_c, c])
        return S_h, S_c

    def _sequence(self, plan: _Plan, roots: Tensor):
        P = self.params
        n = self.cfg.hidden
        xw = ag.matmul(roots, ag.transpose(P["seq_W"]))
        h = c = None
        for idx, mask in zip(plan.seq_index, plan.seq_mask):
            pre = ag.add(ag.gather_rows(xw, idx), P["seq_b"])
            if h is not None:
                pre = ag.add(pre, ag.matmul(h, ag.transpose(P["seq_U"])))
            i = ag.sigmoid(ag.slice_cols(pre, 0, n))
            o = ag.sigmoid(ag.slice_cols(pre, n, 2 * n))
            u = ag.tanh(ag.slice_cols(pre, 2 * n, 3 * n))
            c_new = ag.mul(i, u)
            if c is not None:
                f = ag.sigmoid(ag.slice_cols(pre, 3 * n, 4 * n))
                c_new = ag.add(c_new, ag.mul(f, c))
            h_new = ag.mul(o, ag.tanh(c_new))
            if mask is not None and h is not None:
                keep = 1.0 - mask
                h_new = ag.add(ag.mul(h_new, mask), ag.mul(h, keep))
                c_new = ag.add(ag.mul(c_new, mask), ag.mul(c, keep))
            h, c = h_new, c_new
        return h

    def encode_batch(self, protocols) -> Tensor:
        """Final sequence hidden state per protocol, shape (B, n)."""
        plan = _Plan([self._flat(p) for p in protocols])
        S_h, _ = self._tree_states(plan)
        roots = ag.gather_rows(S_h, plan.root_state)
        return self._sequence(plan, roots)

    def logits(self, protocols) -> Tensor:
        h = self.encode_batch(protocols)
        return ag.add(ag.matmul(h, ag.transpose(self.params["out_W"])), self.params["out_b"])

    # single-item API
    def encode_message(self, m: Term) -> tuple[np.ndarray, np.ndarray]:
        """(h, c) of the message root."""
        f = _Flat([], [], [], [], [])
        f.roots.append(_add_tree(f, m, -1, 0))
        plan = _Plan([f])
        S_h, S_c = self._tree_states(plan)
        r = plan.root_state[0]
        return S_h.data[r].copy(), S_c.data[r].copy()

    def encode_protocol(self, p: Protocol) -> np.ndarray:
        return self.encode_batch([p]).data[0].copy()

    def classify(self, p: Protocol) -> tuple[float, float]:
        """(P(secure), P(insecure)) from the node-by-node inference path."""
        z = self.single_logits(p)
        e = np.exp(z - z.max())
        ag._count("softmax", 8)
        probs = e / e.sum()
        return float(probs[0]), float(probs[1])

    # graph-free inference for one protocol: a fixed amount of work per node
    # and per message, so cost follows protocol size instead of tree height
    def single_logits(self, p: Protocol) -> np.ndarray:
        P = self.state()
        n, d = self.cfg.hidden, self.cfg.embed
        node_ops = 8 * n * d + 6 * n * n + 12 * n + (d if self.cfg.positional else 0)
        child_ops = 2 * n * n + 6 * n
        W, Ui, Uf, b = P["tree_W"], P["tree_U_iou"], P["tree_U_f"], P["tree_b"]
        E = P["embedding"]

        def node(t, pos):
            kids = [node(c, k) for k, c in enumerate(t.children)]
            x = E[label_id(t)]
            if self.cfg.positional:
                x = x + sinusoid(np.array([float(pos)]), d)[0]
            z = W @ x
            hsum = np.zeros(n)
            for h_k, _ in kids:
                hsum += h_k
            iou = z[:3 * n] + Ui @ hsum + b[:3 * n]
            i, o, u = _sig(iou[:n]), _sig(iou[n:2 * n]), np.tanh(iou[2 * n:])
            c = i * u
            for h_k, c_k in kids:
                c += _sig(z[3 * n:] + Uf @ h_k + b[3 * n:]) * c_k
            ag._count("tree_node", node_ops + child_ops * len(kids))
            return o * np.tanh(c), c

        sW, sU, sb = P["seq_W"], P["seq_U"], P["seq_b"]
        h, c = np.zeros(n), np.zeros(n)
        for j, m in enumerate(p.messages):
            x, _ = node(m, 0)
            z = sW @ x + sU @ h + sb
            i, o, u, f = _sig(z[:n]), _sig(z[n:2 * n]), np.tanh(z[2 * n:3 * n]), _sig(z[3 * n:])
            c = i * u + f * c if j else i * u
            h = o * np.tanh(c)
            ag._count("seq_step", 16 * n * n + 12 * n)
        ag._count("head", 4 * n + 2)
        out = P["out_W"] @ h + P["out_b"]
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite logits")
        return out

    def predict(self, protocols, batch: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(protocols), batch):
            out.append(ag.softmax(self.logits(protocols[i:i + batch])).data)
        return np.concatenate(out) if out else np.zeros((0, 2))

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}


# -- checkpoints -----------------------------------------------------------------------

def save_checkpoint(model, path, meta: dict | None = None):
    """Zip container: manifest.json plus one little-endian float64 blob per tensor."""
    arrays = model.state()
    manifest = {
        "format_version": FORMAT_VERSION,
        "arch": model.cfg.arch,
        "config": asdict(model.cfg),
        "config_hash": model.cfg.config_hash(),
        "step": model.step,
        "seed": model.cfg.seed,
        "dtype": "<f8",
        "tensors": {k: list(a.shape) for k, a in arrays.items()},
        "meta": meta or {},
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as z:
        z.writestr(_entry("manifest.json"), json.dumps(manifest, sort_keys=True, indent=1))
        for k, a in arrays.items():
            z.writestr(_entry(f"tensors/{k}.bin"), np.ascontiguousarray(a, dtype="<f8").tobytes())


def _entry(name):
    # fixed timestamp keeps checkpoint bytes a function of the weights only
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    return info


def load_checkpoint(path):
    with zipfile.ZipFile(path) as z:
        manifest = json.loads(z.read("manifest.json"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {manifest.get('format_version')}")
        arrays = {}
        for k, shape in manifest["tensors"].items():
            buf = z.read(f"tensors/{k}.bin")
            a = np.frombuffer(buf, dtype="<f8")
            if a.size != int(np.prod(shape)):
                raise CheckpointError(f"tensor {k} has {a.size} values, expected shape {shape}")
            arrays[k] = a.reshape(shape).astype(np.float64)
    arch = manifest.get("arch", "tree")
    if arch == "tree":
        cfg = ModelConfig(**manifest["config"])
        if cfg.config_hash() != manifest["config_hash"]:
            raise CheckpointError("config hash mismatch")
        model = TreeLstmClassifier(cfg, arrays)
    else:
        from .baselines import MlpClassifier, MlpConfig
        cfg = MlpConfig(**manifest["config"])
        model = MlpClassifier(cfg, arrays)
    model.step = manifest["step"]
    return model, manifest


# -- training and evaluation -------------------------------------------------------------

@dataclass
class TrainConfig:
    steps: int = 200
    batch: int = 100
    lr: float = 0.001
    decay: float = 0.9
    eps: float = 1e-8
    seed: int = 0


def check_dataset(labels):
    if len(labels) == 0:
        raise EmptyDataset("training set is empty")
    if len(set(labels)) < 2:
        raise SingleClassDataset("training set has a single class")


def train(model, protocols, labels, cfg: TrainConfig = TrainConfig(), on_step=None):
    """RMSprop on mean cross-entropy; returns the loss curve.

    Batches are consecutive slices of a permutation that is redrawn from
    the run seed at the start of every epoch.
    """
    y = np.asarray([class_index(v) if isinstance(v, str) else int(v) for v in labels])
    check_dataset(y.tolist())
    opt = ag.RMSprop(model.trainable(), cfg.lr, cfg.decay, cfg.eps)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    perm, pos = rng.permutation(len(y)), 0
    curve = []
    for step in range(cfg.steps):
        if pos >= len(y):
            perm, pos = rng.permutation(len(y)), 0
        idx = perm[pos:pos + cfg.batch]
        pos += cfg.batch
        opt.zero_grad()
        logits = model.logits([protocols[i] for i in idx])
        loss = ag.softmax_cross_entropy(logits, y[idx])
        loss.backward()
        opt.step()
        model.step += 1
        acc = float((logits.data.argmax(1) == y[idx]).mean())
        rec = {"step": step, "loss": float(loss.data), "batch_accuracy": acc}
        curve.append(rec)
        if on_step is not None:
            on_step(rec)
    return curve


def evaluate(model, protocols, labels, timing: bool = False) -> dict:
    """Accuracy, confusion matrix (rows true, columns predicted) and optional
    per-protocol (size, seconds) timings."""
    y = np.asarray([class_index(v) if isinstance(v, str) else int(v) for v in labels])
    if timing:
        preds, times = [], []
        for p in protocols:
            t0 = time.perf_counter()
            prob = model.classify(p)
            times.append((p.size, time.perf_counter() - t0))
            preds.append(int(prob[1] > prob[0]))
        pred = np.asarray(preds)
    else:
        pred = model.predict(protocols).argmax(1) if len(protocols) else np.zeros(0, int)
        times = []
    conf = np.zeros((2, 2), dtype=int)
    for a, b in zip(y, pred):
        conf[a, b] += 1
    acc = float((pred == y).mean()) if len(y) else 0.0
    return {"accuracy": acc, "confusion": conf.tolist(), "n": int(len(y)), "times": times}
