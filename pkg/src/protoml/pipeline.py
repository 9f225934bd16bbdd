"""Stage orchestration: generate, label, augment, train, evaluate, benchmark.

Every stage reads and writes plain files (line-delimited JSON records or
CSV) under one run directory, so any stage can be re-run on its own from
the previous stage's output.  Per-item work in generate, label and augment
runs in a process pool whose results are collected in input order.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import vocab
from .augment import AUGMENT_KINDS, augment_one
from .baselines import COUNTS, TLM, MlpClassifier, MlpConfig
from .generator import GenConfig, Rng, generate_protocol
from .model import (ModelConfig, TrainConfig, TreeLstmClassifier, evaluate,
                    save_checkpoint, train)
from .oracle import OracleConfig, label
from .practical import encode_practical_corpus
from .protocol import (ACTIVE, INSECURE, SECURE, TIMEOUT, SecurityLabel, from_record,
                       read_records, to_record, write_records)

TEST_SEED_OFFSET = 1_000_000


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    # generation
    count: int = 50_000
    m_max: int = vocab.DEFAULT_M_MAX
    c_max: int = vocab.DEFAULT_C_MAX
    kind_mix: float = 0.5
    seed: int = 0
    # labeling
    session_bound: int = 2
    depth_bound: int = 3
    time_budget: float = 5.0
    max_states: int = 20_000
    max_candidates: int = 6
    max_messages: int = 24
    # augmentation
    per_item: int = 1
    # held-out random test set (balanced)
    test_count: int = 384
    test_pool: int = 4_000
    # training
    steps: int = 200
    batch: int = 100
    lr: float = 0.001
    decay: float = 0.9
    eps: float = 1e-8
    hidden: int = 128
    baselines: tuple = (TLM, COUNTS)
    # execution
    workers: int | None = None
    out_dir: str = "run"

    def __post_init__(self):
        self.baselines = tuple(self.baselines)
        if self.count < 1 or self.test_count < 0:
            raise ValueError("count must be positive and test_count non-negative")
        self.gen_config()
        self.oracle_config()

    def gen_config(self, seed: int | None = None) -> GenConfig:
        return GenConfig(self.m_max, self.c_max, self.kind_mix, self.seed if seed is None else seed)

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(self.session_bound, self.depth_bound, self.time_budget,
                            self.max_states, self.max_candidates, self.max_messages)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.steps, self.batch, self.lr, self.decay, self.eps, self.seed)

    def to_json(self) -> str:
        d = asdict(self)
        d["baselines"] = list(self.baselines)
        return json.dumps(d, sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def pool_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]`` over a process pool, in input order."""
    items = list(items)
    n = workers if workers is not None else (os.cpu_count() or 1)
    if n <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (n * 8))
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# -- per-item tasks (top level so they pickle) -------------------------------

def _gen_task(args):
    cfg, seed = args
    p = generate_protocol(GenConfig(cfg.m_max, cfg.c_max, cfg.kind_mix, seed,
                                    cfg.with_accept, cfg.max_depth))
    return to_record(p)


def _label_task(args):
    rec, ocfg = args
    p, _ = from_record(rec)
    lab = label(p, ocfg)
    out = to_record(p, lab)
    if lab.detail and lab.provenance != TIMEOUT:  # timeout details depend on machine speed
        out["detail"] = lab.detail
    if lab.witness is not None:
        out["witness"] = lab.witness.to_dict()
    return out


def _augment_task(args):
    rec, index, per_item, seed, ocfg, kinds = args
    p, _ = from_record(rec)
    out = [to_record(p, SecurityLabel(SECURE, ACTIVE))]
    seen = set()
    for j in range(per_item):
        r = augment_one(p, Rng(seed, (index, j)), ocfg, kinds)
        if r is None or r[0].messages in seen:
            continue
        seen.add(r[0].messages)
        out.append(to_record(r[0], r[1]))
    return out


# -- stages ----------------------------------------------------------------------------------

def stage_generate(gcfg: GenConfig, count: int, out, workers=None) -> int:
    recs = pool_map(_gen_task, [(gcfg, gcfg.seed + i) for i in range(count)], workers)
    return write_records(out, recs)


def stage_label(inp, out, ocfg: OracleConfig = OracleConfig(), workers=None) -> dict:
    recs = pool_map(_label_task, [(r, ocfg) for r in read_records(inp)], workers)
    write_records(out, recs)
    return verdict_counts(recs)


def stage_augment(inp, out, per_item=1, seed=0, ocfg: OracleConfig = OracleConfig(),
                  kinds=AUGMENT_KINDS, workers=None) -> dict:
    """Secure records of a labeled file plus their insecure variants."""
    secure = [r for r in read_records(inp) if r.get("label") == SECURE]
    tasks = [(r, i, per_item, seed, ocfg, tuple(kinds)) for i, r in enumerate(secure)]
    recs = [x for group in pool_map(_augment_task, tasks, workers) for x in group]
    write_records(out, recs)
    return verdict_counts(recs)


def stage_testset(cfg: RunConfig, out, workers=None) -> dict:
    """Balanced held-out random test set from a disjoint seed range."""
    gcfg = cfg.gen_config(cfg.seed + TEST_SEED_OFFSET)
    raw = pool_map(_gen_task, [(gcfg, gcfg.seed + i) for i in range(cfg.test_pool)], workers)
    labeled = pool_map(_label_task, [(r, cfg.oracle_config()) for r in raw], workers)
    half = cfg.test_count // 2
    sec = [r for r in labeled if r["label"] == SECURE][:half]
    ins = [r for r in labeled if r["label"] == INSECURE][:half]
    write_records(out, sec + ins)
    return {"secure": len(sec), "insecure": len(ins)}


def verdict_counts(recs) -> dict:
    out: dict = {}
    for r in recs:
        out[r.get("label")] = out.get(r.get("label"), 0) + 1
    return out


def load_dataset(path, known_only: bool = True):
    ps, ys = [], []
    for rec in read_records(path):
        p, y = from_record(rec)
        if known_only and y not in (SECURE, INSECURE):
            continue
        ps.append(p)
        ys.append(y)
    return ps, ys


def build_model(arch: str, hidden: int = 128, seed: int = 0, conversion: str = TLM):
    if arch == "tree":
        return TreeLstmClassifier(ModelConfig(hidden=hidden, embed=hidden, seed=seed))
    if arch == "mlp":
        return MlpClassifier(MlpConfig(conversion, hidden, seed))
    raise ValueError(f"unknown architecture {arch!r}")


def stage_train(inp, out, arch="tree", conversion=TLM, hidden=128,
                tcfg: TrainConfig = TrainConfig(), curve_csv=None):
    ps, ys = load_dataset(inp)
    model = build_model(arch, hidden, tcfg.seed, conversion)
    curve = train(model, ps, ys, tcfg)
    save_checkpoint(model, out, {"train_sha256": file_hash(inp), "train_size": len(ps),
                                 "train": asdict(tcfg)})
    if curve_csv is not None:
        write_csv(curve_csv, ["step", "loss", "batch_accuracy"],
                  [[c["step"], repr(c["loss"]), c["batch_accuracy"]] for c in curve])
    return model, curve


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def bench_time(model, protocols, out=None, warmup: int = 3, repeats: int = 5):
    """Per-protocol classification wall time.

    Each of ``repeats`` passes times every protocol once; a protocol's time
    is its fastest pass, so slow spells on a busy machine do not land on
    neighbouring protocols together.  Returns ``(rows, fit)`` where rows are
    ``(size, seconds)`` and fit holds the least-squares slope, intercept and
    Pearson correlation (None when fewer than two distinct sizes were seen).
    """
    protocols = list(protocols)
    for p in protocols[:warmup]:
        model.classify(p)
    best = [float("inf")] * len(protocols)
    for _ in range(repeats):
        for i, p in enumerate(protocols):
            t0 = time.perf_counter()
            model.classify(p)
            best[i] = min(best[i], time.perf_counter() - t0)
    rows = [(p.size, t) for p, t in zip(protocols, best)]
    if out is not None:
        write_csv(out, ["protocol_size", "wall_time"], [[s, repr(t)] for s, t in rows])
    return rows, linear_fit(rows)


def linear_fit(rows):
    if len({s for s, _ in rows}) < 2:
        return None
    x = np.array([s for s, _ in rows], float)
    y = np.array([t for _, t in rows], float)
    slope, intercept = np.polyfit(x, y, 1)
    r = float(np.corrcoef(x, y)[0, 1])
    return {"slope": float(slope), "intercept": float(intercept), "correlation": r}


# -- whole run -------------------------------------------------------------------------------

def accuracy_table(results: dict) -> str:
    """Plain-text table: one row per model, random and practical accuracy in percent."""
    lines = [f"{'model':<16}{'random':>10}{'practical':>12}"]
    for name, r in results.items():
        lines.append(f"{name:<16}{100 * r['random']:>10.1f}{100 * r['practical']:>12.1f}")
    return "\n".join(lines) + "\n"


def _run(stage, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except Exception as exc:  # stage provenance for the caller
        raise StageError(stage, exc) from exc


def pipeline_run(cfg: RunConfig, log=print) -> dict:
    """Run every stage into ``cfg.out_dir`` and write ``report.json``,
    ``accuracy.txt`` and ``timing.csv`` there."""
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    paths = {k: d / f"{k}.jsonl" for k in ("corpus", "labels", "train", "test", "practical")}
    ocfg, w = cfg.oracle_config(), cfg.workers
    t0 = time.perf_counter()

    n = _run("generate", stage_generate, cfg.gen_config(), cfg.count, paths["corpus"], w)
    log(f"generate: {n} protocols")
    counts = _run("label", stage_label, paths["corpus"], paths["labels"], ocfg, w)
    log(f"label: {counts}")
    aug = _run("augment", stage_augment, paths["labels"], paths["train"], cfg.per_item,
               cfg.seed, ocfg, AUGMENT_KINDS, w)
    log(f"augment: {aug}")
    test = _run("testset", stage_testset, cfg, paths["test"], w)
    log(f"test set: {test}")
    write_records(paths["practical"], [to_record(p, y) for p, y in encode_practical_corpus()])

    tcfg = cfg.train_config()
    models = {"tree": _run("train", stage_train, paths["train"], d / "tree.ckpt", "tree",
                           TLM, cfg.hidden, tcfg, d / "curve_tree.csv")[0]}
    for scheme in cfg.baselines:
        models[f"mlp-{scheme}"] = _run(
            "train", stage_train, paths["train"], d / f"mlp-{scheme}.ckpt", "mlp", scheme,
            cfg.hidden, tcfg, d / f"curve_mlp-{scheme}.csv")[0]
    log("train: done")

    def _eval():
        rp, ry = load_dataset(paths["test"])
        pp, py = load_dataset(paths["practical"])
        res = {}
        for name, m in models.items():
            a, b = evaluate(m, rp, ry), evaluate(m, pp, py)
            res[name] = {"random": a["accuracy"], "practical": b["accuracy"],
                         "confusion_random": a["confusion"], "confusion_practical": b["confusion"]}
        return res, rp

    results, rp = _run("eval", _eval)
    _, fit = _run("bench", bench_time, models["tree"], rp, d / "timing.csv")
    (d / "accuracy.txt").write_text(accuracy_table(results), encoding="utf-8")

    train_n = sum(1 for _ in read_records(paths["train"]))
    report = {
        "config": json.loads(cfg.to_json()),
        "counts": {"generated": n, "labels": counts, "train": aug, "train_size": train_n,
                   "test": test},
        "accuracy": results,
        "timing_fit": fit,
        "hashes": {p.name: file_hash(p) for p in sorted(d.iterdir())
                   if p.suffix in (".jsonl", ".ckpt", ".json") and p.name != "report.json"},
        "seconds": round(time.perf_counter() - t0, 2),
    }
    (d / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    log(accuracy_table(results))
    return report
