"""Command line front end: ``python -m protoml <command> ...``.

Exit codes: 0 success, 1 usage error, 2 stage failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import pipeline as pl
from . import vocab
from .baselines import CONVERSIONS, TLM
from .generator import GenConfig
from .model import TrainConfig, evaluate, load_checkpoint
from .oracle import OracleConfig, label
from .protocol import KINDS, TRANSPORT, from_record, parse_protocol, read_records
from .proverif import emit_proverif, proverif_available, run_proverif

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _oracle_args(p):
    p.add_argument("--session-bound", type=int, default=2)
    p.add_argument("--depth-bound", type=int, default=3)
    p.add_argument("--time-budget", type=float, default=5.0, help="seconds per protocol")
    p.add_argument("--budget-ms", type=int, help="same budget in milliseconds")
    p.add_argument("--max-states", type=int, default=20_000)


def _oracle_cfg(a) -> OracleConfig:
    budget = a.budget_ms / 1000.0 if a.budget_ms is not None else a.time_budget
    return OracleConfig(a.session_bound, a.depth_bound, budget, a.max_states)


def _read_protocol(path, kind):
    with open(path, encoding="utf-8") as f:
        return parse_protocol(f.read(), kind)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="protoml", description="Key-exchange protocol corpus, oracle and classifiers.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="random valid protocols")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--m-max", type=int, default=vocab.DEFAULT_M_MAX)
    g.add_argument("--c-max", type=int, default=vocab.DEFAULT_C_MAX)
    g.add_argument("--kind-mix", type=float, default=0.5)
    g.add_argument("--workers", type=int)
    g.add_argument("-o", "--out", required=True)

    l = sub.add_parser("label", help="label records with the symbolic oracle")
    l.add_argument("--in", dest="inp", required=True)
    l.add_argument("-o", "--out", required=True)
    l.add_argument("--workers", type=int)
    l.add_argument("--cross-check", action="store_true",
                   help="also run an installed proverif and report disagreements")
    _oracle_args(l)

    au = sub.add_parser("augment", help="secure records plus insecure variants")
    au.add_argument("--in", dest="inp", required=True)
    au.add_argument("-o", "--out", required=True)
    au.add_argument("--per-item", type=int, default=1)
    au.add_argument("--seed", type=int, default=0)
    au.add_argument("--workers", type=int)
    _oracle_args(au)

    t = sub.add_parser("train", help="train a classifier on labeled records")
    t.add_argument("--in", "--data", dest="inp", required=True)
    t.add_argument("-o", "--out", required=True, help="checkpoint path")
    t.add_argument("--arch", choices=("tree", "mlp"), default="tree")
    t.add_argument("--conversion", choices=CONVERSIONS, default=TLM)
    t.add_argument("--hidden", type=int, default=128)
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--batch", type=int, default=100)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--curve-csv")

    e = sub.add_parser("eval", help="accuracy of a checkpoint on labeled records")
    e.add_argument("--model", required=True)
    e.add_argument("--in", "--data", dest="inp", required=True)
    e.add_argument("--timing-csv")

    v = sub.add_parser("verify", help="judge one protocol text file")
    v.add_argument("file", nargs="?")
    v.add_argument("--in", dest="inp", help="protocol text file (alternative to FILE)")
    v.add_argument("--kind", choices=KINDS, default=TRANSPORT)
    v.add_argument("--model", help="checkpoint; classify with it instead of the oracle")
    _oracle_args(v)

    pv = sub.add_parser("emit-proverif", help="write verification scripts")
    pv.add_argument("file", nargs="?", help="protocol text file")
    pv.add_argument("--kind", choices=KINDS, default=TRANSPORT)
    pv.add_argument("-o", "--out")
    pv.add_argument("--in", dest="inp", help="record file; one script per record")
    pv.add_argument("--out-dir")

    b = sub.add_parser("bench", help="per-protocol classification time against size")
    b.add_argument("--model", required=True)
    b.add_argument("--in", dest="inp", required=True)
    b.add_argument("-o", "--out", required=True)

    p = sub.add_parser("pipeline", help="run every stage from a JSON config")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--print-config", action="store_true", help="print the effective config and stop")
    return ap


def _cmd_generate(a):
    n = pl.stage_generate(GenConfig(a.m_max, a.c_max, a.kind_mix, a.seed), a.count, a.out, a.workers)
    print(f"wrote {n} protocols to {a.out}")


def _cmd_label(a):
    counts = pl.stage_label(a.inp, a.out, _oracle_cfg(a), a.workers)
    print(json.dumps(counts, sort_keys=True))
    if a.cross_check:
        if not proverif_available():
            print("cross-check skipped: proverif not found on PATH", file=sys.stderr)
            return
        disagree = 0
        for rec in read_records(a.out):
            p, y = from_record(rec)
            verdict = run_proverif(emit_proverif(p), _oracle_cfg(a).time_budget)
            if verdict in ("secure", "insecure") and y in ("secure", "insecure") and verdict != y:
                disagree += 1
        print(f"cross-check disagreements: {disagree}")


def _cmd_augment(a):
    counts = pl.stage_augment(a.inp, a.out, a.per_item, a.seed, _oracle_cfg(a), workers=a.workers)
    print(json.dumps(counts, sort_keys=True))


def _cmd_train(a):
    tcfg = TrainConfig(steps=a.steps, batch=a.batch, lr=a.lr, seed=a.seed)
    _, curve = pl.stage_train(a.inp, a.out, a.arch, a.conversion, a.hidden, tcfg, a.curve_csv)
    print(f"final loss {curve[-1]['loss']:.4f}" if curve else "no steps run")


def _cmd_eval(a):
    model, _ = load_checkpoint(a.model)
    ps, ys = pl.load_dataset(a.inp)
    res = evaluate(model, ps, ys, timing=a.timing_csv is not None)
    if a.timing_csv:
        pl.write_csv(a.timing_csv, ["protocol_size", "wall_time"],
                     [[s, repr(t)] for s, t in res["times"]])
    res.pop("times")
    print(json.dumps(res, sort_keys=True))


def _one_file(a):
    path = a.file or a.inp
    if path is None:
        raise UsageError("a protocol file is required")
    return path


def _cmd_verify(a):
    p = _read_protocol(_one_file(a), a.kind)
    if a.model:
        model, _ = load_checkpoint(a.model)
        ps, pi = model.classify(p)
        verdict = "secure" if ps >= pi else "insecure"
        print(json.dumps({"verdict": verdict, "p_secure": ps, "p_insecure": pi}, sort_keys=True))
        return
    print(json.dumps(label(p, _oracle_cfg(a)).to_dict(), indent=2, sort_keys=True))


def _cmd_emit(a):
    if a.inp is not None and a.out_dir is not None:
        os.makedirs(a.out_dir, exist_ok=True)
        n = 0
        for i, rec in enumerate(read_records(a.inp)):
            p, _ = from_record(rec)
            with open(os.path.join(a.out_dir, f"{i:06d}.pv"), "w", encoding="utf-8",
                      newline="\n") as f:
                f.write(emit_proverif(p))
            n += 1
        print(f"wrote {n} scripts to {a.out_dir}")
        return
    script = emit_proverif(_read_protocol(_one_file(a), a.kind))
    if a.out:
        with open(a.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(script)
    else:
        sys.stdout.write(script)


def _cmd_bench(a):
    model, _ = load_checkpoint(a.model)
    ps, _ = pl.load_dataset(a.inp, known_only=False)
    _, fit = pl.bench_time(model, ps, a.out)
    print(json.dumps({"n": len(ps), "fit": fit}, sort_keys=True))


def _cmd_pipeline(a):
    cfg = pl.RunConfig.load(a.config) if a.config else pl.RunConfig()
    over = {k: getattr(a, k) for k in ("out_dir", "count", "seed", "workers")
            if getattr(a, k) is not None}
    cfg = replace(cfg, **over)
    if a.print_config:
        print(cfg.to_json())
        return
    pl.pipeline_run(cfg)


COMMANDS = {
    "generate": ("generate", _cmd_generate),
    "label": ("label", _cmd_label),
    "augment": ("augment", _cmd_augment),
    "train": ("train", _cmd_train),
    "eval": ("eval", _cmd_eval),
    "verify": ("label", _cmd_verify),
    "emit-proverif": ("emit", _cmd_emit),
    "bench": ("bench", _cmd_bench),
    "pipeline": ("pipeline", _cmd_pipeline),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage, fn = COMMANDS[args.command]
    try:
        fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (FileNotFoundError, IsADirectoryError, ValueError) as exc:
        if isinstance(exc, FileNotFoundError) and stage != "pipeline":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"error: stage {stage!r} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK
