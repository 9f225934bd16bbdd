import json

import pytest

from protoml.generator import GenConfig, generate_corpus
from protoml.model import ModelConfig, TreeLstmClassifier
from protoml.pipeline import (RunConfig, StageError, bench_time, file_hash, linear_fit,
                              pipeline_run, pool_map)

TINY = dict(count=120, test_pool=300, test_count=30, steps=3, batch=20, hidden=8, seed=5)
INTERMEDIATES = ("corpus.jsonl", "labels.jsonl", "train.jsonl", "test.jsonl", "practical.jsonl",
                 "tree.ckpt", "mlp-tlm.ckpt", "mlp-counts.ckpt")


def _square(x):
    return x * x


def test_pool_map_keeps_order():
    assert pool_map(_square, range(50), workers=3) == [x * x for x in range(50)]
    assert pool_map(_square, [], workers=3) == []


def test_config_round_trip(tmp_path):
    cfg = RunConfig(**TINY)
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert RunConfig.load(path) == cfg
    with pytest.raises(ValueError):
        RunConfig.from_dict({"count": 3, "bogus": 1})
    with pytest.raises(ValueError):
        RunConfig(count=0)


def test_bench_time_empty_and_fit(tmp_path):
    out = tmp_path / "t.csv"
    rows, fit = bench_time(TreeLstmClassifier(ModelConfig(hidden=4, embed=4)), [], out)
    assert rows == [] and fit is None
    assert out.read_text() == "protocol_size,wall_time\n"
    fit = linear_fit([(1, 2.0), (2, 4.0), (3, 6.0)])
    assert fit["slope"] == pytest.approx(2.0) and fit["correlation"] == pytest.approx(1.0)


def test_bench_time_rows():
    ps = generate_corpus(GenConfig(seed=1), 10)
    rows, fit = bench_time(TreeLstmClassifier(ModelConfig(hidden=4, embed=4)), ps, repeats=1)
    assert [s for s, _ in rows] == [p.size for p in ps] and all(t > 0 for _, t in rows)


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    reports = []
    for name, workers in (("a", 1), ("b", 3)):
        d = tmp_path_factory.mktemp(name)
        reports.append((d, pipeline_run(RunConfig(**TINY, workers=workers, out_dir=str(d)),
                                        log=lambda *_: None)))
    return reports


def test_pipeline_rerun_is_identical(two_runs):
    (da, ra), (db, rb) = two_runs
    for name in INTERMEDIATES:
        assert file_hash(da / name) == file_hash(db / name), name
        assert ra["hashes"][name] == file_hash(da / name)
    assert ra["accuracy"] == rb["accuracy"]


def test_pipeline_outputs(two_runs):
    d, rep = two_runs[0]
    for name in ("config.json", "report.json", "accuracy.txt", "timing.csv", "curve_tree.csv"):
        assert (d / name).exists()
    test = [json.loads(x) for x in (d / "test.jsonl").read_text().splitlines()]
    assert len(test) == 30
    assert sum(r["label"] == "secure" for r in test) == 15
    assert set(rep["accuracy"]) == {"tree", "mlp-tlm", "mlp-counts"}
    assert rep["counts"]["train_size"] == len((d / "train.jsonl").read_text().splitlines())


def test_stage_error_names_stage(tmp_path):
    cfg = RunConfig(**{**TINY, "count": 2, "test_pool": 2}, workers=1, out_dir=str(tmp_path))
    with pytest.raises(StageError) as exc:
        pipeline_run(cfg, log=lambda *_: None)
    assert exc.value.stage in ("train", "testset")
