"""
A small end-to-end run and inference timing
===========================================

The pipeline generates, labels, augments, builds a balanced random test
set, trains the tree model and both vector baselines, and reports
accuracy and per-protocol timing.  Sizes here are tiny so it runs in
seconds; the command line tool runs the full configuration.
"""
import tempfile

import numpy as np

from protoml.generator import GenConfig, generate_corpus
from protoml.model import ModelConfig, TreeLstmClassifier
from protoml.pipeline import RunConfig, bench_time, pipeline_run

with tempfile.TemporaryDirectory() as d:
    report = pipeline_run(RunConfig(count=400, test_pool=600, test_count=60, steps=40,
                                    batch=50, hidden=32, out_dir=d))
    print(sorted(report["hashes"]))

# %%
# Classification time grows with the number of nodes.
ps = generate_corpus(GenConfig(m_max=10, c_max=5, seed=2), 300)
rows, fit = bench_time(TreeLstmClassifier(ModelConfig()), ps)
print("slope %.1f us/node, correlation %.3f" % (fit["slope"] * 1e6, fit["correlation"]))
sizes = np.array([s for s, _ in rows])
times = np.array([t for _, t in rows])
for lo in (10, 20, 40, 80):
    sel = (sizes >= lo) & (sizes < 1.25 * lo)
    if sel.any():
        print("size %3d-%3d: %.2f ms" % (lo, 1.25 * lo, 1e3 * times[sel].mean()))
