"""
The tree model, its gradients and a first training run
======================================================

Each message tree goes through a Child-Sum Tree-LSTM, the message roots go
through an LSTM and a linear layer gives two logits.  Gradients come from
a small reverse-mode autodiff engine.
"""
import numpy as np

from protoml import autograd as ag
from protoml.generator import GenConfig, generate_corpus
from protoml.model import ModelConfig, TrainConfig, TreeLstmClassifier, evaluate, train
from protoml.protocol import parse_protocol

# %%
# Central differences against backprop on a narrow model.
ps = generate_corpus(GenConfig(seed=3), 4)
y = np.array([0, 1, 1, 0])
m = TreeLstmClassifier(ModelConfig(hidden=5, embed=4, seed=0))
ag.softmax_cross_entropy(m.logits(ps), y).backward()
worst = 0.0
for name, t in m.params.items():
    flat = t.data.reshape(-1)
    for j in range(0, flat.size, max(1, flat.size // 10)):
        old = flat[j]
        flat[j] = old + 1e-5
        up = float(ag.softmax_cross_entropy(m.logits(ps), y).data)
        flat[j] = old - 1e-5
        down = float(ag.softmax_cross_entropy(m.logits(ps), y).data)
        flat[j] = old
        fd, an = (up - down) / 2e-5, t.grad.reshape(-1)[j]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
print("worst relative gradient error: %.1e" % worst)

# %%
# Sending SK in the clear versus under the shared key is easy to separate.
texts = []
for filler in ["(esk I 1)", "(ID I)", "(hash (esk I 1))", "(pk R)", "(ID R)"]:
    for sk, verdict in (("(SK)", "insecure"), ("(senc (SK) (K))", "secure")):
        texts.append((f"(sendIR {filler} {sk})\n(sendRI (ID R))\n(acceptI (SK))\n(acceptR (SK))", verdict))
toy = [parse_protocol(t) for t, _ in texts]
labels = [v for _, v in texts]
model = TreeLstmClassifier(ModelConfig(hidden=32, embed=32))
curve = train(model, toy, labels, TrainConfig(steps=100, batch=10, lr=0.003))
print("loss %.3f -> %.3f, accuracy %.0f%%" % (curve[0]["loss"], curve[-1]["loss"],
                                             100 * evaluate(model, toy, labels)["accuracy"]))
