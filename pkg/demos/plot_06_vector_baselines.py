"""
Fixed-length vectors lose nesting
=================================

The per-message label histogram cannot tell a signature over a
ciphertext from a ciphertext over a signature.  The tree encoder can.
"""
import numpy as np

from protoml.baselines import convert_counts, convert_tlm
from protoml.model import ModelConfig, TreeLstmClassifier
from protoml.protocol import parse_protocol

a = parse_protocol("(sendIR (sign (aenc (ID I) (SK) (pk R)) (lsk I)))\n(acceptI (SK))\n(acceptR (SK))")
b = parse_protocol("(sendIR (aenc (sign (ID I) (SK) (lsk I)) (pk R)))\n(acceptI (SK))\n(acceptR (SK))")
print("histogram vectors equal:", np.array_equal(convert_tlm(a), convert_tlm(b)))
print("count vectors equal:    ", np.array_equal(convert_counts(a), convert_counts(b)))

m = TreeLstmClassifier(ModelConfig(seed=0))
print("tree encodings distance: %.3f" % np.linalg.norm(m.encode_protocol(a) - m.encode_protocol(b)))
