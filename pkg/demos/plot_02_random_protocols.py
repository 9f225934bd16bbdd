"""
Generating random key-exchange protocols
========================================

Every generated protocol alternates sends between the two parties, only
uses what the sender can derive, and ends with both parties accepting
the same key.
"""
from collections import Counter

import numpy as np

from protoml.generator import GenConfig, generate_corpus
from protoml.protocol import validate_protocol

ps = generate_corpus(GenConfig(m_max=5, c_max=3, seed=1), 2000)
print(next(p for p in ps if len(p.sends) == 3).text())

# %%
# Shape statistics of the corpus.
sizes = np.array([p.size for p in ps])
print("kinds:", Counter(p.kind for p in ps))
print("messages:", sorted(Counter(len(p.sends) for p in ps).items()))
print("size: median %d, 90th pct %d, max %d" % (np.median(sizes), np.percentile(sizes, 90), sizes.max()))
print("invalid:", sum(1 for p in ps if validate_protocol(p)))

# %%
# The same seed gives the same corpus.
again = generate_corpus(GenConfig(m_max=5, c_max=3, seed=1), 2000)
print("reproducible:", [p.text() for p in ps] == [p.text() for p in again])
