"""
Turning secure protocols into insecure neighbours
=================================================

Three transforms make small edits that break a secure protocol: leak a
secret, weaken an encryption key, or derive the session key from public
material.  Only variants the oracle confirms as insecure are kept.
"""
from collections import Counter

from protoml.augment import augment_corpus
from protoml.generator import GenConfig, generate_corpus
from protoml.oracle import label
from protoml.protocol import SECURE

secure = [p for p in generate_corpus(GenConfig(seed=12), 400) if label(p).verdict == SECURE]
print(len(secure), "secure protocols")

out = augment_corpus(secure[:60], per_item=1, seed=0)
print(Counter(p.meta.get("augment", "original") for p, _ in out))

# %%
# One original next to its variant.
for p, lab in out:
    if "augment" in p.meta:
        break
print(p.meta["augment"], lab.verdict, lab.provenance)
print(p.text())
