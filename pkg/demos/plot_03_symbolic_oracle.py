"""
Labelling protocols with the symbolic oracle
============================================

A passive check asks whether an eavesdropper on one honest run can derive
the session key.  A bounded active search then lets the adversary
intercept, replay and inject messages across a few role instances.
"""
from protoml.augment import LEAK_SECRET, _append
from protoml.oracle import OracleConfig, label, label_passive
from protoml.practical import ENTRIES, practical_protocol
from protoml.proverif import emit_proverif
from protoml.terms import SK

by_number = {e.number: e for e in ENTRIES}
ktm4 = practical_protocol(by_number["4.15"])
print(ktm4.text())

# %%
# Secure against both adversaries within two sessions.
print("passive:", label_passive(ktm4).verdict)
lab = label(ktm4, OracleConfig(session_bound=2))
print("active: ", lab.verdict, lab.provenance, "bound", lab.bound)

# %%
# Appending SK in the clear breaks it passively; the witness lists what the
# adversary saw.
leaky = _append(ktm4, 1, SK, LEAK_SECRET)
lab = label(leaky)
print(lab.verdict, lab.provenance)

# %%
# The Needham-Schroeder public key protocol falls to an interleaving attack.
ns = label(practical_protocol(by_number["4.20"]))
print(ns.verdict, ns.provenance)
print(ns.detail)

# %%
# Every protocol can also be written out as a ProVerif script.
print("\n".join(emit_proverif(ktm4).splitlines()[-20:]))
