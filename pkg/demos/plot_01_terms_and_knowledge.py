"""
Protocol terms and adversary knowledge
======================================

Messages are syntax trees over a small fixed vocabulary.  A knowledge set
is what a party can take apart; anything else it can build from those
pieces is derivable.
"""
from protoml.knowledge import KnowledgeSet, absorb, derivable, dh_normalize, initial_knowledge
from protoml.terms import SK, K, T, esk, fn, parse_term, pk, public_atoms, render_term

# %%
# Parsing and printing round-trips exactly.
m = parse_term("(sendIR (aenc (ID R) (SK) (pk R)) (hash (esk I 1)))")
print(render_term(m), "size", m.size())

# %%
# The initiator starts with public values, its own long-term key and the
# pre-shared key K.  The eavesdropper only has public values and its own keys.
ki = initial_knowledge("I", public_atoms())
ke = initial_knowledge("E")
print("I knows K:", K in ki, "  E knows K:", K in ke)

# %%
# Absorbing a ciphertext does nothing until the key arrives.
k = absorb(KnowledgeSet(), fn("senc", SK, esk("R", 1)))
print("SK before key:", SK in k)
k = absorb(k, esk("R", 1))
print("SK after key: ", SK in k)

# %%
# Derivable terms can be rebuilt; hashes and signatures cannot be inverted.
print(derivable(KnowledgeSet([esk("I", 1), pk("R")]), fn("aenc", esk("I", 1), pk("R"))))
print(derivable(KnowledgeSet([fn("hash", SK)]), SK))

# %%
# Diffie-Hellman towers are normalised so both parties reach the same key.
a = fn("exp", fn("exp", T("I"), esk("I", 1)), esk("R", 1))
b = fn("exp", fn("exp", T("I"), esk("R", 1)), esk("I", 1))
print(render_term(dh_normalize(a)), dh_normalize(a) == dh_normalize(b))
