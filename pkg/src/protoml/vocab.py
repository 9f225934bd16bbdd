"""Fixed symbol vocabulary for two-party key-exchange protocols."""

ATOMIC = "atomic"
FUNCTION = "function"
BEHAVIOR = "behavior"

# message components, in table order
ATOM_SYMBOLS = ("ID", "esk", "lsk", "pk", "T", "K", "SK")
# atoms carrying a party tag
PARTY_ATOMS = ("ID", "esk", "lsk", "pk", "T")
FUNCTION_SYMBOLS = ("senc", "aenc", "sign", "hash", "exp", "tuple")
BEHAVIOR_SYMBOLS = ("sendIR", "sendRI", "acceptI", "acceptR")

# functions the generator draws from (tuple is never drawn)
GENERATED_FUNCTIONS = ("senc", "aenc", "sign", "hash", "exp")
KEYED_FUNCTIONS = ("senc", "aenc", "sign")

HONEST = ("I", "R")
ADVERSARY = "E"
ROLES = ("I", "R", "E")
FRESH_INDICES = (1, 2)

SEND_SENDER = {"sendIR": "I", "sendRI": "R"}
SEND_RECEIVER = {"sendIR": "R", "sendRI": "I"}
ACCEPT_PARTY = {"acceptI": "I", "acceptR": "R"}

DEFAULT_M_MAX = 5
DEFAULT_C_MAX = 3
