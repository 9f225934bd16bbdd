import pytest

from protoml.oracle import label
from protoml.practical import (ENTRIES, UNSUPPORTED, encode_practical_corpus, leak_twin,
                               practical_protocol)
from protoml.protocol import INSECURE, SECURE, validate_protocol

# entries where the bounded secrecy oracle disagrees with the textbook attack flag;
# the listed attacks concern freshness or authentication rather than key secrecy
# (3.14, 4.18), or the secrecy attack needs more than the modelled capabilities
KNOWN_MISMATCH = {"3.14", "4.11", "4.14", "4.18"}


@pytest.fixture(scope="module")
def corpus():
    return encode_practical_corpus()


def test_size_and_validity(corpus):
    assert len(corpus) <= 44
    for p, _ in corpus:
        assert validate_protocol(p) == []
    numbers = [e.number for e in ENTRIES]
    assert len(set(numbers)) == len(numbers)
    assert not set(numbers) & set(UNSUPPORTED)


def test_named_ground_truth(corpus):
    truth = {p.meta["source"]: y for p, y in corpus}
    assert truth["4.15"] == SECURE
    assert truth["4.20"] == INSECURE
    assert truth["5.1"] == INSECURE


def test_twins_are_insecure():
    for e in ENTRIES:
        if e.twin is not None:
            assert not e.attack
            assert label(leak_twin(e)).verdict == INSECURE, e.number


def test_oracle_agrees_with_flags_except_documented():
    bad = set()
    for e in ENTRIES:
        want = INSECURE if e.attack else SECURE
        if label(practical_protocol(e)).verdict != want:
            bad.add(e.number)
    assert bad == KNOWN_MISMATCH
