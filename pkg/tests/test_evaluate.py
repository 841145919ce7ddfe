import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import FIXTURES, random_tree
from oracles import naive_las
from mtparser.conllu import Sentence, Token, read_conllu
from mtparser.evaluate import Misaligned, las, randomization_test, significance_marker


def sent(heads, rels, forms=None):
    forms = forms or [f"w{i}" for i in range(len(heads))]
    return Sentence([Token(i + 1, f, head=h, deprel=r) for i, (f, h, r) in enumerate(zip(forms, heads, rels))])


# (gold, system, truncate, LAS, UAS)
CASES = [
    (([2, 0], ["nsubj", "root"]), ([2, 0], ["nsubj", "root"]), False, 100.0, 100.0),
    (([2, 0], ["nsubj", "root"]), ([0, 1], ["root", "dep"]), False, 0.0, 0.0),
    (([2, 0], ["nsubj", "root"]), ([2, 0], ["obj", "root"]), False, 50.0, 100.0),
    (([2, 0, 2], ["det", "root", "obj"]), ([2, 0, 1], ["det", "root", "obj"]), False, 200 / 3, 200 / 3),
    (([2, 0], ["nsubj:pass", "root"]), ([2, 0], ["nsubj", "root"]), False, 50.0, 100.0),
    (([2, 0], ["nsubj:pass", "root"]), ([2, 0], ["nsubj", "root"]), True, 100.0, 100.0),
    (([2, 0], ["acl:relcl", "root"]), ([2, 0], ["acl:other", "root"]), True, 100.0, 100.0),
    (([2, 0], ["acl:relcl", "root"]), ([2, 0], ["acl:other", "root"]), False, 50.0, 100.0),
    (([0, 1, 1, 3], ["root", "a", "b", "c"]), ([0, 1, 2, 3], ["root", "a", "b", "x"]), False, 50.0, 75.0),
    (([3, 3, 0], ["x", "y", "root"]), ([3, 1, 0], ["x", "y", "root"]), False, 200 / 3, 200 / 3),
]


@pytest.mark.parametrize("gold,system,truncate,expected_las,expected_uas", CASES)
def test_hand_computed_scores(gold, system, truncate, expected_las, expected_uas):
    r = las([sent(*gold)], [sent(*system)], truncate)
    assert r.las == pytest.approx(expected_las)
    assert r.uas == pytest.approx(expected_uas)


def test_scores_are_pooled_over_words():
    g = [sent([0], ["root"]), sent([2, 0, 2], ["a", "root", "b"])]
    s = [sent([0], ["root"]), sent([0, 1, 2], ["root", "a", "b"])]
    r = las(g, s)
    assert (r.correct_labeled, r.total) == (2, 4) and r.las == 50.0


def test_misalignment():
    with pytest.raises(Misaligned):
        las([sent([0], ["root"])], [])
    with pytest.raises(Misaligned):
        las([sent([0], ["root"])], [sent([0, 1], ["root", "x"])])
    with pytest.raises(Misaligned):
        las([sent([0], ["root"], ["a"])], [sent([0], ["root"], ["b"])])


def random_corpus(rng, k=6):
    rels = ["nsubj", "nsubj:pass", "obj", "root", "det"]
    gold, system = [], []
    for _ in range(k):
        n = rng.randint(1, 8)
        gold.append(sent(random_tree(n, rng), [rng.choice(rels) for _ in range(n)]))
        system.append(sent(random_tree(n, rng), [rng.choice(rels) for _ in range(n)]))
        for gt, st_ in zip(gold[-1].tokens, system[-1].tokens):
            if rng.random() < 0.5:
                st_.head = gt.head
            if rng.random() < 0.5:
                st_.deprel = gt.deprel
    return gold, system


@pytest.mark.parametrize("seed", range(25))
def test_against_naive_counter(seed):
    rng = random.Random(seed)
    gold, system = random_corpus(rng)
    for truncate in (False, True):
        r = las(gold, system, truncate)
        labeled, unlabeled, total = naive_las(gold, system, truncate)
        assert (r.correct_labeled, r.correct_unlabeled, r.total) == (labeled, unlabeled, total)
        assert r.las == pytest.approx(100 * labeled / total)
        assert r.las <= r.uas


GOLD = read_conllu(FIXTURES / "eval" / "gold.conllu")
SYS1 = read_conllu(FIXTURES / "eval" / "sys1.conllu")
SYS2 = read_conllu(FIXTURES / "eval" / "sys2.conllu")


def test_identical_systems_give_p_one():
    assert randomization_test(GOLD, SYS1, SYS1, iterations=500) == 1.0


def extreme_pair():
    """Gold itself against a copy with every head moved: 20 sentences, so
    the permutation distribution is fine enough for p < 0.001."""
    gold = read_conllu(FIXTURES / "toy_a_dev.conllu")
    bad = [s.copy() for s in gold]
    for s in bad:
        for t in s.tokens:
            t.head = 0 if t.head != 0 else (2 if t.id == 1 else 1)
    return gold, bad


def test_extreme_pair():
    gold, bad = extreme_pair()
    assert las(gold, bad).las == 0.0
    assert randomization_test(gold, gold, bad, iterations=10000, seed=0) < 0.001


def test_p_value_properties():
    p = randomization_test(GOLD, SYS1, SYS2, iterations=2000, seed=4)
    assert 1 / 2001 <= p <= 1
    assert randomization_test(GOLD, SYS2, SYS1, iterations=2000, seed=4) == p
    assert randomization_test(GOLD, SYS1, SYS2, iterations=2000, seed=4) == p


def test_p_value_invariant_under_sentence_order():
    order = list(range(len(GOLD)))[::-1]
    p = randomization_test(GOLD, SYS1, SYS2, iterations=3000, seed=2)
    q = randomization_test([GOLD[i] for i in order], [SYS1[i] for i in order], [SYS2[i] for i in order], iterations=3000, seed=2)
    assert abs(p - q) < 0.02


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_p_value_bounds(seed):
    p = randomization_test(GOLD, SYS1, SYS2, iterations=200, seed=seed)
    assert 1 / 201 <= p <= 1


def test_significance_markers():
    assert significance_marker(0.01, 0.01) == "*"
    assert significance_marker(0.01, 0.5) == "+"
    assert significance_marker(0.5, 0.01) == "×"
    assert significance_marker(0.5, 0.5) == ""
    assert significance_marker(None, None) == ""
    assert significance_marker(0.05, 0.05) == ""
