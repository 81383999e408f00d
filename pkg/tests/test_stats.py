import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dawood.stats import NodeStats, RoutingError, chi2, entropy, fitness, gain, kl

B = 4


def hist(n, max_count=30, min_size=None):
    return st.lists(st.integers(0, max_count), min_size=min_size or n, max_size=n)


def oracle_entropy(counts):
    m = sum(counts)
    if m == 0:
        return 0.0
    return -sum(c / m * math.log(c / m) for c in counts if c) / math.log(8)


def node(labels, syn, real):
    return NodeStats(np.array(labels), np.array(syn), np.array(real))


def test_entropy_examples():
    assert entropy([1] * 8) == pytest.approx(1.0, abs=1e-12)
    assert entropy([0, 0, 9, 0, 0, 0, 0, 0]) == 0.0
    assert entropy([50, 50, 0, 0, 0, 0, 0, 0]) == pytest.approx(1 / 3, abs=1e-12)
    assert entropy([0] * 8) == 0.0


def test_chi2_examples():
    assert chi2([3, 1, 2], [3, 1, 2]) == 0.0
    assert chi2([1, 0, 0, 2], [0, 4, 1, 0]) == pytest.approx(1.0, abs=1e-12)
    assert chi2([2, 2], [1, 3]) == pytest.approx(1 / 15, abs=1e-12)
    assert chi2([0, 0], [1, 3]) == 1.0
    with pytest.raises(ValueError):
        chi2([1, 2], [1, 2, 3])


def test_kl_examples():
    assert kl([4, 1, 3], [4, 1, 3]) <= 1e-12
    p = [(10 + 1e-3) / (10 + 2e-3), 1e-3 / (10 + 2e-3)]
    q = [(5 + 1e-3) / (10 + 2e-3)] * 2
    expected = sum(a * math.log(a / b) for a, b in zip(p, q))
    assert kl([10, 0], [5, 5]) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        kl([1], [1, 2])


def test_fitness_examples():
    ns = node([50, 50, 0, 0, 0, 0, 0, 0], [2, 2, 96, 0], [1, 3, 0, 0])
    assert fitness(ns, 1.0) == entropy(ns.syn_labels)
    assert fitness(ns, 0.0) == chi2(ns.syn_spatial, ns.real_spatial)
    # alpha = 0.2 with E = 0.5 and chi2 = 0.25
    assert 0.2 * 0.5 + 0.8 * 0.25 == pytest.approx(0.30, abs=1e-12)
    assert fitness(NodeStats.empty(B), 0.3) == 0.0


def test_gain_examples():
    parent = node([50, 50, 0, 0, 0, 0, 0, 0], [50, 50, 0, 0], [50, 50, 0, 0])
    left = node([50, 0, 0, 0, 0, 0, 0, 0], [50, 0, 0, 0], [50, 0, 0, 0])
    right = parent - left
    # pure split removes the whole normalised entropy ln2 / ln8
    assert gain(parent, left, right, 1.0) == pytest.approx(1 / 3, abs=1e-12)
    assert gain(parent, parent, NodeStats.empty(B), 0.4) == pytest.approx(0.0, abs=1e-12)


def test_gain_rejects_unconserved_split():
    parent = node([5, 5, 0, 0, 0, 0, 0, 0], [5, 5, 0, 0], [3, 0, 0, 0])
    left = node([5, 0, 0, 0, 0, 0, 0, 0], [5, 0, 0, 0], [1, 0, 0, 0])
    with pytest.raises(RoutingError):
        gain(parent, left, NodeStats.empty(B), 0.5)
    wrong = node([0, 5, 0, 0, 0, 0, 0, 0], [0, 0, 5, 0], [2, 0, 0, 0])
    with pytest.raises(RoutingError):
        gain(parent, left, wrong, 0.5)


@st.composite
def split(draw):
    labels = draw(st.lists(st.integers(0, 7), min_size=1, max_size=60))
    sbins = draw(st.lists(st.integers(0, B - 1), min_size=len(labels), max_size=len(labels)))
    rbins = draw(st.lists(st.integers(0, B - 1), max_size=60))
    go_left = draw(st.lists(st.booleans(), min_size=len(labels), max_size=len(labels)))
    r_left = draw(st.lists(st.booleans(), min_size=len(rbins), max_size=len(rbins)))
    L = np.array(go_left, bool)
    RL = np.array(r_left, bool)
    lab, sb, rb = np.array(labels), np.array(sbins), np.array(rbins, dtype=np.int64)
    parent = NodeStats.from_samples(lab, sb, rb, B)
    left = NodeStats.from_samples(lab[L], sb[L], rb[RL], B)
    right = NodeStats.from_samples(lab[~L], sb[~L], rb[~RL], B)
    return parent, left, right


@settings(max_examples=200)
@given(split())
def test_gain_alpha1_is_information_gain(s):
    parent, left, right = s
    m = parent.m
    expected = (oracle_entropy(parent.syn_labels)
                - left.m / m * oracle_entropy(left.syn_labels)
                - right.m / m * oracle_entropy(right.syn_labels))
    assert gain(parent, left, right, 1.0) == pytest.approx(expected, abs=1e-9)


@settings(max_examples=100)
@given(split(), st.lists(st.integers(0, 20), min_size=B, max_size=B))
def test_gain_alpha1_ignores_real_pixels(s, extra):
    parent, left, right = s
    extra = np.array(extra)
    g = gain(parent, left, right, 1.0)
    bumped = NodeStats(parent.syn_labels, parent.syn_spatial, parent.real_spatial + extra)
    bumped_left = NodeStats(left.syn_labels, left.syn_spatial, left.real_spatial + extra)
    assert gain(bumped, bumped_left, right, 1.0) == g


@settings(max_examples=1000)
@given(hist(6), hist(6))
def test_chi2_symmetric_and_bounded(p, q):
    assert chi2(p, q) == chi2(q, p)
    assert 0.0 <= chi2(p, q) <= 1.0 + 1e-12


@given(hist(8))
def test_entropy_bounded_and_matches_oracle(h):
    e = entropy(h)
    assert 0.0 <= e <= 1.0 + 1e-12
    assert e == pytest.approx(oracle_entropy(h), abs=1e-12)


@given(hist(6), hist(6))
def test_kl_nonnegative(p, q):
    assert kl(p, q) >= 0.0


@given(hist(8, min_size=8), hist(B), hist(B), st.floats(0, 1))
def test_fitness_linear_in_alpha(labels, syn, real, a):
    syn = np.array(syn)
    total = sum(labels)
    if syn.sum() != total:
        syn = np.zeros(B, np.int64)
        syn[0] = total
    ns = node(labels, syn, real)
    expected = a * fitness(ns, 1.0) + (1 - a) * fitness(ns, 0.0)
    assert fitness(ns, a) == pytest.approx(expected, abs=1e-12)


def test_nodestats_arithmetic():
    a = node([1, 2, 0, 0, 0, 0, 0, 0], [3, 0, 0, 0], [0, 1, 0, 0])
    b = node([0, 1, 0, 0, 0, 0, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0])
    s = a + b
    assert (s.m, s.k) == (4, 2)
    assert np.array_equal((s - b).syn_labels, a.syn_labels)
    with pytest.raises(ValueError):
        b - a
