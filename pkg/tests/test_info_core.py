from collections import Counter
from itertools import product
import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from subsetcode.errors import ConfigError, GuardError
from subsetcode.info_core import (
    TypicalityParams,
    compositions,
    conditional_entropy,
    conditional_typical_set_size,
    conditional_typical_size_bound,
    empirical_pmf,
    entropy,
    enumerate_sequences,
    is_jointly_typical,
    is_typical,
    joint_empirical_pmf,
    kl_divergence,
    mutual_information,
    typical_probability,
)


def oracle_mi(j):
    """Double sum over cells, straight from the definition."""
    rows, cols = len(j), len(j[0])
    py = [sum(j[a][b] for b in range(cols)) for a in range(rows)]
    pz = [sum(j[a][b] for a in range(rows)) for b in range(cols)]
    total = 0.0
    for a in range(rows):
        for b in range(cols):
            if j[a][b] > 0:
                total += j[a][b] * math.log2(j[a][b] / (py[a] * pz[b]))
    return total


def oracle_typical(seq, p, eps):
    n = len(seq)
    c = Counter(seq)
    return all(abs(c.get(a, 0) - n * p[a]) <= eps * n * p[a] + 1e-12 * n for a in range(len(p)))


joints = st.integers(2, 4).flatmap(
    lambda r: st.integers(2, 4).flatmap(
        lambda c: st.lists(st.floats(0.01, 1.0), min_size=r * c, max_size=r * c).map(
            lambda v: (np.array(v) / sum(v)).reshape(r, c)
        )
    )
)


def test_entropy_examples():
    assert entropy([0.5, 0.5]) == pytest.approx(1.0, abs=1e-12)
    assert entropy([0.0, 1.0, 0.0]) == 0.0
    assert entropy([0.25, 0.75]) == pytest.approx(0.811278124459, abs=1e-9)


def test_conditional_entropy_examples():
    py, pz = np.array([0.3, 0.7]), np.array([0.2, 0.5, 0.3])
    assert conditional_entropy(np.outer(py, pz)) == pytest.approx(entropy(pz), abs=1e-12)
    assert conditional_entropy(np.diag([0.5, 0.5])) == pytest.approx(0.0, abs=1e-12)


def test_mutual_information_examples():
    assert mutual_information(np.outer([0.3, 0.7], [0.6, 0.4])) == pytest.approx(0.0, abs=1e-12)
    for k in (2, 3, 5):
        assert mutual_information(np.eye(k) / k) == pytest.approx(math.log2(k), abs=1e-12)
    j = [[0.4, 0.1], [0.1, 0.4]]
    assert mutual_information(j) == pytest.approx(0.278071905113, abs=1e-9)
    assert mutual_information(j) == pytest.approx(oracle_mi(j), abs=1e-12)


@given(joints)
def test_mutual_information_matches_oracle_and_is_symmetric(j):
    mi = mutual_information(j)
    assert mi == pytest.approx(oracle_mi(j.tolist()), abs=1e-10)
    assert mi == pytest.approx(mutual_information(j.T), abs=1e-10)
    assert mi >= 0.0
    assert mi == pytest.approx(entropy(j.sum(axis=0)) - conditional_entropy(j), abs=1e-10)


def test_kl_examples():
    assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(1.0)
    assert kl_divergence([0.5, 0.5], [1, 0]) == math.inf


def test_empirical_examples():
    assert np.allclose(empirical_pmf([0, 1, 0, 1], 2), [0.5, 0.5])
    assert np.allclose(empirical_pmf([2, 2, 2], 3), [0, 0, 1])
    assert np.allclose(joint_empirical_pmf([0, 1], [0, 1], 2, 2), np.diag([0.5, 0.5]))
    assert np.allclose(joint_empirical_pmf([0, 0], [0, 1], 2, 2), [[0.5, 0.5], [0, 0]])


def test_typicality_examples():
    assert is_typical([0, 1, 1, 0], [0.5, 0.5], 0.0)
    assert not is_typical([0, 2, 1], [0.5, 0.5, 0.0], 0.9)
    assert not is_typical([0, 0, 0, 1], [0.5, 0.5], 0.4)
    j = np.array([[0.25, 0.25], [0.0, 0.5]])
    assert is_jointly_typical([0, 0, 1, 1], [0, 1, 1, 1], j, 0.0)
    # one (1, 0) pair has zero probability under j
    assert not is_jointly_typical([0, 0, 1, 1], [0, 1, 0, 1], j, 0.99)


@settings(max_examples=60)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=30), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_typicality_matches_oracle_and_is_monotone_in_eps(seq, e1, e2):
    p = [0.2, 0.5, 0.3]
    lo, hi = sorted((e1, e2))
    assert is_typical(seq, p, lo) == oracle_typical(seq, p, lo)
    if is_typical(seq, p, lo):
        assert is_typical(seq, p, hi)


def test_invalid_inputs():
    with pytest.raises(ConfigError):
        entropy([0.5, 0.6])
    with pytest.raises(ConfigError):
        entropy([-0.1, 1.1])
    with pytest.raises(ConfigError):
        is_typical([0, 3], [0.5, 0.5], 0.1)
    with pytest.raises(ConfigError):
        TypicalityParams(0.2, 0.3)


def test_enumeration_order_and_guard():
    seqs = np.concatenate(list(enumerate_sequences(3, 3)))
    assert [tuple(s) for s in seqs] == list(product(range(3), repeat=3))
    with pytest.raises(GuardError):
        next(enumerate_sequences(2, 25))


def test_compositions_oracle():
    got = {tuple(c) for c in compositions(5, 3)}
    want = {c for c in product(range(6), repeat=3) if sum(c) == 5}
    assert got == want


def test_conditional_set_examples():
    j = np.eye(2) / 2
    assert conditional_typical_set_size([0, 1, 0, 1], j, 0.1) == 1
    # no z-type can match 1/3 of 4 within a tiny eps
    j3 = np.full((1, 3), 1 / 3)
    assert conditional_typical_set_size([0, 0, 0, 0], j3, 0.01) == 0


def test_conditional_set_size_against_counting_oracle():
    # Binary symmetric joint: typicality only constrains how many z agree with y
    # inside the y=0 and y=1 blocks, so the size is a sum of binomial products.
    j = np.array([[0.4, 0.1], [0.1, 0.4]])
    n, eps = 12, 0.3
    y = np.array([0] * 6 + [1] * 6)
    want = 0
    for a in range(7):
        for b in range(7):
            cells = np.array([[6 - a, a], [b, 6 - b]])
            if np.all(np.abs(cells - n * j) <= eps * n * j + 1e-9):
                want += math.comb(6, a) * math.comb(6, b)
    size = conditional_typical_set_size(y, j, eps)
    assert size == want
    # the size bound is asymptotic; at n=12 it sits above the true count
    assert 0 < size < conditional_typical_size_bound(j, n, eps)


def test_typical_probability_against_brute_force():
    src, ref, n, eps = [0.3, 0.7], [0.4, 0.6], 9, 0.25
    want = 0.0
    for seq in product(range(2), repeat=n):
        if oracle_typical(seq, ref, eps):
            want += math.prod(src[a] for a in seq)
    assert typical_probability(src, ref, n, eps) == pytest.approx(want, rel=1e-10)


def test_law_of_large_numbers_smoke(rng):
    p = np.array([0.2, 0.5, 0.3])
    hits = [is_typical(rng.choice(3, size=4000, p=p), p, 0.1) for _ in range(50)]
    assert all(hits)
