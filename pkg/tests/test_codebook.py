from itertools import product
import math

import numpy as np
import pytest
from scipy import stats

from subsetcode import streams
from subsetcode.codebook import (
    SubsetSpec,
    codebook_size,
    decode,
    encode_optimal,
    encode_optimal_batch,
    encode_typicality,
    estimate_conditional_hit_prob,
    exact_conditional_hit_prob,
    gen_codebook,
    lemma1_exponent,
    lemma1_lower_bound,
    load_codebook,
    mixture_log2_prob,
    nearest_type,
    sample_subset,
    save_codebook,
)
from subsetcode.errors import ConfigError, GuardError
from subsetcode.info_core import conditional_entropy, is_jointly_typical, mutual_information
from subsetcode.rd_solver import DistortionMeasure, build_rd_target

HAMMING2 = DistortionMeasure.hamming(2)


def scan_oracle(words, indices, s, d):
    """Plain linear scan: first index with strictly smaller total distortion wins."""
    best, best_val = None, None
    for i in indices:
        val = sum(d[a][b] for a, b in zip(s, words[i])) / len(s)
        if best_val is None or val < best_val:
            best, best_val = i, val
    return best, best_val


def test_sizes():
    assert codebook_size(10, 0.0) == 1
    assert codebook_size(14, 1.0) == 2**14
    assert codebook_size(3, 0.5) == 3  # 2^1.5 = 2.83
    with pytest.raises(GuardError):
        codebook_size(30, 1.0)
    cb = gen_codebook("mixture", 8, 0.0, 2, seed=1)
    assert cb.M == 1 and cb.words.shape == (1, 8)


def test_nearest_type():
    assert nearest_type([0.5, 0.5], 14).tolist() == [7, 7]
    assert nearest_type([0.85, 0.15], 14).tolist() == [12, 2]
    assert nearest_type([0.5, 0.5], 5).tolist() == [2, 3]
    assert nearest_type([0.2, 0.3, 0.5], 7).sum() == 7


def test_iid_words_follow_pmf():
    cb = gen_codebook("iid", 2000, 0.005, 3, seed=7, pmf=[0.2, 0.3, 0.5])
    freq = np.stack([(cb.words == b).mean(axis=1) for b in range(3)], axis=1)
    assert np.all(np.abs(freq - [0.2, 0.3, 0.5]) < 0.05)


def test_type_class_words():
    cb = gen_codebook("type", 10, 0.8, 2, seed=3, pmf=[0.5, 0.5])
    assert np.all(cb.words.sum(axis=1) == 5)
    assert len({w.tobytes() for w in cb.words}) > cb.M // 2


def test_mixture_weight_is_uniform_over_counts():
    """Under the uniform mixture the number of ones in a binary word is uniform on 0..n."""
    n = 9
    cb = gen_codebook("mixture", n, 14 / n, 2, seed=11)
    ones = np.bincount(cb.words.sum(axis=1), minlength=n + 1)
    assert stats.chisquare(ones).pvalue > 1e-3


def test_mixture_exchangeable_within_word():
    cb = gen_codebook("mixture", 6, 2.0, 2, seed=5)
    # each position has the same marginal; compare first and last columns
    assert stats.ks_2samp(cb.words[:, 0], cb.words[:, -1]).pvalue > 1e-3


def test_generation_is_independent_of_threads():
    a = gen_codebook("mixture", 15, 1.0, 2, seed=99, threads=1)
    b = gen_codebook("mixture", 15, 1.0, 2, seed=99, threads=4)
    assert np.array_equal(a.words, b.words)
    assert np.array_equal(a.thetas, b.thetas)
    c = gen_codebook("mixture", 15, 1.0, 2, seed=100)
    assert not np.array_equal(a.words, c.words)


def test_file_round_trip(tmp_path):
    for ens, pmf in (("mixture", None), ("iid", [0.3, 0.7]), ("type", [0.5, 0.5])):
        cb = gen_codebook(ens, 7, 1.0, 2, seed=2, pmf=pmf)
        files = save_codebook(cb, tmp_path / f"{ens}.bin", with_thetas=True)
        back = load_codebook(files[0])
        assert np.array_equal(back.words, cb.words)
        assert (back.n, back.rate, back.seed, back.M, back.tag) == (cb.n, cb.rate, cb.seed, cb.M, cb.tag)
    raw = (tmp_path / "iid.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ConfigError):
        load_codebook(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-3])
    with pytest.raises(ConfigError):
        load_codebook(tmp_path / "short.bin")


def test_subset_sampling():
    rng = streams.stream(0, streams.SUBSET, 0)
    full = sample_subset(64, 1.0, 6, rng)
    assert full.indices.tolist() == list(range(64))
    counts = np.zeros(64)
    for _ in range(100_000):
        counts[sample_subset(64, 0.0, 6, rng).indices[0]] += 1
    assert stats.chisquare(counts).pvalue > 1e-3
    with pytest.raises(ConfigError):
        sample_subset(8, 1.0, 6, rng)


def test_encode_optimal_examples():
    cb = gen_codebook("mixture", 6, 1.0, 2, seed=4)
    s = cb.words[17]
    res = encode_optimal(cb, None, s, HAMMING2)
    assert res.distortion == 0.0
    assert np.array_equal(decode(cb, res.index), s)
    # two words at equal distance: the lower index wins
    from subsetcode.codebook import Codebook
    words = np.array([[0, 0, 1, 1], [1, 1, 0, 0], [0, 0, 1, 1]], dtype=np.uint8)
    tie = Codebook(4, 0.4, 2, words, "mixture", 0)
    assert encode_optimal(tie, [2, 0], [0, 0, 1, 1], HAMMING2).index == 0
    assert encode_optimal(tie, [1, 2], [1, 1, 1, 1], HAMMING2).index == 1


def test_encode_optimal_matches_scan_oracle(rng):
    cb = gen_codebook("mixture", 8, 1.0, 2, seed=8)
    d = rng.random((2, 2))
    for k in range(20):
        sub = sample_subset(cb.M, 0.5, 8, streams.stream(8, streams.SUBSET, k))
        s = rng.integers(0, 2, size=8)
        idx, dist = encode_optimal_batch(cb, sub, s[None, :], d)
        want_i, want_d = scan_oracle(cb.words, sub.indices, s, d)
        assert int(idx[0]) == want_i
        assert float(dist[0]) == want_d


def test_encode_typicality_rules():
    from subsetcode.codebook import Codebook
    words = np.array([[1, 1, 1, 1], [0, 0, 1, 1], [0, 1, 0, 1], [0, 0, 0, 0]], dtype=np.uint8)
    cb = Codebook(4, 0.5, 2, words, "mixture", 0)
    joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    s = np.array([0, 0, 1, 1])
    # only word 2 has the exact joint type with s, though word 1 is at distortion 0
    res = encode_typicality(cb, None, s, joint, 0.0, HAMMING2)
    assert (res.index, res.typicality_hit, res.distortion) == (2, True, 0.5)
    assert is_jointly_typical(s, words[2], joint, 0.0)
    # no typical word in the subset: smallest subset index, no hit
    res = encode_typicality(cb, [3, 1], s, joint, 0.0, HAMMING2)
    assert (res.index, res.typicality_hit) == (1, False)


def test_decode_errors():
    cb = gen_codebook("mixture", 4, 1.0, 2, seed=0)
    with pytest.raises(ConfigError):
        decode(cb, cb.M)
    with pytest.raises(ConfigError):
        decode(cb, -1)


def test_mixture_probability_closed_form():
    # Q(z) integrates prod theta_b^{c_b} over the flat simplex
    for counts in ([3, 0], [2, 5], [1, 1, 1], [4, 0, 2]):
        k, n = len(counts), sum(counts)
        want = math.factorial(k - 1) * math.prod(math.factorial(c) for c in counts) / math.factorial(n + k - 1)
        assert 2.0 ** mixture_log2_prob(counts) == pytest.approx(want, rel=1e-12)
    total = sum(2.0 ** mixture_log2_prob(np.bincount(z, minlength=3)) for z in product(range(3), repeat=4))
    assert total == pytest.approx(1.0, rel=1e-12)


def exact_hit_oracle(joint, y, eps):
    """Binary Y and Z: loop over (#ones in the y=0 block, #ones in the y=1 block)."""
    n = len(y)
    n0 = int(np.sum(np.asarray(y) == 0))
    n1 = n - n0
    total = 0.0
    for a in range(n0 + 1):
        for b in range(n1 + 1):
            cells = np.array([[n0 - a, a], [n1 - b, b]])
            if np.all(np.abs(cells - n * joint) <= eps * n * joint + 1e-12 * n):
                w = a + b
                q = 1.0 / ((n + 1) * math.comb(n, w))
                total += math.comb(n0, a) * math.comb(n1, b) * q
    return total


def test_exact_hit_probability_against_oracle():
    joint = np.array([[0.4, 0.1], [0.1, 0.4]])
    for n in (6, 8, 10):
        y = np.array([0] * (n // 2) + [1] * (n - n // 2))
        assert exact_conditional_hit_prob(joint, y, 0.35) == pytest.approx(exact_hit_oracle(joint, y, 0.35), rel=1e-12)


def test_hit_estimate_brackets_exact():
    joint = np.array([[0.4, 0.1], [0.1, 0.4]])
    y = np.array([0] * 5 + [1] * 5)
    est = estimate_conditional_hit_prob(joint, y, 0.35, 200_000, streams.stream(1, streams.LEMMA1, 0))
    exact = exact_conditional_hit_prob(joint, y, 0.35)
    assert est.ci_low <= exact <= est.ci_high
    # product joint at large eps: only the support condition matters
    prod = np.outer([0.5, 0.5], [0.5, 0.5])
    est = estimate_conditional_hit_prob(prod, y, 0.99, 20_000, streams.stream(1, streams.LEMMA1, 1))
    assert est.estimate == pytest.approx(exact_conditional_hit_prob(prod, y, 0.99), abs=0.01)
    with pytest.raises(ConfigError):
        estimate_conditional_hit_prob(joint, [0] * 10, 0.35, 10, streams.stream(1, streams.MISC))


def test_lemma1_bound_shape():
    joint = np.array([[0.4, 0.1], [0.1, 0.4]])
    mi = mutual_information(joint)
    assert lemma1_exponent(joint, 1e-9) == pytest.approx(mi, abs=1e-8)
    eps = 0.35
    want = (1 + eps) * (mi + eps + 2 * eps * conditional_entropy(joint))
    assert lemma1_exponent(joint, eps) == pytest.approx(want)
    xi = (1 - 2**-eps) / 4
    assert lemma1_lower_bound(joint, 12, eps) == pytest.approx((1 - eps) * xi * 2 ** (-12 * want))


def test_rd_target_feeds_typicality_encoder():
    target = build_rd_target([0.5, 0.5], HAMMING2, 0.5, 0.08)
    cb = gen_codebook("mixture", 10, 1.0, 2, seed=6)
    sub = SubsetSpec(np.arange(32), 0.5, 10)
    res = encode_typicality(cb, sub, cb.words[40], target, 0.3, HAMMING2)
    assert 0 <= res.index < 32
