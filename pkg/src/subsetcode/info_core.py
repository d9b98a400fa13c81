"""Finite-alphabet pmfs, information measures and strong typicality.

Conventions: a pmf is a 1-D float array, a joint pmf a 2-D array whose first
axis is the "first" variable (Y, or the source S) and whose second axis is
the "second" variable (Z, or the reconstruction), and a conditional pmf a
row-stochastic 2-D array.  Sequences are 1-D integer arrays of symbol
indices.  All logarithms are base 2.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, GuardError

PMF_ATOL = 1e-12
# Slack (on the frequency scale) for typicality boundary comparisons.
TYPICALITY_SLACK = 1e-12
ENUMERATION_GUARD = 2**24
_ENUM_CHUNK = 2**16


def as_pmf(p, size=None):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ConfigError("pmf must be a non-empty vector")
    if size is not None and p.size != size:
        raise ConfigError(f"pmf has {p.size} entries, expected {size}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ConfigError("pmf entries must be finite and non-negative")
    if abs(p.sum() - 1.0) > PMF_ATOL:
        raise ConfigError(f"pmf sums to {float(p.sum())!r}, not 1")
    return p


def as_joint(j):
    j = np.asarray(j, dtype=float)
    if j.ndim != 2 or j.size == 0:
        raise ConfigError("joint pmf must be a non-empty matrix")
    if not np.all(np.isfinite(j)) or np.any(j < 0):
        raise ConfigError("joint pmf entries must be finite and non-negative")
    if abs(j.sum() - 1.0) > PMF_ATOL:
        raise ConfigError(f"joint pmf sums to {float(j.sum())!r}, not 1")
    return j


def as_conditional(c, rows=None, cols=None):
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise ConfigError("conditional pmf must be a matrix")
    if rows is not None and c.shape[0] != rows or cols is not None and c.shape[1] != cols:
        raise ConfigError(f"conditional pmf has shape {c.shape}, expected ({rows}, {cols})")
    for row in c:
        as_pmf(row)
    return c


def as_sequence(x, size=None):
    x = np.asarray(x)
    if x.ndim != 1 or x.size == 0:
        raise ConfigError("sequence must be a non-empty vector")
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(x == np.round(x)):
            raise ConfigError("sequence symbols must be integers")
        x = x.astype(np.int64)
    if np.any(x < 0) or (size is not None and np.any(x >= size)):
        raise ConfigError("sequence symbol outside the alphabet")
    return x


@dataclass(frozen=True)
class TypicalityParams:
    eps: float
    eps_prime: float

    def __post_init__(self):
        if not 0 < self.eps_prime < self.eps < 1:
            raise ConfigError(f"need 0 < eps_prime < eps < 1, got eps={self.eps}, eps_prime={self.eps_prime}")


def _plogp(p):
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def entropy(p):
    """Shannon entropy in bits, with 0 log 0 = 0."""
    return _plogp(as_pmf(p))


def joint_entropy(j):
    return _plogp(as_joint(j).ravel())


def conditional_entropy(j):
    """H(second | first) for a joint pmf laid out as ``j[first, second]``."""
    j = as_joint(j)
    return max(0.0, joint_entropy(j) - _plogp(j.sum(axis=1)))


def mutual_information(j):
    j = as_joint(j)
    py = j.sum(axis=1, keepdims=True)
    pz = j.sum(axis=0, keepdims=True)
    mask = j > 0
    ratio = j[mask] / (py * pz)[mask]
    value = float((j[mask] * np.log2(ratio)).sum())
    return max(0.0, value)


def kl_divergence(p, q):
    """D(p || q) in bits; ``math.inf`` when p puts mass where q does not."""
    p = as_pmf(p)
    q = as_pmf(q)
    if p.size != q.size:
        raise ConfigError("kl_divergence: alphabet mismatch")
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return max(0.0, float((p[mask] * np.log2(p[mask] / q[mask])).sum()))


def type_counts(x, size=None):
    x = as_sequence(x, size)
    if size is None:
        size = int(x.max()) + 1
    return np.bincount(x, minlength=size)


def empirical_pmf(x, size=None):
    x = as_sequence(x, size)
    return type_counts(x, size) / x.size


def joint_type_counts(x, y, size_x=None, size_y=None):
    x = as_sequence(x, size_x)
    y = as_sequence(y, size_y)
    if x.size != y.size:
        raise ConfigError("sequences must have equal length")
    size_x = int(x.max()) + 1 if size_x is None else size_x
    size_y = int(y.max()) + 1 if size_y is None else size_y
    flat = np.bincount(x * size_y + y, minlength=size_x * size_y)
    return flat.reshape(size_x, size_y)


def joint_empirical_pmf(x, y, size_x=None, size_y=None):
    counts = joint_type_counts(x, y, size_x, size_y)
    return counts / counts.sum()


def typical_counts(counts, n, p, eps):
    """Vectorised typicality test on count arrays.

    ``counts`` has trailing shape ``p.shape``; returns a boolean array over the
    leading axes.  Tests |count - n p| <= eps n p for every cell.
    """
    counts = np.asarray(counts)
    p = np.asarray(p, dtype=float)
    ok = np.abs(counts - n * p) <= eps * n * p + TYPICALITY_SLACK * n
    axes = tuple(range(counts.ndim - p.ndim, counts.ndim))
    return np.all(ok, axis=axes)


def is_typical(x, p, eps):
    p = as_pmf(p)
    counts = type_counts(x, p.size)
    return bool(typical_counts(counts, counts.sum(), p, eps))


def is_jointly_typical(x, y, j, eps):
    j = as_joint(j)
    counts = joint_type_counts(x, y, *j.shape)
    return bool(typical_counts(counts, counts.sum(), j, eps))


def enumerate_sequences(k, n, chunk=_ENUM_CHUNK):
    """Yield all k-ary length-n sequences in lexicographic order, in chunks."""
    total = k**n
    if total > ENUMERATION_GUARD:
        raise GuardError(f"{k}^{n} sequences exceed the enumeration guard of 2^24")
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield ((idx[:, None] // powers) % k).astype(np.int8)


def batch_joint_counts(x, words, size_x, size_y):
    """Joint type counts of one sequence ``x`` against each row of ``words``.

    Returns an array of shape (len(words), size_x, size_y).
    """
    out = np.empty((words.shape[0], size_x, size_y), dtype=np.int64)
    for a in range(size_x):
        cols = words[:, x == a]
        for b in range(size_y):
            out[:, a, b] = (cols == b).sum(axis=1)
    return out


def iter_conditional_typical(y, j, eps):
    """Yield chunks of the z^n that are jointly eps-typical with ``y``."""
    j = as_joint(j)
    y = as_sequence(y, j.shape[0])
    for block in enumerate_sequences(j.shape[1], y.size):
        counts = batch_joint_counts(y, block, *j.shape)
        hit = typical_counts(counts, y.size, j, eps)
        if hit.any():
            yield block[hit]


def conditional_typical_set_size(y, j, eps):
    """Exact size of the conditional typical set of ``y``, by enumeration."""
    return int(sum(chunk.shape[0] for chunk in iter_conditional_typical(y, j, eps)))


def conditional_typical_size_bound(j, n, eps):
    """(1 - eps) 2^{n (1 - eps) H(Z|Y)}: the large-n lower bound on the set size."""
    return (1 - eps) * 2 ** (n * (1 - eps) * conditional_entropy(j))


def compositions(n, k):
    """All length-k non-negative integer vectors summing to n, as an array."""
    if math.comb(n + k - 1, k - 1) > ENUMERATION_GUARD:
        raise GuardError(f"too many types of length {n} over {k} symbols")
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    rows = []
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            rows.append(np.concatenate([[first], rest]))
    return np.array(rows, dtype=np.int64)


def log2_multinomial(counts):
    counts = np.asarray(counts)
    n = counts.sum(axis=-1)
    return (gammaln(n + 1) - gammaln(counts + 1).sum(axis=-1)) / math.log(2)


def typical_probability(source, reference, n, eps):
    """Exact Pr(S^n eps-typical w.r.t. ``reference``) for S^n i.i.d. ``source``.

    Sums multinomial type-class probabilities over all types of length n.
    """
    source = as_pmf(source)
    reference = as_pmf(reference, source.size)
    types = compositions(n, source.size)
    ok = typical_counts(types, n, reference, eps)
    types = types[ok]
    if types.size == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        logp = np.log2(source)
    terms = np.where(types > 0, types * logp, 0.0).sum(axis=1)
    return float(np.exp2(log2_multinomial(types) + terms).sum())
