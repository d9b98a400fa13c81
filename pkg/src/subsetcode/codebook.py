"""Random codebooks, codeword subsets, encoders and the mixture hit probability.

Three ensembles are supported:

``mixture``
    each word draws its own pmf uniformly from the simplex, then n i.i.d.
    symbols from it;
``iid``
    every word is n i.i.d. symbols from one fixed pmf;
``type``
    every word is a uniformly random permutation of one fixed type (the
    type nearest to a given pmf).

Words are generated in fixed blocks of ``WORD_BLOCK`` words, block ``b``
using stream ``(seed, CODEBOOK, b)``, so the codebook is the same whatever
the number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math
from pathlib import Path
import struct

import numpy as np
from scipy.special import gammaln
from scipy.stats import binomtest

from . import streams
from .errors import ConfigError, GuardError
from .info_core import (
    TYPICALITY_SLACK,
    as_joint,
    as_pmf,
    as_sequence,
    batch_joint_counts,
    conditional_entropy,
    iter_conditional_typical,
    mutual_information,
    type_counts,
    typical_counts,
)
from .rd_solver import DistortionMeasure
from .simplex import sample_uniform_simplex, simplex_measure_constant, xi_for_kl

ENSEMBLES = ("mixture", "iid", "type")
CODEBOOK_GUARD = 2**24
WORD_BLOCK = 4096
HIT_CHUNK = 100_000

MAGIC = b"SUCB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIdQQH")


def round_half_up(x):
    return int(math.floor(x + 0.5))


def codebook_size(n, rate):
    """M = round(2^{n R}), at least 1."""
    if n * rate > 24 + 1e-9:
        raise GuardError(f"2^(n R) = 2^{n * rate:g} exceeds the 2^24 codebook guard")
    return max(1, round_half_up(2.0 ** (n * rate)))


def subset_size(n, subset_rate):
    if n * subset_rate > 24 + 1e-9:
        raise GuardError(f"2^(n R') = 2^{n * subset_rate:g} exceeds the 2^24 guard")
    return max(1, round_half_up(2.0 ** (n * subset_rate)))


def nearest_type(pmf, n):
    """Type counts summing to n closest in L1 to n * pmf.

    Floors everywhere, then the leftover units go to the largest fractional
    parts; equal fractional parts favour higher symbols, which gives the
    lexicographically smallest count vector among L1 minimisers.
    """
    pmf = as_pmf(pmf)
    target = n * pmf
    counts = np.floor(target).astype(np.int64)
    frac = target - counts
    left = n - int(counts.sum())
    order = sorted(range(pmf.size), key=lambda i: (-round(frac[i], 12), -i))
    for i in order[:left]:
        counts[i] += 1
    return counts


@dataclass(frozen=True)
class Codebook:
    n: int
    rate: float
    alphabet_size: int
    words: np.ndarray = field(repr=False)
    ensemble: str
    seed: int
    ensemble_pmf: np.ndarray = field(default=None, repr=False)
    thetas: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def M(self):
        return self.words.shape[0]

    @property
    def tag(self):
        if self.ensemble == "mixture":
            return "mixture"
        return f"{self.ensemble}:" + ",".join(repr(float(x)) for x in self.ensemble_pmf)

    def header(self):
        return {
            "magic": MAGIC.decode(),
            "version": FORMAT_VERSION,
            "n": self.n,
            "rate": self.rate,
            "alphabet_size": self.alphabet_size,
            "ensemble": self.tag,
            "seed": self.seed,
            "M": self.M,
            "M_rounding": "round_half_up(2^(n*rate))",
        }


def _symbols(u, pmf):
    """Inverse-cdf draw; ``pmf`` has shape (k,) or (rows, k)."""
    cdf = np.cumsum(pmf, axis=-1)[..., :-1]
    if cdf.ndim == 1:
        return np.searchsorted(cdf, u, side="right").astype(np.uint8)
    return (u[:, :, None] >= cdf[:, None, :]).sum(axis=-1).astype(np.uint8)


def _block(ensemble, n, k, count, seed, b, pmf, base):
    rng = streams.stream(seed, streams.CODEBOOK, b)
    if ensemble == "mixture":
        theta = sample_uniform_simplex(k, rng, size=count)
        return _symbols(rng.random((count, n)), theta), theta
    if ensemble == "iid":
        return _symbols(rng.random((count, n)), pmf), None
    return rng.permuted(np.tile(base, (count, 1)), axis=1), None


def gen_codebook(ensemble, n, rate, alphabet_size, seed, pmf=None, threads=1):
    """Draw a codebook of round(2^{nR}) words from the named ensemble."""
    if ensemble not in ENSEMBLES:
        raise ConfigError(f"unknown ensemble {ensemble!r}; choose from {ENSEMBLES}")
    n, k = int(n), int(alphabet_size)
    if n < 1 or not 1 <= k <= 255:
        raise ConfigError("need n >= 1 and 1 <= alphabet_size <= 255")
    if rate < 0:
        raise ConfigError("rate must be non-negative")
    seed = streams.check_seed(seed)
    M = codebook_size(n, rate)
    base = None
    if ensemble == "mixture":
        pmf = None
    else:
        if pmf is None:
            raise ConfigError(f"the {ensemble} ensemble needs a pmf")
        pmf = as_pmf(pmf, k)
        if ensemble == "type":
            base = np.repeat(np.arange(k, dtype=np.uint8), nearest_type(pmf, n))

    nblocks = -(-M // WORD_BLOCK)
    sizes = [min(WORD_BLOCK, M - b * WORD_BLOCK) for b in range(nblocks)]

    def work(b):
        return _block(ensemble, n, k, sizes[b], seed, b, pmf, base)

    if threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(nblocks)))
    else:
        parts = [work(b) for b in range(nblocks)]
    words = np.concatenate([w for w, _ in parts])
    words.setflags(write=False)
    thetas = np.concatenate([t for _, t in parts]) if ensemble == "mixture" else None
    return Codebook(n, float(rate), k, words, ensemble, seed, pmf, thetas)


def save_codebook(cb, path, with_thetas=False):
    """Write the packed binary codebook plus a ``.json`` header sidecar.

    Byte layout (little-endian)::

        0   4s   magic "SUCB"
        4   u16  format version
        6   u16  alphabet size
        8   u32  n
        12  f64  rate
        20  u64  master seed
        28  u64  M
        36  u16  length L of the ensemble tag
        38  L    ensemble tag, UTF-8 ("mixture", "iid:p0,p1,..", "type:p0,..")
        ..  M*n  symbols as u8, word-major
    """
    path = Path(path)
    tag = cb.tag.encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, cb.alphabet_size, cb.n, cb.rate, cb.seed, cb.M, len(tag)))
        fh.write(tag)
        fh.write(np.ascontiguousarray(cb.words, dtype=np.uint8).tobytes())
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(cb.header(), indent=2, sort_keys=True) + "\n")
    written = [path, sidecar]
    if with_thetas and cb.thetas is not None:
        tpath = path.with_name(path.name + ".thetas.npy")
        np.save(tpath, cb.thetas)
        written.append(tpath)
    return written


def load_codebook(path):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{path}: truncated codebook header")
    magic, version, k, n, rate, seed, M, tag_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError(f"{path}: not a codebook file")
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported codebook version {version}")
    start = _HEADER.size + tag_len
    tag = raw[_HEADER.size:start].decode()
    body = np.frombuffer(raw, dtype=np.uint8, offset=start)
    if body.size != M * n:
        raise ConfigError(f"{path}: expected {M * n} symbols, found {body.size}")
    words = body.reshape(M, n).copy()
    words.setflags(write=False)
    ensemble, _, pmf_text = tag.partition(":")
    pmf = np.array([float(x) for x in pmf_text.split(",")]) if pmf_text else None
    thetas = None
    tpath = path.with_name(path.name + ".thetas.npy")
    if tpath.exists():
        thetas = np.load(tpath)
    return Codebook(n, rate, k, words, ensemble, seed, pmf, thetas)


@dataclass(frozen=True)
class SubsetSpec:
    indices: np.ndarray
    subset_rate: float
    n: int

    def __len__(self):
        return self.indices.size


def sample_subset(M, subset_rate, n, rng):
    """Uniformly random subset of round(2^{n R'}) indices out of range(M), sorted."""
    K = subset_size(n, subset_rate)
    if K > M:
        raise ConfigError(f"subset size {K} exceeds the codebook size {M}")
    idx = np.sort(rng.choice(M, size=K, replace=False))
    return SubsetSpec(idx, float(subset_rate), int(n))


def _indices(cb, subset):
    if subset is None:
        return np.arange(cb.M)
    idx = subset.indices if isinstance(subset, SubsetSpec) else np.asarray(subset, dtype=np.int64)
    # tie rules refer to codebook order, whatever order the caller listed
    idx = np.unique(idx)
    if idx.size == 0:
        raise ConfigError("empty subset")
    if idx.min() < 0 or idx.max() >= cb.M:
        raise ConfigError("subset index out of range")
    return idx


def _matrix(d):
    return d.matrix if isinstance(d, DistortionMeasure) else np.asarray(d, dtype=float)


def distortion_matrix(words, sources, d):
    """Per-letter average distortion of every source row against every word.

    Accumulates position by position in order, then divides by n, so each
    entry equals ``sum(d[s_i, w_i] for i in range(n)) / n`` bit for bit.
    """
    dm = _matrix(d)
    words = np.asarray(words)
    sources = np.atleast_2d(sources)
    n = words.shape[1]
    if sources.shape[1] != n:
        raise ConfigError("source and codeword lengths differ")
    acc = np.zeros((sources.shape[0], words.shape[0]))
    for i in range(n):
        acc += dm[sources[:, i][:, None], words[:, i][None, :]]
    return acc / n


@dataclass(frozen=True)
class EncodeResult:
    index: int
    distortion: float
    typicality_hit: bool = None


def _check_source(cb, s, d):
    dm = _matrix(d)
    if dm.shape[1] != cb.alphabet_size:
        raise ConfigError("distortion columns do not match the codebook alphabet")
    s = as_sequence(s, dm.shape[0])
    if s.size != cb.n:
        raise ConfigError(f"source length {s.size} != blocklength {cb.n}")
    return s


def encode_optimal_batch(cb, subset, sources, d):
    """Minimum-distortion codeword for each source row; ties go to the lowest index.

    Returns ``(indices, distortions)``.
    """
    idx = _indices(cb, subset)
    sources = np.atleast_2d(sources)
    dist = distortion_matrix(cb.words[idx], sources, d)
    best = np.argmin(dist, axis=1)
    return idx[best], dist[np.arange(dist.shape[0]), best]


def encode_optimal(cb, subset, s, d):
    s = _check_source(cb, s, d)
    index, dist = encode_optimal_batch(cb, subset, s[None, :], d)
    return EncodeResult(int(index[0]), float(dist[0]))


def typicality_hits(words, sources, joint, eps):
    """Boolean (len(sources), len(words)): joint eps-typicality of each pair."""
    ks, kt = joint.shape
    n = words.shape[1]
    counts = np.empty((sources.shape[0], words.shape[0], ks, kt))
    onehot_w = [(words == b).astype(np.float64) for b in range(kt)]
    for a in range(ks):
        sa = (sources == a).astype(np.float64)
        for b in range(kt):
            counts[:, :, a, b] = sa @ onehot_w[b].T
    return typical_counts(counts, n, joint, eps)


def encode_typicality_batch(cb, subset, sources, target, eps, d):
    """Suboptimal typicality encoder applied to every source row.

    Picks the smallest subset index whose word is jointly eps-typical with the
    source under the target joint; falls back to the smallest subset index.
    Returns ``(indices, distortions, hits)``.
    """
    idx = _indices(cb, subset)
    sources = np.atleast_2d(sources)
    joint = target.target_joint if hasattr(target, "target_joint") else as_joint(target)
    words = cb.words[idx]
    hits = typicality_hits(words, sources, joint, eps)
    any_hit = hits.any(axis=1)
    first = np.where(any_hit, np.argmax(hits, axis=1), 0)
    dist = distortion_matrix(words, sources, d)
    return idx[first], dist[np.arange(sources.shape[0]), first], any_hit


def encode_typicality(cb, subset, s, target, eps, d):
    s = _check_source(cb, s, d)
    index, dist, hit = encode_typicality_batch(cb, subset, s[None, :], target, eps, d)
    return EncodeResult(int(index[0]), float(dist[0]), bool(hit[0]))


def decode(cb, index):
    index = int(index)
    if not 0 <= index < cb.M:
        raise ConfigError(f"index {index} outside codebook of size {cb.M}")
    return cb.words[index]


@dataclass(frozen=True)
class HitEstimate:
    hits: int
    trials: int
    estimate: float
    ci_low: float
    ci_high: float

    def to_json(self):
        return {
            "hits": self.hits,
            "trials": self.trials,
            "estimate": self.estimate,
            "ci95_low": self.ci_low,
            "ci95_high": self.ci_high,
        }


def _check_marginally_typical(y, joint, eps):
    p_y = joint.sum(axis=1)
    counts = type_counts(y, p_y.size)
    n = y.size
    dev = np.abs(counts - n * p_y)
    if np.any(dev[p_y == 0] > 0):
        raise ConfigError("y^n uses a symbol of zero probability")
    pos = p_y > 0
    worst = float(np.max(dev[pos] / (n * p_y[pos])))
    if worst >= eps - TYPICALITY_SLACK:
        raise ConfigError(f"y^n is only {worst:.4g}-typical; need some eps' < eps = {eps}")


def estimate_conditional_hit_prob(p_yz, y, eps, trials, rng, chunk=HIT_CHUNK):
    """Monte-Carlo Pr(Z^n jointly eps-typical with y^n), Z^n from the uniform mixture.

    Returns a :class:`HitEstimate` with a Wilson 95% interval.
    """
    joint = as_joint(p_yz)
    y = as_sequence(y, joint.shape[0])
    trials = int(trials)
    if trials < 1:
        raise ConfigError("need at least one trial")
    _check_marginally_typical(y, joint, eps)
    kz = joint.shape[1]
    hits = 0
    done = 0
    while done < trials:
        c = min(chunk, trials - done)
        theta = sample_uniform_simplex(kz, rng, size=c)
        z = _symbols(rng.random((c, y.size)), theta)
        counts = batch_joint_counts(y, z, *joint.shape)
        hits += int(typical_counts(counts, y.size, joint, eps).sum())
        done += c
    ci = binomtest(hits, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return HitEstimate(hits, trials, hits / trials, float(ci.low), float(ci.high))


def mixture_log2_prob(counts):
    """log2 Q(z^n) under the uniform mixture, from the type counts of z^n.

    Dirichlet-multinomial with unit parameters:
    Q(z^n) = (k-1)! prod_b counts_b! / (n + k - 1)!.
    """
    counts = np.asarray(counts)
    k = counts.shape[-1]
    n = counts.sum(axis=-1)
    ln = gammaln(k) + gammaln(counts + 1).sum(axis=-1) - gammaln(n + k)
    return ln / math.log(2)


def exact_conditional_hit_prob(p_yz, y, eps):
    """Exact hit probability: sum of Q over the enumerated conditional typical set."""
    joint = as_joint(p_yz)
    y = as_sequence(y, joint.shape[0])
    total = 0.0
    for members in iter_conditional_typical(y, joint, eps):
        counts = np.stack([(members == b).sum(axis=1) for b in range(joint.shape[1])], axis=1)
        total += float(np.exp2(mixture_log2_prob(counts)).sum())
    return total


def lemma1_exponent(p_yz, eps):
    """(1+eps)(I(Y;Z) + eps + 2 eps H(Z|Y)): the explicit per-letter exponent."""
    joint = as_joint(p_yz)
    return (1 + eps) * (mutual_information(joint) + eps + 2 * eps * conditional_entropy(joint))


def lemma1_lower_bound(p_yz, n, eps):
    """Explicit finite-n lower bound on the mixture hit probability.

    (1-eps) / c_k * xi^(k-1) * 2^{-n (1+eps)(I + eps + 2 eps H(Z|Y))} with
    xi = (1 - 2^-eps) / k^2, c_k the simplex volume and k = |Z|.
    """
    joint = as_joint(p_yz)
    if not 0 < eps < 1:
        raise ConfigError("eps must lie in (0, 1)")
    if n < 1:
        raise ConfigError("n must be >= 1")
    k = joint.shape[1]
    const = (1 - eps) / simplex_measure_constant(k) * xi_for_kl(eps, k) ** (k - 1)
    return const * 2.0 ** (-n * lemma1_exponent(joint, eps))
