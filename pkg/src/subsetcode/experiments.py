"""Monte-Carlo experiments on random codebook subsets.

``run_subset_universality``
    draw one codebook, many random subsets of it, and measure each subset's
    mean distortion under the optimal and the typicality encoder, with the
    two error events of the typicality encoder counted per subset.
``run_ensemble_comparison``
    the same experiment for two ensembles side by side (mixture against a
    single-type codebook), with a one-sided Mann-Whitney test.
``make_random_channel`` / ``run_channel_simulation``
    a deterministic channel known only to the encoder, which reduces to
    optimal encoding over the codeword subset indexed by the channel image.

Work units (subsets, channels) are independent and draw from streams keyed
by their id, so results do not depend on the thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import math

import numpy as np
from scipy.stats import mannwhitneyu

from . import streams
from .codebook import (
    ENSEMBLES,
    _symbols,
    codebook_size,
    distortion_matrix,
    encode_optimal_batch,
    encode_typicality_batch,
    gen_codebook,
    sample_subset,
    subset_size,
)
from .errors import ConfigError, GuardError
from .info_core import TypicalityParams, as_pmf, typical_counts, typical_probability
from .rd_solver import DistortionMeasure, build_rd_target, solve_distortion_at_rate

HIT_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    source_pmf: tuple
    n: int
    full_rate: float
    subset_rate: float
    backoff: float
    eps: float
    eps_prime: float
    resolution: float
    p_min: float
    num_subsets: int
    num_source_words: int
    seed: int
    grid_pmf: tuple = None
    ensemble: str = "mixture"
    ensemble_pmf: tuple = None
    distortion: object = "hamming"
    recon_size: int = None
    slack: float = 0.05

    def __post_init__(self):
        src = tuple(float(x) for x in as_pmf(self.source_pmf))
        object.__setattr__(self, "source_pmf", src)
        grid = src if self.grid_pmf is None else tuple(float(x) for x in as_pmf(self.grid_pmf, len(src)))
        object.__setattr__(self, "grid_pmf", grid)
        if self.recon_size is None:
            object.__setattr__(self, "recon_size", len(src))
        if self.ensemble_pmf is not None:
            object.__setattr__(self, "ensemble_pmf", tuple(float(x) for x in as_pmf(self.ensemble_pmf, self.recon_size)))
        if isinstance(self.distortion, np.ndarray):
            object.__setattr__(self, "distortion", self.distortion.tolist())
        TypicalityParams(self.eps, self.eps_prime)
        if not 0 < self.resolution < self.eps_prime:
            raise ConfigError("need 0 < resolution < eps_prime < eps")
        if not 0 < self.p_min < 1:
            raise ConfigError("p_min must lie in (0, 1)")
        if not 0 < self.subset_rate < self.full_rate:
            raise ConfigError("need 0 < subset_rate < full_rate")
        if not 0 < self.backoff < self.subset_rate:
            raise ConfigError("need 0 < backoff < subset_rate")
        if self.ensemble not in ENSEMBLES:
            raise ConfigError(f"unknown ensemble {self.ensemble!r}")
        if self.ensemble != "mixture" and self.ensemble_pmf is None:
            raise ConfigError(f"the {self.ensemble} ensemble needs ensemble_pmf")
        if int(self.n) < 1 or int(self.num_subsets) < 1 or int(self.num_source_words) < 1:
            raise ConfigError("n, num_subsets and num_source_words must be positive")
        streams.check_seed(self.seed)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        out = asdict(self)
        for key in ("source_pmf", "grid_pmf", "ensemble_pmf"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    def distortion_measure(self):
        return DistortionMeasure.from_spec(self.distortion, len(self.source_pmf), self.recon_size)


@dataclass(frozen=True)
class SubsetRecord:
    subset_id: int
    mean_distortion_optimal: float
    mean_distortion_typicality: float
    e1_count: int
    e2_count: int
    hit_rate: float
    typical_source_count: int = field(repr=False, default=0)

    CSV_COLUMNS = ("subset_id", "mean_dist_opt", "mean_dist_typ", "e1", "e2", "hit_rate")

    def csv_row(self):
        return (
            self.subset_id,
            repr(self.mean_distortion_optimal),
            repr(self.mean_distortion_typicality),
            self.e1_count,
            self.e2_count,
            repr(self.hit_rate),
        )


def draw_sources(pmf, n, count, rng):
    return _symbols(rng.random((count, n)), np.asarray(pmf)).astype(np.int64)


def _run_subset(cfg, cb, d, target, subset_id, typicality):
    rng_sub = streams.stream(cfg.seed, streams.SUBSET, subset_id)
    rng_src = streams.stream(cfg.seed, streams.SOURCE, subset_id)
    subset = sample_subset(cb.M, cfg.subset_rate, cfg.n, rng_sub)
    sources = draw_sources(cfg.source_pmf, cfg.n, cfg.num_source_words, rng_src)
    _, d_opt = encode_optimal_batch(cb, subset, sources, d)

    src_counts = np.stack([(sources == a).sum(axis=1) for a in range(len(cfg.grid_pmf))], axis=1)
    typical_src = typical_counts(src_counts, cfg.n, np.asarray(cfg.grid_pmf), cfg.eps_prime)
    checks = {"dominance": 0, "decomposition": 0, "hit_bound": 0}
    if typicality:
        idx_typ, d_typ, hit = encode_typicality_batch(cb, subset, sources, target, cfg.eps, d)
        bound = (1 + cfg.eps) * target.expected_distortion + HIT_BOUND_TOL
        checks["dominance"] = int(np.sum(d_opt > d_typ))
        checks["hit_bound"] = int(np.sum(hit & (d_typ > bound)))
        e2 = typical_src & ~hit
        # E (sent word not jointly typical), recomputed from the sent words, must imply E1 or E2
        sent = cb.words[idx_typ]
        joint = target.target_joint
        pair_counts = np.stack([
            np.stack([((sources == a) & (sent == b)).sum(axis=1) for b in range(joint.shape[1])], axis=1)
            for a in range(joint.shape[0])
        ], axis=1)
        e = ~typical_counts(pair_counts, cfg.n, joint, cfg.eps)
        checks["decomposition"] = int(np.sum(e & typical_src & ~e2))
        mean_typ, hit_rate, e2_count = float(d_typ.mean()), float(hit.mean()), int(e2.sum())
    else:
        mean_typ, hit_rate, e2_count = math.nan, math.nan, 0
    record = SubsetRecord(
        subset_id=subset_id,
        mean_distortion_optimal=float(d_opt.mean()),
        mean_distortion_typicality=mean_typ,
        e1_count=int((~typical_src).sum()),
        e2_count=e2_count,
        hit_rate=hit_rate,
        typical_source_count=int(typical_src.sum()),
    )
    return record, checks


def _quantiles(values):
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return None
    q = np.quantile(v, [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
    keys = ("min", "q10", "q25", "median", "q75", "q90", "max")
    return dict(zip(keys, (float(x) for x in q)))


def run_subset_universality(cfg, threads=1, codebook=None, typicality=True):
    """Subset-distortion experiment; returns ``(records, summary)``."""
    d = cfg.distortion_measure()
    if subset_size(cfg.n, cfg.subset_rate) > codebook_size(cfg.n, cfg.full_rate):
        raise ConfigError("subset larger than the codebook")
    cb = codebook
    if cb is None:
        cb = gen_codebook(cfg.ensemble, cfg.n, cfg.full_rate, cfg.recon_size, cfg.seed, cfg.ensemble_pmf, threads)
    grid = np.asarray(cfg.grid_pmf)
    target = build_rd_target(grid, d, cfg.subset_rate, cfg.backoff)
    d_at_rate = solve_distortion_at_rate(grid, d, cfg.subset_rate).distortion
    d_backoff = target.expected_distortion

    def work(k):
        return _run_subset(cfg, cb, d, target, k, typicality)

    ids = range(int(cfg.num_subsets))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, ids))
    else:
        results = [work(k) for k in ids]
    records = [r for r, _ in results]
    checks = {key: sum(c[key] for _, c in results) for key in results[0][1]}

    threshold = (1 + cfg.eps) * d_backoff + cfg.slack
    opt = np.array([r.mean_distortion_optimal for r in records])
    total_words = cfg.num_subsets * cfg.num_source_words
    src = np.asarray(cfg.source_pmf)
    summary = {
        "config": cfg.to_dict(),
        "codebook_size": cb.M,
        "subset_size": subset_size(cfg.n, cfg.subset_rate),
        "D_subset_rate": d_at_rate,
        "D_subset_rate_minus_backoff": d_backoff,
        "target_mutual_info": target.point.achieved_mutual_info,
        "exceedance_threshold": threshold,
        "exceedance_fraction": float(np.mean(opt > threshold)),
        "optimal": _quantiles(opt),
        "typicality": _quantiles([r.mean_distortion_typicality for r in records]),
        "e1_rate": sum(r.e1_count for r in records) / total_words,
        "e1_exact": 1.0 - typical_probability(src, grid, cfg.n, cfg.eps_prime),
        "e2_rate": sum(r.e2_count for r in records) / total_words,
        "source_within_cell": bool(np.all(np.abs(src - grid) <= cfg.resolution * grid)),
        "violations": checks,
    }
    return records, summary


def run_ensemble_comparison(cfg_mixture, cfg_other, threads=1, alpha=0.01):
    """Compare subset distortions (optimal encoder) of two ensembles."""
    a, b = cfg_mixture.to_dict(), cfg_other.to_dict()
    for key in ("ensemble", "ensemble_pmf"):
        a.pop(key)
        b.pop(key)
    if a != b:
        diff = sorted(k for k in a if a[k] != b[k])
        raise ConfigError(f"configs differ outside the ensemble: {diff}")
    if cfg_mixture.num_subsets < 1:
        raise ConfigError("empty comparison: num_subsets must be positive")
    rec_a, sum_a = run_subset_universality(cfg_mixture, threads, typicality=False)
    rec_b, sum_b = run_subset_universality(cfg_other, threads, typicality=False)
    xa = np.array([r.mean_distortion_optimal for r in rec_a])
    xb = np.array([r.mean_distortion_optimal for r in rec_b])
    test = mannwhitneyu(xa, xb, alternative="less")
    summary = {
        "ensembles": [cfg_mixture.ensemble, cfg_other.ensemble],
        "ensemble_pmfs": [cfg_mixture.to_dict()["ensemble_pmf"], cfg_other.to_dict()["ensemble_pmf"]],
        "config": cfg_mixture.to_dict() | {"ensemble": None, "ensemble_pmf": None},
        "D_subset_rate": sum_a["D_subset_rate"],
        "first": sum_a["optimal"],
        "second": sum_b["optimal"],
        "first_median_below_second": bool(np.median(xa) < np.median(xb)),
        "mannwhitney_u": float(test.statistic),
        "mannwhitney_p_less": float(test.pvalue),
        "alpha": alpha,
        "significant": bool(test.pvalue < alpha),
    }
    return rec_a, rec_b, summary


@dataclass(frozen=True)
class ChannelSpec:
    x_size: int
    y_size: int
    n: int
    table: np.ndarray = field(repr=False)

    @property
    def image(self):
        return np.unique(self.table)

    @property
    def image_size(self):
        return int(self.image.size)

    @property
    def effective_rate(self):
        return math.log2(self.image_size) / self.n


CHANNEL_GUARD = 2**16


def make_random_channel(x_size, y_size, n, target_image_size, rng):
    """Random map from X^n onto a random set of ``target_image_size`` outputs.

    Sequences are identified with their base-|alphabet| integer index, most
    significant symbol first.  Every chosen output is hit at least once.
    """
    n_in, n_out = x_size**n, y_size**n
    if n_in > CHANNEL_GUARD:
        raise GuardError(f"|X|^n = {n_in} exceeds the channel table guard 2^16")
    T = int(target_image_size)
    if not 1 <= T <= min(n_in, n_out):
        raise ConfigError(f"image size {T} infeasible for {n_in} inputs and {n_out} outputs")
    image = rng.choice(n_out, size=T, replace=False)
    order = rng.permutation(n_in)
    table = np.empty(n_in, dtype=np.int64)
    table[order[:T]] = image
    table[order[T:]] = image[rng.integers(T, size=n_in - T)]
    table.setflags(write=False)
    return ChannelSpec(int(x_size), int(y_size), int(n), table)


@dataclass(frozen=True)
class ChannelResult:
    inputs: np.ndarray = field(repr=False)
    distortions: np.ndarray = field(repr=False)
    subset_distortions: np.ndarray = field(repr=False)

    @property
    def mismatches(self):
        return int(np.sum(self.distortions != self.subset_distortions))


def run_channel_simulation(channel, cb, sources, d):
    """Encoder that knows f: search channel inputs for the best reachable word.

    The decoder maps channel output y (as an index) to codeword y.  Also
    encodes the same sources over the induced subset {g(y): y in image} to
    expose the equivalence.
    """
    if cb.M != channel.y_size**channel.n:
        raise ConfigError("codebook must hold one word per channel output")
    if cb.n != channel.n:
        raise ConfigError("codebook and channel blocklengths differ")
    sources = np.atleast_2d(sources)
    per_input = distortion_matrix(cb.words[channel.table], sources, d)
    inputs = np.argmin(per_input, axis=1)
    dist = per_input[np.arange(sources.shape[0]), inputs]
    _, dist_subset = encode_optimal_batch(cb, channel.image, sources, d)
    return ChannelResult(inputs, dist, dist_subset)


def channel_experiment(source_pmf, x_size, y_size, n, num_channels, num_source_words, seed,
                       image_sizes=None, distortion="hamming", ensemble="mixture", ensemble_pmf=None):
    """Random channels against one codebook of |Y|^n words; one row per channel."""
    source_pmf = as_pmf(source_pmf)
    d = DistortionMeasure.from_spec(distortion, source_pmf.size, y_size)
    cb = gen_codebook(ensemble, n, math.log2(y_size), y_size, seed, ensemble_pmf)
    if cb.M != y_size**n:
        raise ConfigError("codebook size does not match |Y|^n")
    rows = []
    for c in range(int(num_channels)):
        rng = streams.stream(seed, streams.CHANNEL, c)
        if image_sizes is None:
            T = int(rng.integers(1, min(x_size**n, y_size**n) + 1))
        else:
            T = int(image_sizes[c % len(image_sizes)])
        ch = make_random_channel(x_size, y_size, n, T, rng)
        src = draw_sources(source_pmf, n, num_source_words, streams.stream(seed, streams.SOURCE, c))
        res = run_channel_simulation(ch, cb, src, d)
        rows.append({
            "channel_id": c,
            "image_size": ch.image_size,
            "effective_rate": ch.effective_rate,
            "distortion": float(res.distortions.mean()),
            "subset_distortion": float(res.subset_distortions.mean()),
            "benchmark_D": solve_distortion_at_rate(source_pmf, d, ch.effective_rate).distortion,
            "mismatches": res.mismatches,
        })
    return rows
