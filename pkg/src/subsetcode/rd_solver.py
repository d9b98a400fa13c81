"""Distortion-rate function of a discrete memoryless source.

The solver is the parametric Blahut-Arimoto iteration: for a slope ``beta``
(bits per unit distortion) it alternates

    Q(t|s) ∝ q(t) 2^{-beta d(s, t)},      q(t) = sum_s P(s) Q(t|s)

until rate and distortion settle.  ``beta`` is minus the slope of R(D) at
the returned point.  A target rate is hit by bisecting on ``beta``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError, ConvergenceError
from .info_core import as_pmf, as_joint, mutual_information

LN2 = math.log(2.0)
BA_TOL = 1e-9
BA_MAX_ITER = 10_000
RATE_TOL = 1e-6
BISECT_MAX_STEPS = 200


@dataclass(frozen=True)
class DistortionMeasure:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.size == 0:
            raise ConfigError("distortion must be a non-empty matrix")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ConfigError("distortion entries must be finite and non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def source_size(self):
        return self.matrix.shape[0]

    @property
    def recon_size(self):
        return self.matrix.shape[1]

    @property
    def d_max(self):
        return float(self.matrix.max())

    @classmethod
    def hamming(cls, k, recon_size=None):
        recon_size = k if recon_size is None else recon_size
        return cls(1.0 - np.eye(k, recon_size))

    @classmethod
    def from_spec(cls, spec, source_size, recon_size=None):
        """``"hamming"`` or a nested list / array giving the matrix."""
        if isinstance(spec, str):
            if spec.lower() != "hamming":
                raise ConfigError(f"unknown distortion measure {spec!r}")
            return cls.hamming(source_size, recon_size)
        dm = cls(np.asarray(spec, dtype=float))
        if dm.source_size != source_size:
            raise ConfigError("distortion matrix rows do not match the source alphabet")
        return dm

    def to_json(self):
        return self.matrix.tolist()


@dataclass(frozen=True)
class RdPoint:
    rate: float
    distortion: float
    achiever: np.ndarray = field(repr=False)
    achieved_mutual_info: float
    slope: float = math.nan
    converged: bool = True
    iterations: int = 0

    def to_json(self):
        return {
            "rate_bits": self.rate,
            "distortion": self.distortion,
            "achieved_mutual_info": self.achieved_mutual_info,
            "slope": None if math.isnan(self.slope) else self.slope,
            "converged": self.converged,
            "iterations": self.iterations,
            "achiever": self.achiever.tolist(),
        }


@dataclass(frozen=True)
class RdTarget:
    subset_rate: float
    backoff: float
    target_joint: np.ndarray = field(repr=False)
    point: RdPoint = field(repr=False)

    @property
    def expected_distortion(self):
        return self.point.distortion


def expected_distortion(p_s, cond, d):
    p_s = as_pmf(p_s)
    cond = np.asarray(cond, dtype=float)
    m = d.matrix if isinstance(d, DistortionMeasure) else np.asarray(d, dtype=float)
    if cond.shape != m.shape or p_s.size != m.shape[0]:
        raise ConfigError("expected_distortion: alphabet mismatch")
    return float(p_s @ (cond * m).sum(axis=1))


def _check(p_s, d):
    p_s = as_pmf(p_s)
    if not isinstance(d, DistortionMeasure):
        d = DistortionMeasure(d)
    if p_s.size != d.source_size:
        raise ConfigError("source pmf and distortion matrix disagree on the alphabet")
    return p_s, d


def _reinsert(p_s, d, support, q_rows):
    """Full achiever: solved rows on the support, argmin rows elsewhere."""
    full = np.zeros(d.matrix.shape)
    full[support] = q_rows
    for s in np.flatnonzero(~support):
        full[s, int(np.argmin(d.matrix[s]))] = 1.0
    return full


def _point(p_s, d, support, q_rows, rate, slope=math.nan, converged=True, iterations=0):
    achiever = _reinsert(p_s, d, support, q_rows)
    mi = mutual_information(p_s[:, None] * achiever)
    return RdPoint(
        rate=mi if rate is None else float(rate),
        distortion=expected_distortion(p_s, achiever, d),
        achiever=achiever,
        achieved_mutual_info=mi,
        slope=slope,
        converged=converged,
        iterations=iterations,
    )


def _ba(p, dm, beta, log_q=None):
    """Blahut-Arimoto fixed point at one slope on a strictly positive source.

    Returns (Q, log_q, rate, distortion, converged, iterations).
    """
    k = dm.shape[1]
    if log_q is None:
        log_q = np.full(k, -math.log(k))
    else:
        # a collapsed reproduction pmf is a fixed point; keep every symbol alive
        log_q = np.log(0.9 * np.exp(log_q) + 0.1 / k)
    scaled = -beta * LN2 * dm
    rate = dist = math.inf
    for it in range(1, BA_MAX_ITER + 1):
        log_Q = scaled + log_q
        log_Q -= log_Q.max(axis=1, keepdims=True)
        Q = np.exp(log_Q)
        Q /= Q.sum(axis=1, keepdims=True)
        q = p @ Q
        with np.errstate(divide="ignore"):
            log_q = np.log(q)
        mask = Q > 0
        ratio = np.where(mask, Q, 1.0) / np.where(q > 0, q, 1.0)
        new_rate = float(p @ (Q * np.log2(ratio)).sum(axis=1))
        new_dist = float(p @ (Q * dm).sum(axis=1))
        if abs(new_rate - rate) < BA_TOL and abs(new_dist - dist) < BA_TOL:
            return Q, log_q, max(new_rate, 0.0), new_dist, True, it
        rate, dist = new_rate, new_dist
    return Q, log_q, max(rate, 0.0), dist, False, BA_MAX_ITER


def _zero_distortion_limit(p, dm):
    """beta -> infinity: minimise I(S;T) over conditionals supported on row argmins."""
    allowed = np.isclose(dm, dm.min(axis=1, keepdims=True), rtol=0, atol=1e-15)
    k = dm.shape[1]
    q = np.full(k, 1.0 / k)
    rate = math.inf
    for it in range(1, BA_MAX_ITER + 1):
        Q = np.where(allowed, q, 0.0)
        Q /= Q.sum(axis=1, keepdims=True)
        q = p @ Q
        new_rate = mutual_information(p[:, None] * Q)
        if abs(new_rate - rate) < BA_TOL:
            return Q, new_rate, True, it
        rate = new_rate
    return Q, rate, False, BA_MAX_ITER


def _zero_rate_rows(p, dm):
    col = int(np.argmin(p @ dm))
    Q = np.zeros(dm.shape)
    Q[:, col] = 1.0
    return Q


def blahut_arimoto_curve(p_s, d, slopes):
    """One :class:`RdPoint` per slope, in the order given.

    Points carry ``converged=False`` when the iteration cap was reached.
    Every slope starts from the uniform reproduction pmf, so points do not
    depend on one another.
    """
    p_s, d = _check(p_s, d)
    support = p_s > 0
    p = p_s[support]
    dm = d.matrix[support]
    points = []
    for beta in slopes:
        beta = float(beta)
        if beta < 0:
            raise ConfigError("slopes must be non-negative")
        Q, _, _, _, ok, iters = _ba(p, dm, beta)
        points.append(_point(p_s, d, support, Q, None, beta, ok, iters))
    return points


def solve_distortion_at_rate(p_s, d, rate):
    """D(rate) and its achiever, via bisection on the Blahut-Arimoto slope."""
    p_s, d = _check(p_s, d)
    rate = float(rate)
    if not rate >= 0:
        raise ConfigError(f"rate must be non-negative, got {rate}")
    support = p_s > 0
    p = p_s[support]
    dm = d.matrix[support]

    if rate == 0:
        return _point(p_s, d, support, _zero_rate_rows(p, dm), 0.0, math.inf)

    Q0, r0, ok, iters = _zero_distortion_limit(p, dm)
    if rate >= r0 - RATE_TOL:
        return _point(p_s, d, support, Q0, rate, math.inf, ok, iters)

    lo, hi = 0.0, 1.0
    log_q = None
    steps = 0
    while True:
        Q, log_q_hi, r, _, ok, iters = _ba(p, dm, hi, log_q)
        steps += 1
        if r >= rate or steps > BISECT_MAX_STEPS:
            break
        lo, hi, log_q = hi, 2 * hi, log_q_hi
    if r < rate:
        raise ConvergenceError(f"could not bracket rate {rate} (slope {hi})")

    beta, log_q = hi, log_q_hi
    for _ in range(BISECT_MAX_STEPS):
        if abs(r - rate) < RATE_TOL:
            return _point(p_s, d, support, Q, rate, beta, ok, iters)
        beta = math.sqrt(lo * hi) if lo > 0 else hi / 2
        Q, log_q, r, _, ok, iters = _ba(p, dm, beta, log_q)
        if r < rate:
            lo = beta
        else:
            hi = beta
    raise ConvergenceError(f"bisection did not reach rate {rate} within {BISECT_MAX_STEPS} steps")


def build_rd_target(p_s, d, subset_rate, backoff):
    """Target joint P_S x P_{T|S} solving D(subset_rate - backoff)."""
    if not backoff > 0:
        raise ConfigError("backoff must be positive")
    effective = float(subset_rate) - float(backoff)
    if not effective > 0:
        raise ConfigError(f"subset_rate - backoff must be positive, got {effective}")
    p_s, d = _check(p_s, d)
    point = solve_distortion_at_rate(p_s, d, effective)
    joint = as_joint(p_s[:, None] * point.achiever)
    return RdTarget(float(subset_rate), float(backoff), joint, point)
