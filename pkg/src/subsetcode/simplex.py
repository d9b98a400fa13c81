"""Geometry of the probability simplex.

Uniform (flat Dirichlet) sampling, the rate and mass grids used to cover
the simplex with finitely many cells, the quantised simplex built on the
mass grid, and the box-shaped perturbation set whose members all sit within
a fixed KL divergence of its base point.

Lebesgue measure on the simplex is taken in the chart given by the first
k - 1 coordinates, so the simplex has volume 1/(k-1)! and an axis-aligned box
of side xi in that chart has volume xi^(k-1).
"""

from dataclasses import dataclass, field
from itertools import product
import math

import numpy as np

from .errors import ConfigError, GuardError
from .info_core import as_pmf

QUANTIZED_GUARD = 10**6
_KEY_DECIMALS = 12


def sample_uniform_simplex(k, rng, size=None):
    """Draw from the uniform distribution on the k-symbol simplex.

    Normalised i.i.d. unit exponentials.  ``size=None`` returns one pmf,
    otherwise an array of shape (size, k).
    """
    if k < 1:
        raise ConfigError("alphabet size must be >= 1")
    shape = (k,) if size is None else (size, k)
    g = rng.standard_exponential(shape)
    return g / g.sum(axis=-1, keepdims=True)


def simplex_measure_constant(k):
    """Volume of the k-symbol simplex in the first-(k-1)-coordinates chart."""
    if k < 2:
        raise ConfigError("simplex measure needs k >= 2")
    return 1.0 / math.factorial(k - 1)


@dataclass(frozen=True)
class RateGrid:
    full_rate: float
    resolution: float
    points: tuple

    def to_json(self):
        return {"full_rate": self.full_rate, "resolution": self.resolution, "points": list(self.points)}


def build_rate_grid(R, delta):
    """Rates j*delta, j = 1..floor(R/delta), restricted to [0, R)."""
    R, delta = float(R), float(delta)
    if not 0 < delta < R:
        raise ConfigError(f"need 0 < delta < R, got delta={delta}, R={R}")
    pts = [j * delta for j in range(1, math.floor(R / delta) + 1)]
    pts = tuple(r for r in pts if abs(r - R) > 1e-12 and r < R)
    return RateGrid(R, delta, pts)


@dataclass(frozen=True)
class MassGrid:
    resolution: float
    p_min: float
    alphabet_size: int
    points: np.ndarray = field(repr=False)

    @property
    def ratio(self):
        return 1.0 + self.resolution / self.alphabet_size

    def to_json(self):
        return {
            "resolution": self.resolution,
            "p_min": self.p_min,
            "alphabet_size": self.alphabet_size,
            "points": self.points.tolist(),
        }


def build_mass_grid(delta, p_min, s):
    """Geometric grid p_min * (1 + delta/s)^k up to the largest power <= 1."""
    delta, p_min, s = float(delta), float(p_min), int(s)
    if not 0 < delta < 1:
        raise ConfigError("mass-grid resolution must lie in (0, 1)")
    if not 0 < p_min < 1:
        raise ConfigError("p_min must lie in (0, 1)")
    if s < 1:
        raise ConfigError("alphabet size must be >= 1")
    r = 1.0 + delta / s
    top = math.floor(-math.log(p_min) / math.log(r) + 1e-12)
    while top > 0 and p_min * r**top > 1.0:
        top -= 1
    pts = p_min * r ** np.arange(top + 1)
    pts.setflags(write=False)
    return MassGrid(delta, p_min, s, pts)


def _key(p):
    return tuple(np.round(p, _KEY_DECIMALS) + 0.0)


@dataclass(frozen=True)
class QuantizedSimplex:
    grid: MassGrid
    pmfs: np.ndarray = field(repr=False)

    def __len__(self):
        return self.pmfs.shape[0]

    def index_of(self, p, atol=1e-12):
        """Indices of members equal to ``p`` within ``atol`` (max-abs)."""
        hit = np.all(np.abs(self.pmfs - np.asarray(p)) <= atol, axis=1)
        return np.flatnonzero(hit)


def enumerate_quantized_simplex(grid):
    """Every pmf with all but one coordinate on the grid.

    The remaining coordinate closes the sum and must be positive.  Exact
    duplicates (several coordinates on the grid) are kept once.
    """
    s = grid.alphabet_size
    g = grid.points
    if s == 1:
        return QuantizedSimplex(grid, np.ones((1, 1)))
    if g.size ** (s - 1) > QUANTIZED_GUARD:
        raise GuardError(f"{g.size}^{s - 1} grid combinations exceed {QUANTIZED_GUARD}")
    combos = np.array(list(product(g, repeat=s - 1)))
    closing = 1.0 - combos.sum(axis=1)
    keep = closing > 0
    combos, closing = combos[keep], closing[keep]
    seen = {}
    for free in range(s):
        full = np.insert(combos, free, closing, axis=1)
        for row in full:
            seen.setdefault(_key(row), row)
    pmfs = np.array([seen[k] for k in sorted(seen)])
    pmfs.setflags(write=False)
    return QuantizedSimplex(grid, pmfs)


def is_low_mass(p, grid):
    return float(np.min(p)) <= (1.0 - grid.resolution / grid.alphabet_size) * grid.p_min


def snap_to_grid(x, grid):
    """Nearest grid point in ratio terms; exact geometric midpoints snap down."""
    g = grid.points
    r = grid.ratio
    if x <= g[0]:
        return g[0]
    if x >= g[-1]:
        return g[-1]
    lo = int(math.floor(math.log(x / g[0]) / math.log(r)))
    lo = min(max(lo, 0), g.size - 1)
    # guard against log round-off placing x on the wrong side of g[lo]
    while lo > 0 and g[lo] > x:
        lo -= 1
    while lo + 1 < g.size and g[lo + 1] <= x:
        lo += 1
    if lo + 1 < g.size and x * x > g[lo] * g[lo + 1]:
        return g[lo + 1]
    return g[lo]


def quantize_pmf(p, grid):
    """Representative of the quantisation cell containing ``p``.

    Returns ``None`` for low-mass pmfs (some entry at or below
    (1 - delta/|S|) p_min).  Otherwise every entry but the greatest is
    snapped to the mass grid and the greatest entry (highest index on ties)
    closes the sum.
    """
    p = as_pmf(p, grid.alphabet_size)
    if is_low_mass(p, grid):
        return None
    free = int(p.size - 1 - np.argmax(p[::-1]))
    out = np.array([snap_to_grid(x, grid) for x in p])
    out[free] = 0.0
    out[free] = 1.0 - out.sum()
    return out


@dataclass(frozen=True)
class PerturbationBox:
    base: np.ndarray
    xi: float

    def __post_init__(self):
        base = as_pmf(self.base).copy()
        k = base.size
        if k < 2:
            raise ConfigError("perturbation box needs an alphabet of size >= 2")
        if np.any(np.diff(base) < 0):
            raise ConfigError("perturbation base must be sorted ascending")
        if not 0 < self.xi < 1.0 / k**2:
            raise ConfigError(f"xi must lie in (0, 1/{k}^2)")
        base.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "xi", float(self.xi))

    @property
    def size(self):
        return self.base.size


def prop3_kl_bound(box):
    """log2(1 / (1 - xi |Z|^2)): KL ceiling for every member of the box."""
    return -math.log2(1.0 - box.xi * box.size**2)


def xi_for_kl(eps, k):
    """The xi at which the box KL ceiling equals ``eps`` bits."""
    return (1.0 - 2.0**-eps) / k**2


def sample_perturbation(box, rng, size=None):
    """Uniform draw from base + U, U = {u_i in [0, xi), u_last = -sum u_i}."""
    k = box.size
    shape = (k - 1,) if size is None else (size, k - 1)
    u = rng.uniform(0.0, box.xi, shape)
    last = -u.sum(axis=-1, keepdims=True)
    return box.base + np.concatenate([u, last], axis=-1)
