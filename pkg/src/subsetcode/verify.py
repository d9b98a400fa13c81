"""Finite-n numerical checks of the typicality and mixture-ensemble bounds.

Each suite returns a JSON-ready report with a ``status`` of ``"pass"`` or
``"fail"``; quantities that only hold for large n are reported without
being asserted.
"""

import math

import numpy as np

from . import streams
from .codebook import (
    estimate_conditional_hit_prob,
    exact_conditional_hit_prob,
    lemma1_exponent,
    lemma1_lower_bound,
    nearest_type,
)
from .errors import ConfigError
from .info_core import (
    as_joint,
    batch_joint_counts,
    compositions,
    conditional_typical_size_bound,
    enumerate_sequences,
    mutual_information,
    typical_counts,
)
from .simplex import PerturbationBox, prop3_kl_bound, sample_perturbation

DEFAULT_PROP1_JOINTS = (
    ((0.4, 0.1), (0.1, 0.4)),
    ((0.3, 0.2), (0.1, 0.4)),
    ((0.2, 0.1, 0.0), (0.05, 0.25, 0.1), (0.1, 0.0, 0.2)),
    ((0.15, 0.1, 0.05), (0.1, 0.15, 0.1), (0.05, 0.1, 0.2)),
)
DEFAULT_PROP3_SIZES = (2, 3, 4, 5)
DEFAULT_PROP3_FRACTIONS = (0.2, 0.5, 0.9)
DEFAULT_LEMMA1_JOINT = ((0.4, 0.1), (0.1, 0.4))


def _sequence_of_type(counts):
    return np.repeat(np.arange(len(counts)), counts)


def prop1_check(joint, n, eps, eps_prime=None, all_sequences=False):
    """Enumerate conditional typical sets of length-n y^n under ``joint``.

    With ``all_sequences`` every y^n is visited; otherwise one sorted
    representative per type (marginal typicality of z^n is permutation
    invariant, so this covers every set up to relabelling).  Returns
    ``(violations, rows)`` where a violation is a member z^n that is not
    eps-typical w.r.t. the Z-marginal, and rows hold (count, bound) pairs.
    """
    joint = as_joint(joint)
    ky, kz = joint.shape
    p_y, p_z = joint.sum(axis=1), joint.sum(axis=0)
    bound = conditional_typical_size_bound(joint, n, eps)
    z_all = np.concatenate(list(enumerate_sequences(kz, n)))
    z_counts = np.stack([(z_all == b).sum(axis=1) for b in range(kz)], axis=1)
    z_typical = typical_counts(z_counts, n, p_z, eps)

    if all_sequences:
        ys = (y for block in enumerate_sequences(ky, n) for y in block)
    else:
        ys = (_sequence_of_type(c) for c in compositions(n, ky))
    violations = 0
    rows = {}
    for y in ys:
        member = typical_counts(batch_joint_counts(y, z_all, ky, kz), n, joint, eps)
        violations += int(np.sum(member & ~z_typical))
        y_type = tuple(int(c) for c in np.bincount(y, minlength=ky))
        if y_type in rows:
            continue
        count = int(member.sum())
        y_typ = None
        if eps_prime is not None:
            y_typ = bool(typical_counts(np.array(y_type), n, p_y, eps_prime))
        rows[y_type] = {
            "n": n,
            "y_type": list(y_type),
            "y_eps_prime_typical": y_typ,
            "count": count,
            "bound": bound,
            "count_meets_bound": count >= bound,
        }
    return violations, list(rows.values())


def verify_prop1(joints=DEFAULT_PROP1_JOINTS, ns=(4, 8, 12), eps=0.3, eps_prime=0.2, all_sequences=False):
    """Membership claim (asserted) and the set-size bound (reported)."""
    report = {"suite": "prop1", "eps": eps, "eps_prime": eps_prime, "cases": []}
    total = 0
    for joint in joints:
        for n in ns:
            v, rows = prop1_check(joint, n, eps, eps_prime, all_sequences)
            total += v
            report["cases"].append({
                "joint": [list(r) for r in joint],
                "n": n,
                "marginal_violations": v,
                "size_rows": rows,
            })
    report["marginal_violations"] = total
    report["status"] = "pass" if total == 0 else "fail"
    return report


def random_sorted_base(k, rng):
    return np.sort(rng.dirichlet(np.ones(k)))


def prop3_check(k, xi, samples, rng, num_bases=10):
    """KL from the box base to ``samples`` perturbations, spread over random bases.

    The uniform base (the worst case for the ceiling) is always included.
    Returns ``(violations, max_kl, bound)``.
    """
    bases = [np.full(k, 1.0 / k)] + [random_sorted_base(k, rng) for _ in range(num_bases - 1)]
    per = -(-samples // num_bases)
    bound = None
    violations = 0
    max_kl = 0.0
    for i, base in enumerate(bases):
        box = PerturbationBox(base, xi)
        bound = prop3_kl_bound(box)
        m = min(per, samples - i * per)
        if m <= 0:
            break
        theta = sample_perturbation(box, rng, size=m)
        kl = np.where(base > 0, base * np.log2(base / theta), 0.0).sum(axis=1)
        violations += int(np.sum(kl > bound))
        max_kl = max(max_kl, float(kl.max()))
    return violations, max_kl, bound


def verify_prop3(sizes=DEFAULT_PROP3_SIZES, fractions=DEFAULT_PROP3_FRACTIONS, samples=100_000, seed=0):
    report = {"suite": "prop3", "samples": samples, "seed": seed, "cases": []}
    total = 0
    for k in sizes:
        for j, frac in enumerate(fractions):
            xi = frac / k**2
            rng = streams.stream(seed, streams.PERTURB, k, j)
            v, max_kl, bound = prop3_check(k, xi, samples, rng)
            total += v
            report["cases"].append({
                "alphabet_size": k,
                "xi": xi,
                "bound_bits": bound,
                "max_kl_bits": max_kl,
                "violations": v,
            })
    report["violations"] = total
    report["status"] = "pass" if total == 0 else "fail"
    return report


def typical_y(joint, n, eps):
    """Length-n y^n of the type nearest n P_Y, checked to be strictly inside eps."""
    p_y = joint.sum(axis=1)
    counts = nearest_type(p_y, n)
    if not typical_counts(counts, n, p_y, eps * (1 - 1e-9)):
        raise ConfigError(f"no y^n of length {n} is strictly eps-typical")
    return _sequence_of_type(counts)


def verify_lemma1(joint=DEFAULT_LEMMA1_JOINT, eps=0.35, ns=(8, 10, 12), trials=1_000_000, seed=0, exact_max_n=12):
    """Monte-Carlo hit probability against the explicit finite-n lower bound.

    Asserts, at every n, that the lower 95% Wilson limit is at least the
    bound, and that the empirical exponent -(1/n) log2(estimate) strictly
    decreases along ``ns``.  The exact probability (enumeration) is reported
    for n <= ``exact_max_n``.
    """
    joint = as_joint(joint)
    mi = mutual_information(joint)
    report = {
        "suite": "lemma1",
        "joint": joint.tolist(),
        "eps": eps,
        "trials": trials,
        "seed": seed,
        "mutual_information": mi,
        "bound_exponent": lemma1_exponent(joint, eps),
        "cases": [],
    }
    exponents = []
    bound_ok = True
    for n in ns:
        y = typical_y(joint, n, eps)
        rng = streams.stream(seed, streams.LEMMA1, n)
        est = estimate_conditional_hit_prob(joint, y, eps, trials, rng)
        bound = lemma1_lower_bound(joint, n, eps)
        exponent = -math.log2(est.estimate) / n if est.hits else math.inf
        exponents.append(exponent)
        ok = est.ci_low >= bound
        bound_ok &= ok
        case = {
            "n": n,
            "y_type": np.bincount(y, minlength=joint.shape[0]).tolist(),
            **est.to_json(),
            "lower_bound": bound,
            "ci_low_meets_bound": ok,
            "empirical_exponent": exponent,
        }
        if n <= exact_max_n:
            exact = exact_conditional_hit_prob(joint, y, eps)
            case["exact"] = exact
            case["exact_exponent"] = -math.log2(exact) / n if exact > 0 else math.inf
        report["cases"].append(case)
    trend_ok = all(b < a for a, b in zip(exponents, exponents[1:]))
    report["bound_ok"] = bool(bound_ok)
    report["exponent_strictly_decreasing"] = bool(trend_ok)
    report["status"] = "pass" if bound_ok and trend_ok else "fail"
    return report
