"""Closed-form bound evaluators: zone-wise envelopes on |F_n - Phi|, the
rectangle product bound, the three-term partition majorant, the zone-ratio
threshold, and the analytic max-probe that certifies CLT failure on the
necessity side.

Everything that multiplies probabilities across p coordinates is computed in
log space; p only ever enters through log p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SpecificationError
from .gaussian import (
    log_std_normal_cdf,
    quantile_from_log_cdf,
    std_normal_pdf,
)
from .scaling import solve_lambda_for_spec, solve_log_bn
from .tails import (
    StandardizedDist,
    TailSpec,
    example_truncated_moment_from_loglog,
    example_v_from_loglog,
    g_function,
    make_distribution,
)

_PHI1 = math.exp(-0.5) / math.sqrt(2.0 * math.pi)   # standard normal density at 1
_SQRT5_P1 = math.sqrt(5.0) + 1.0
LOW_ZONE_FACTOR = 1.0 - _PHI1 / _SQRT5_P1            # envelope value left of 1
A2_BASE = 1.0 / LOW_ZONE_FACTOR                      # the constant d with d^{-1} = low factor
A2_CONSTANT = A2_BASE / (math.e * math.log(A2_BASE))  # d (log d)^-1 d^(-1/log d)


@dataclass(frozen=True)
class ZoneBoundProfile:
    class_id: str
    n: int
    epsilon: float
    zone_edge: float
    b_coeff: float
    tail_bound: float
    log_tail_bound: float


@dataclass(frozen=True)
class EnvelopePair:
    l_env: Callable
    d_env: Callable


@dataclass(frozen=True)
class PartitionBound:
    a1: float
    a2: float
    a3: float
    total: float


@dataclass(frozen=True)
class NecessityProbe:
    class_id: str
    log_p: float
    threshold_log_p: float
    x_n: float
    log_decay_bound: float


def zone_bound_profile(class_id: str, spec: TailSpec, n: int, epsilon: float = 0.0,
                       b_coeff: float = 0.0,
                       dist: Optional[StandardizedDist] = None) -> ZoneBoundProfile:
    """Zone edge and large-zone tail bound for one class, with a supplied or
    empirically estimated moderate-zone coefficient."""
    if spec.class_id != class_id:
        raise SpecificationError(
            f"profile class {class_id!r} does not match spec class {spec.class_id!r}"
        )
    if b_coeff < 0.0:
        raise SpecificationError(f"b_coeff must be nonnegative, got {b_coeff}")
    log_n = math.log(n)
    if class_id == "I":
        lam = solve_lambda_for_spec(spec, n).value
        zone_edge = lam
        log_tail = -math.log(lam) - 0.5 * lam * lam
    elif class_id == "II":
        m = spec.m
        if not 0.0 < epsilon < (m - 2.0) / 2.0:
            raise SpecificationError(
                f"class II zone needs 0 < epsilon < (m-2)/2 = {(m - 2.0) / 2.0}, got {epsilon}"
            )
        width2 = (m - 2.0 - 2.0 * epsilon) * log_n
        zone_edge = math.sqrt(width2)
        log_tail = -(m / 2.0 - 1.0 - epsilon) * log_n - 0.5 * math.log(width2)
    elif class_id == "III":
        if not 0.0 < epsilon < 1.0:
            raise SpecificationError(f"class III zone needs epsilon in (0,1), got {epsilon}")
        gval = g_function(spec).from_log(0.5 * log_n)
        zone_edge = math.sqrt(2.0 * (1.0 - epsilon) * gval)
        log_tail = -0.5 * math.log(2.0 * gval) - (1.0 - epsilon) * gval
    elif class_id == "IV":
        if not 0.0 < epsilon < 1.0:
            raise SpecificationError(f"class IV zone needs epsilon in (0,1), got {epsilon}")
        log_b = solve_log_bn(dist if dist is not None else spec, log_n)
        vval = example_v_from_loglog(spec.eta, spec.kappa, math.log(log_b))
        zone_edge = math.sqrt(2.0 * (1.0 - epsilon) * vval)
        log_tail = -0.5 * math.log(2.0 * vval) - (1.0 - epsilon) * vval
    else:
        raise SpecificationError(f"no zone bound for class {class_id!r}")
    return ZoneBoundProfile(class_id, int(n), epsilon, zone_edge, b_coeff,
                            math.exp(log_tail), log_tail)


def envelope_pair(profile: ZoneBoundProfile) -> EnvelopePair:
    """The piecewise envelopes dominating l(x) = max(F_n, Phi) and
    d(x) = |F_n - Phi| under a given zone profile."""
    edge = profile.zone_edge
    b = profile.b_coeff
    tail = profile.tail_bound

    def l_env(x):
        x = np.asarray(x, dtype=float)
        mid = 1.0 - std_normal_pdf(x) / (5.0 * np.maximum(x, 1.0))
        out = np.where(x < 1.0, LOW_ZONE_FACTOR, np.where(x <= edge, mid, 1.0))
        return out if out.ndim else float(out)

    def d_env(x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        moderate = b * np.minimum(0.5, std_normal_pdf(ax) / np.maximum(ax, 1e-300))
        out = np.where(ax <= edge, moderate, tail)
        return out if out.ndim else float(out)

    return EnvelopePair(l_env, d_env)


def partition_bound(profile: ZoneBoundProfile, log_p: float) -> PartitionBound:
    """The closed three-term majorant of the sorted-endpoint product sum.

    a1 bounds the contributions beyond the zone edge, a2 the ones left of 1,
    a3 the in-zone band; returns +inf components when log p overwhelms the
    tail (schedule violation signal), never raises.
    """
    if not math.isfinite(log_p):
        raise DomainError(f"log_p must be finite, got {log_p}")
    b = profile.b_coeff
    edge = profile.zone_edge
    with np.errstate(over="ignore"):
        a1 = float(np.exp(log_p + profile.log_tail_bound))
        a2 = A2_CONSTANT * b
        if b > 0.0:
            log_phi_edge = -0.5 * edge * edge - 0.5 * math.log(2.0 * math.pi)
            a3 = 5.0 * b + float(np.exp(log_p + math.log(b) - math.log(edge) + log_phi_edge))
        else:
            a3 = 0.0
    return PartitionBound(a1, a2, a3, a1 + a2 + a3)


def zone_ratio_threshold(log_p: float) -> float:
    """sqrt(2 log p - log log p), the moderate-deviation probe point."""
    if not (isinstance(log_p, (int, float)) and math.isfinite(log_p)) or log_p <= 1.0:
        raise DomainError(f"zone ratio threshold needs log_p > 1, got {log_p!r}")
    return math.sqrt(2.0 * log_p - math.log(log_p))


def calibrate_max_threshold(log_p: float) -> float:
    """x with Phi(x)^p = e^{-1}, solved through log Phi(x) = -exp(-log_p);
    stable for log_p from 0 up to values where p itself is far beyond any
    integer type."""
    if not math.isfinite(log_p) or log_p < 0.0:
        raise DomainError(f"max-threshold calibration needs log_p >= 0, got {log_p}")
    q = math.exp(-log_p)
    if q > 1e-8:
        log_tail = math.log(-math.expm1(-q))
    else:
        log_tail = -log_p + math.log1p(-0.5 * q)
    # Phi(-x) = tail  =>  x = -quantile(log tail)
    return -quantile_from_log_cdf(log_tail)


_NECESSITY_COEFF = {"II": 0.5, "III": 0.25, "IV": 0.25}


def necessity_threshold(d: StandardizedDist, n=None, *, log_n: Optional[float] = None) -> float:
    """The boundary log p of the necessity side for this law's class."""
    spec = d.spec
    log_n = math.log(n) if log_n is None else float(log_n)
    if spec.class_id == "II":
        return (spec.m / 2.0 - 1.0) * log_n
    if spec.class_id == "III":
        return g_function(spec).from_log(0.5 * log_n)
    if spec.class_id == "IV":
        log_b = solve_log_bn(d, log_n)
        return example_v_from_loglog(spec.eta, spec.kappa, math.log(log_b))
    raise SpecificationError(
        f"the analytic max probe applies to classes II-IV, got class {spec.class_id}"
    )


def necessity_probe(d, n=None, log_p: float = None, *,
                    log_n: Optional[float] = None) -> NecessityProbe:
    """Analytic certificate that P(max of p coordinates <= x_n) -> 0.

    x_n calibrates the Gaussian reference to exactly e^{-1}; the decay bound
    is p log(1 - c n (1-F)(s x_n)) with the class coefficient c and scaling s
    (sqrt(n), or the infinite-variance normalizer).  A value diving to -inf
    certifies failure of the Gaussian approximation over max-type sets.

    The sample size may be passed as an arbitrarily large integer ``n`` or
    directly as ``log_n`` (the slowly-decaying classes certify only at sizes
    whose digit count itself overflows memory); all tail evaluations take the
    log-argument route.
    """
    if isinstance(d, TailSpec):
        d = make_distribution(d)
    spec = d.spec
    log_n = math.log(n) if log_n is None else float(log_n)
    thr = necessity_threshold(d, log_n=log_n)
    if not log_p > thr:
        raise SpecificationError(
            f"log_p={log_p:.6g} is on the sufficiency side (threshold {thr:.6g}); "
            "the max probe is meaningful only beyond it"
        )
    x_n = calibrate_max_threshold(log_p)
    if x_n <= 0.0:
        raise SpecificationError("necessity probe needs p >= 2 so that x_n > 0")
    if d.loc != 0.0 or d.scale != 1.0:
        raise SpecificationError(
            "the max probe needs the symmetric construction (or the raw example "
            "family); affine-standardized one-sided laws shift the tail argument"
        )
    c = _NECESSITY_COEFF[spec.class_id]
    lx = math.log(x_n)
    half = math.log(2.0) if d.kind == "symmetric" else 0.0
    # log(c n (1-F)(s x_n)) with the n-dependence cancelled symbolically:
    # the naive sum log n + log tail loses every significant digit once
    # log n ~ 1e15 (the slow classes certify only out there).
    if spec.class_id == "II":
        log_arg = 0.5 * log_n + lx
        inner_log = (math.log(c) - half + math.log(spec.tail_scale)
                     + (1.0 - 0.5 * spec.m) * log_n - spec.m * lx)
    elif spec.class_id == "III":
        big_l = 0.5 * log_n + lx
        gterm = big_l ** spec.beta1 if spec.form == "log_power" \
            else spec.beta2 * math.log(big_l)
        log_arg = big_l
        inner_log = math.log(c) - half - 2.0 * lx - gterm
    else:  # IV: log n = 2 log B - log D(B) exactly, by the normalizer equation
        log_b = solve_log_bn(d, log_n)
        d_at_b = example_truncated_moment_from_loglog(
            spec.eta, spec.kappa, math.log(log_b))
        log_arg = log_b + lx
        inner_log = (math.log(c) - half + (2.0 * math.e + spec.kappa)
                     - math.log(d_at_b) - 2.0 * lx
                     - spec.kappa * math.log(log_b + lx) ** spec.eta)
    if log_arg <= math.log(d.x0 + 1.0):
        raise SpecificationError(
            "threshold falls below the parametric tail cutoff; n too small for the probe"
        )
    log_decay = _power_log1m(inner_log, log_p)
    return NecessityProbe(spec.class_id, log_p, thr, x_n, log_decay)


def _power_log1m(inner_log: float, log_p: float) -> float:
    """p * log(1 - exp(inner_log)) without materializing p."""
    if inner_log >= 0.0:
        return -math.inf
    if inner_log < -30.0:
        log_u = inner_log  # -log1p(-x) = x to relative 1e-13 here
    else:
        log_u = math.log(-math.log1p(-math.exp(inner_log)))
    z = log_p + log_u
    if z > 709.0:
        return -math.inf
    return -math.exp(z)


def _sum_products_log(lvals: np.ndarray, dvals: np.ndarray) -> float:
    """sum_k d_k prod_{j != k} l_j with the products accumulated in log space."""
    lvals = np.asarray(lvals, dtype=float)
    dvals = np.asarray(dvals, dtype=float)
    zero = lvals <= 0.0
    nzero = int(zero.sum())
    logl = np.zeros_like(lvals)
    np.log(lvals, out=logl, where=~zero)
    total = float(logl.sum())
    if nzero == 0:
        prods = np.exp(total - logl)
    elif nzero == 1:
        prods = np.zeros_like(lvals)
        prods[np.argmax(zero)] = math.exp(total)
    else:
        return 0.0
    return float(np.dot(prods, dvals))


def rectangle_bound(a, b, marginal_cdf: Callable, gauss_cdf: Callable,
                    reflected_cdf: Optional[Callable] = None) -> float:
    """Product-form upper bound on the rectangle discrepancy
    |P(T in prod [a_j, b_j]) - P(Z in prod [a_j, b_j])| from the 1-D marginal.

    ``marginal_cdf`` is the (empirical or exact) cdf of the normalized sum;
    ``reflected_cdf`` is the cdf of the negated sum (defaults to
    x -> 1 - marginal_cdf(-x), exact for continuous laws).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("endpoint vectors must be 1-D of equal length")
    if np.any(a > b):
        raise DomainError("rectangle needs a_j <= b_j in every coordinate")
    if reflected_cdf is None:
        def reflected_cdf(x, _f=marginal_cdf):
            return 1.0 - np.asarray(_f(-np.asarray(x, dtype=float)), dtype=float)

    def _eval(f, x):
        where_inf = np.isinf(x)
        out = np.empty_like(x)
        out[x == np.inf] = 1.0
        out[x == -np.inf] = 0.0
        fin = ~where_inf
        if fin.any():
            out[fin] = np.asarray(f(x[fin]), dtype=float)
        return out

    fb = _eval(marginal_cdf, b)
    gb = _eval(gauss_cdf, b)
    l2 = np.maximum(fb, gb)
    d2 = np.abs(fb - gb)
    na = -a
    fa = _eval(reflected_cdf, na)
    ga = _eval(gauss_cdf, na)
    l1 = np.maximum(fa, ga)
    d1 = np.abs(fa - ga)
    return _sum_products_log(l1, d1) + _sum_products_log(l2, d2)
