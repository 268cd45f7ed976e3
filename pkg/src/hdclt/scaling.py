"""Solvers for the growth-rate scaling sequences and the dimension schedules.

Two sequences drive everything:

* the moderate-deviation scale solving ``h(sqrt(n) L) = L^2`` for a class I
  exponent h (unique positive root; closed form ``n^{gamma/(2(2-gamma))}``
  when h is a pure power),
* the infinite-variance normalizer solving the fixed point
  ``B = sqrt(n D(B))`` with D the truncated second moment; our laws are
  absolutely continuous, so the exact-equation form of the normalizer is
  always admissible.

The schedule map turns (theorem side, spec, n, epsilon) into log p.  p is
never materialized: the admissible dimensions reach e^(n^(1/3)) and beyond.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from scipy import optimize

from .errors import SolverError, SpecificationError
from .tails import (
    StandardizedDist,
    TailSpec,
    example_truncated_moment_from_loglog,
    example_v_from_loglog,
    g_function,
    h_function,
    make_distribution,
    truncated_second_moment,
)

THEOREMS = (
    "T1_suff", "T1_nec", "T2_suff", "T2_nec",
    "T3_suff", "T3_nec", "T4_suff", "T4_nec",
)


@dataclass(frozen=True)
class ScalingSolution:
    n: int
    kind: str                 # "Lambda" | "Bn"
    value: float
    residual: float
    iterations: int
    closed_form: Optional[float] = None
    log_value: Optional[float] = None


@dataclass(frozen=True)
class DimensionSchedule:
    theorem: str
    epsilon: float
    log_p: float
    n: int


def solve_lambda(h, n: int) -> ScalingSolution:
    """Unique positive root of h(sqrt(n) L) = L^2 by bracketing + Brent.

    ``h`` is any increasing continuous exponent handle; when it carries a
    closed form (pure power) the root must agree with it to 1e-10 relative.
    """
    if n < 2:
        raise SpecificationError(f"lambda scale needs n >= 2, got {n}")
    sqrt_n = math.sqrt(float(n))

    def f(lam: float) -> float:
        return h(sqrt_n * lam) - lam * lam

    # Both admissible exponent forms satisfy f(1) > 0 once n is past a small
    # threshold, and have exactly one crossing beyond it; walk up for the flip.
    lo = 1.0
    f_lo = f(lo)
    evals = 1
    if f_lo < 0.0:
        raise SolverError(
            f"h(sqrt(n)) < 1 at n={n}: sample size too small for this exponent"
        )
    hi = 2.0
    for _ in range(600):
        val = f(hi)
        evals += 1
        if val < 0.0:
            break
        lo = hi
        hi *= 2.0
        if hi > 1e154:
            raise SolverError(
                f"no sign change up to lambda={hi:.3e} at n={n}: "
                f"bracket trace f(1)={f_lo:.3e}, f({lo:.3e})={f(lo):.3e}"
            )
    root = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4.0 * math.ulp(1.0), maxiter=200)
    resid = abs(h(sqrt_n * root) - root * root) / (root * root)
    if resid > 1e-10:
        raise SolverError(f"lambda residual {resid:.3e} exceeds 1e-10 at n={n}")
    closed = None
    cf = getattr(h, "lambda_closed_form", None)
    if cf is not None:
        closed = cf(n)
        if closed is not None and abs(root - closed) > 1e-10 * closed:
            raise SolverError(
                f"lambda root {root!r} disagrees with closed form {closed!r} at n={n}"
            )
    return ScalingSolution(n, "Lambda", float(root), float(resid), evals, closed,
                           math.log(root))


def solve_lambda_for_spec(spec: TailSpec, n: int) -> ScalingSolution:
    return solve_lambda(h_function(spec), n)


def solve_bn(d, n: int) -> ScalingSolution:
    """Fixed point of B = sqrt(n D(B)) by monotone iteration, bisection fallback.

    Accepts a StandardizedDist or a class IV TailSpec (raw example family).
    Residual contract: |n D(B) / B^2 - 1| <= 1e-8.
    """
    if n < 2:
        raise SpecificationError(f"normalizer needs n >= 2, got {n}")
    if isinstance(d, TailSpec) and d.class_id != "IV":
        d = make_distribution(d)

    def dfun(b: float) -> float:
        return truncated_second_moment(d, b)

    support_lo = _d_support_floor(d)
    b = max(math.sqrt(float(n)), support_lo * 1.0001)
    iters = 0
    for _ in range(400):
        iters += 1
        dv = dfun(b)
        if dv <= 0.0:
            b = b * 2.0
            continue
        nxt = max(math.sqrt(float(n) * dv), support_lo * 1.0001)
        if abs(nxt - b) <= 1e-13 * b:
            b = nxt
            break
        b = nxt
    resid = abs(float(n) * dfun(b) / (b * b) - 1.0)
    if resid > 1e-8:
        # bisection fallback on log(n D(B) / B^2), decreasing in B past the root
        def g(bb: float) -> float:
            return math.log(float(n) * dfun(bb)) - 2.0 * math.log(bb)

        lo, hi = b / 4.0, b * 4.0
        for _ in range(200):
            if g(lo) > 0.0:
                break
            lo /= 2.0
        for _ in range(200):
            if g(hi) < 0.0:
                break
            hi *= 2.0
        b = optimize.brentq(g, lo, hi, rtol=4.0 * math.ulp(1.0), maxiter=200)
        iters += 200
        resid = abs(float(n) * dfun(b) / (b * b) - 1.0)
        if resid > 1e-8:
            raise SolverError(f"B_n residual {resid:.3e} exceeds 1e-8 at n={n}")
    return ScalingSolution(int(n), "Bn", float(b), float(resid), iters, None, math.log(b))


def _d_support_floor(d) -> float:
    if isinstance(d, TailSpec):
        return math.exp(math.e)
    if d.spec.class_id == "IV":
        return d.x0
    return 0.0


def solve_log_bn(spec_or_dist, log_n: float, tol: float = 1e-10) -> float:
    """log B_n for the example family with n given in log form (supports
    astronomically large n, everything stays in log space)."""
    spec = spec_or_dist if isinstance(spec_or_dist, TailSpec) else spec_or_dist.spec
    if spec.class_id != "IV":
        raise SpecificationError("log-space normalizer is for the example family")
    eta, kappa = spec.eta, spec.kappa
    log_b = 0.5 * log_n + 1.0
    for _ in range(500):
        loglog_b = math.log(log_b)
        dv = example_truncated_moment_from_loglog(eta, kappa, max(loglog_b, 1.0 + 1e-12))
        if dv <= 0.0:
            log_b += 1.0
            continue
        nxt = 0.5 * (log_n + math.log(dv))
        if abs(nxt - log_b) <= tol * max(1.0, abs(log_b)):
            return nxt
        log_b = nxt
    raise SolverError(f"log-space B_n iteration did not converge at log n = {log_n}")


def schedule(theorem: str, spec: TailSpec, n: int, epsilon: float = 0.0,
             dist: Optional[StandardizedDist] = None) -> DimensionSchedule:
    """log p prescribed by a theorem side for this spec at sample size n."""
    if theorem not in THEOREMS:
        raise SpecificationError(f"unknown theorem side {theorem!r}; use one of {THEOREMS}")
    cls = theorem[1]
    expected = {"1": "I", "2": "II", "3": "III", "4": "IV"}[cls]
    if spec.class_id != expected:
        raise SpecificationError(
            f"{theorem} applies to class {expected} specs, got class {spec.class_id}"
        )
    log_n = math.log(n)
    if cls == "1":
        lam2 = solve_lambda_for_spec(spec, n).value ** 2
        log_p = lam2 / 2.0 if theorem.endswith("suff") else math.sqrt(2.0) * lam2
        return DimensionSchedule(theorem, epsilon, log_p, int(n))
    if cls == "2":
        half_range = spec.m / 2.0 - 1.0
        if theorem.endswith("suff"):
            if not 0.0 < epsilon < half_range:
                raise SpecificationError(
                    f"T2 sufficiency needs 0 < epsilon < m/2 - 1 = {half_range}, got {epsilon}"
                )
            return DimensionSchedule(theorem, epsilon, (half_range - epsilon) * log_n, int(n))
        if epsilon <= 0.0:
            raise SpecificationError(f"T2 necessity needs epsilon > 0, got {epsilon}")
        return DimensionSchedule(theorem, epsilon, (half_range + epsilon) * log_n, int(n))
    if not 0.0 < epsilon < 1.0:
        raise SpecificationError(
            f"{theorem} needs epsilon strictly inside (0, 1), got {epsilon}"
        )
    if cls == "3":
        g = g_function(spec)
        base = g.from_log(0.5 * log_n)
    else:
        d = dist if dist is not None else make_distribution(spec)
        log_b = solve_log_bn(d, log_n)
        base = example_v_from_loglog(spec.eta, spec.kappa, math.log(log_b))
    factor = (1.0 - epsilon) if theorem.endswith("suff") else (1.0 + epsilon)
    return DimensionSchedule(theorem, epsilon, factor * base, int(n))
