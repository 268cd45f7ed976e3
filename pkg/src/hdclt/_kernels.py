"""Counter-based sampling kernels.

Every uniform variate is a pure hash of (chunk base, draw counter), so a
replication array is a deterministic function of (seed, n, reps) alone:
thread count and scheduling cannot change a single bit of the output.  Chunks
of 2^16 replications each get an independently mixed base; within a chunk the
draw for (replication r, summand j) uses counter r*n + j.

The mixer is the splitmix64 finalizer over a Weyl sequence, which passes
BigCrush as a stream; the 53-bit mantissa mapping returns midpoints of
dyadic cells so uniforms are strictly inside (0, 1).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange, uint64

_GOLD = 0x9E3779B97F4A7C15          # per-draw Weyl stride
_CHUNK_STRIDE = 0xD1B54A32D192ED03  # per-chunk stride (distinct odd constant)
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

CHUNK_REPS = 1 << 16

_U_GOLD = uint64(_GOLD)
_U_M1 = uint64(_M1)
_U_M2 = uint64(_M2)

_INV_2_53 = 2.0 ** -53
_SQRT1_2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327
_TWO_E = 5.43656365691809  # 2e


def _py_mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return (z ^ (z >> 31)) & _MASK


def chunk_base(seed: int, chunk_index: int) -> int:
    """Deterministic 64-bit base for one replication chunk."""
    s = _py_mix(seed & _MASK)
    return _py_mix((s + ((chunk_index + 1) * _CHUNK_STRIDE)) & _MASK)


def uniform_stream(base: int, start: int, count: int) -> np.ndarray:
    """numpy mirror of the kernel's uniform generator (validation tool)."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    z = np.uint64(base) + (idx + np.uint64(1)) * np.uint64(_GOLD)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


@njit(cache=True, inline="always")
def _unit(base, i):
    z = base + (i + uint64(1)) * _U_GOLD
    z = (z ^ (z >> uint64(30))) * _U_M1
    z = (z ^ (z >> uint64(27))) * _U_M2
    z = z ^ (z >> uint64(31))
    return (np.float64(z >> uint64(11)) + 0.5) * _INV_2_53


@njit(cache=True, inline="always")
def _norm_quantile(u):
    # Acklam's rational approximation, then two Newton corrections on erfc;
    # relative error after polish is at the double-precision floor.
    if u < 0.02425:
        q = math.sqrt(-2.0 * math.log(u))
        x = (((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q
                - 2.400758277161838e00) * q - 2.549732539343734e00) * q
              + 4.374664141464968e00) * q + 2.938163982698783e00) / (
            (((7.784695709041462e-03 * q + 3.224671290700398e-01) * q
              + 2.445134137142996e00) * q + 3.754408661907416e00) * q + 1.0)
    elif u > 0.97575:
        q = math.sqrt(-2.0 * math.log(1.0 - u))
        x = -(((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q
                 - 2.400758277161838e00) * q - 2.549732539343734e00) * q
               + 4.374664141464968e00) * q + 2.938163982698783e00) / (
            (((7.784695709041462e-03 * q + 3.224671290700398e-01) * q
              + 2.445134137142996e00) * q + 3.754408661907416e00) * q + 1.0)
    else:
        q = u - 0.5
        r = q * q
        x = (((((-3.969683028665376e01 * r + 2.209460984245205e02) * r
                - 2.759285104469687e02) * r + 1.383577518672690e02) * r
              - 3.066479806614716e01) * r + 2.506628277459239e00) * q / (
            ((((-5.447609879822406e01 * r + 1.615858368580409e02) * r
               - 1.556989798598866e02) * r + 6.680131188771972e01) * r
             - 1.328068155288572e01) * r + 1.0)
    for _ in range(2):
        f = 0.5 * math.erfc(-x * _SQRT1_2)
        pdf = math.exp(-0.5 * x * x) * _INV_SQRT_2PI
        x -= (f - u) / pdf
    return x


@njit(cache=True, inline="always")
def _tail_radius(fam, p0, p1, x0, t):
    # inverse of the tail magnitude T at level t (families 1..6)
    if fam == 1:  # c exp(-x^gamma)
        return math.log(p1 / t) ** (1.0 / p0)
    if fam == 2:  # c exp(-(log x)^gamma2)
        return math.exp(math.log(p1 / t) ** (1.0 / p0))
    if fam == 3:  # c x^-m
        if p0 == 4.0:
            return math.sqrt(math.sqrt(p1 / t))
        return (p1 / t) ** (1.0 / p0)
    # log-space equation 2L + w(L) = rhs, strictly increasing in L
    q = -math.log(t)
    if fam == 4:      # w = L^beta1
        rhs = q
        lo = 1.0
    elif fam == 5:    # w = beta2 log L
        rhs = q
        lo = 1.0
    else:             # example: w = kappa (log L)^eta, rhs shifted by log C
        rhs = q + _TWO_E + p1
        lo = 2.718281828459045
    hi = rhs if rhs > lo + 1.0 else lo + 1.0
    for _ in range(200):
        if fam == 4:
            v = 2.0 * hi + hi ** p0
        elif fam == 5:
            v = 2.0 * hi + p0 * math.log(hi)
        else:
            v = 2.0 * hi + p1 * math.log(hi) ** p0
        if v >= rhs:
            break
        hi *= 2.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if fam == 4:
            v = 2.0 * mid + mid ** p0
        elif fam == 5:
            v = 2.0 * mid + p0 * math.log(mid)
        else:
            v = 2.0 * mid + p1 * math.log(mid) ** p0
        if v < rhs:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


@njit(cache=True, inline="always")
def _draw_std(fam, two_sided, p0, p1, x0, b, mfill, loc, scale, u):
    if fam == 0:
        return _norm_quantile(u)
    if two_sided:
        if u >= 0.5:
            s = 1.0
            w = 2.0 * u - 1.0
        else:
            s = -1.0
            w = 1.0 - 2.0 * u
        if w < mfill:
            r = b * w / mfill
        else:
            r = _tail_radius(fam, p0, p1, x0, 1.0 - w)
        return s * r
    if u < mfill:
        r = x0 * u / mfill
    else:
        r = _tail_radius(fam, p0, p1, x0, 1.0 - u)
    return (r - loc) / scale


@njit(cache=True, parallel=True)
def chunk_sums(base, n, nreps, fam, two_sided, p0, p1, x0, b, mfill, loc, scale, out):
    for r in prange(nreps):
        ctr = uint64(r) * uint64(n)
        acc = 0.0
        for j in range(n):
            u = _unit(base, ctr + uint64(j))
            acc += _draw_std(fam, two_sided, p0, p1, x0, b, mfill, loc, scale, u)
        out[r] = acc


@njit(cache=True, parallel=True)
def chunk_draws(base, count, fam, two_sided, p0, p1, x0, b, mfill, loc, scale, out):
    for i in prange(count):
        u = _unit(base, uint64(i))
        out[i] = _draw_std(fam, two_sided, p0, p1, x0, b, mfill, loc, scale, u)
