"""Simulation engine: replications of the normalized coordinate sum, and the
discrepancy / zone-coefficient estimators built on the sorted replication
array.

Determinism contract: every estimator is a pure function of
(spec, n, reps, seed, log p).  Replications are generated in fixed chunks of
2^16 with counter-based per-chunk seeding, so the output is bit-identical for
any thread count.  Because coordinates are iid, the max- and product-set
discrepancies reduce to functionals of the one-dimensional marginal, with all
p-fold products taken in log space.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .bounds import zone_ratio_threshold
from .errors import DomainError, EstimationError, SpecificationError
from .gaussian import log_std_normal_cdf, std_normal_cdf, std_normal_pdf, std_normal_tail
from .scaling import solve_bn
from .tails import StandardizedDist

_MAGIC = b"HDCLT1"
_HEADER = struct.Struct("<6sqqQB")
_NORM_CODES = {"sqrt_n": 0, "B_n": 1}
_NORM_NAMES = {v: k for k, v in _NORM_CODES.items()}

CHUNK_REPS = _kernels.CHUNK_REPS


# ---------------------------------------------------------------------------
# Empirical (and exact-step) distribution functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalCDF:
    """Sorted replication values of the normalized sum."""

    sorted_values: np.ndarray
    reps: int
    n: int
    seed: int
    normalization: str      # "sqrt_n" | "B_n"
    scale: float            # the divisor actually applied to the raw sums

    def cdf(self, t):
        """Right-continuous F_hat(t) = #{values <= t} / reps."""
        idx = np.searchsorted(self.sorted_values, np.asarray(t, dtype=float), side="right")
        out = idx / self.reps
        return float(out) if np.isscalar(t) else out

    def cdf_left(self, t):
        idx = np.searchsorted(self.sorted_values, np.asarray(t, dtype=float), side="left")
        out = idx / self.reps
        return float(out) if np.isscalar(t) else out

    def reflected_cdf(self, t):
        """cdf of the negated sum: P(-S <= t) = #{values >= -t} / reps."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.sorted_values, -t, side="left")
        out = (self.reps - idx) / self.reps
        return float(out) if out.ndim == 0 else out

    def candidates(self):
        """(points, F_right, F_left) at the distinct sample values: the full
        set of extremum candidates for sup-type functionals."""
        pts, counts = np.unique(self.sorted_values, return_counts=True)
        cum = np.cumsum(counts)
        f_right = cum / self.reps
        f_left = (cum - counts) / self.reps
        return pts, f_right, f_left

    def save(self, path) -> None:
        header = _HEADER.pack(_MAGIC, self.n, self.reps, self.seed % (1 << 64),
                              _NORM_CODES[self.normalization])
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(struct.pack("<d", self.scale))
            fh.write(self.sorted_values.astype("<f8", copy=False).tobytes())

    @classmethod
    def load(cls, path) -> "EmpiricalCDF":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            magic, n, reps, seed, norm = _HEADER.unpack(head)
            if magic != _MAGIC:
                raise DomainError(f"not a replication cache file: {path}")
            (scale,) = struct.unpack("<d", fh.read(8))
            values = np.frombuffer(fh.read(8 * reps), dtype="<f8").copy()
        if len(values) != reps or np.any(np.diff(values) < 0.0):
            raise DomainError(f"corrupt replication cache: {path}")
        return cls(values, reps, n, seed, _NORM_NAMES[norm], scale)


@dataclass(frozen=True)
class ExactStepCDF:
    """Exact jump cdf of a discrete law (enumeration oracles plug in here)."""

    points: np.ndarray
    cdf_values: np.ndarray
    reps: Optional[int] = None   # None: exact, zero Monte Carlo error

    def cdf(self, t):
        idx = np.searchsorted(self.points, np.asarray(t, dtype=float), side="right")
        vals = np.concatenate(([0.0], self.cdf_values))
        out = vals[idx]
        return float(out) if np.isscalar(t) else out

    def reflected_cdf(self, t):
        # P(-X <= t) = P(X >= -t) = 1 - F((-t)-), the left limit at -t
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.points, -t, side="left")
        left_vals = np.concatenate(([0.0], self.cdf_values))[idx]
        out = 1.0 - left_vals
        return float(out) if out.ndim == 0 else out

    def candidates(self):
        f_left = np.concatenate(([0.0], self.cdf_values[:-1]))
        return self.points, self.cdf_values, f_left


@dataclass(frozen=True)
class DiscrepancyEstimate:
    set_class: str           # "max" | "dist" | "rect_bound"
    rho_hat: float
    mc_se: float
    log_p: float
    n: Optional[int] = None
    reps: Optional[int] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class BCoeffEstimate:
    value: float
    mc_se: float
    at: float


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def set_workers(workers: int) -> None:
    """Cap the kernel thread count (results are identical for any value)."""
    import numba

    numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))


def simulate_marginal(d: StandardizedDist, n: int, reps: int, seed: int,
                      workers: Optional[int] = None) -> EmpiricalCDF:
    """reps iid replications of the normalized sum of n coordinate draws.

    Classes I-III (and the normal reference) are normalized by sqrt(n); the
    infinite-variance example family by its fixed-point normalizer.
    """
    if reps < 100:
        raise SpecificationError(f"simulation needs reps >= 100, got {reps}")
    if n < 1:
        raise SpecificationError(f"simulation needs n >= 1, got {n}")
    if workers is not None:
        set_workers(workers)
    if d.spec.class_id == "IV":
        scale = solve_bn(d, n).value
        norm = "B_n"
    else:
        scale = math.sqrt(float(n))
        norm = "sqrt_n"
    fam, two_sided, p0, p1, x0, b, mfill, loc, aff_scale = d.kernel_args()
    sums = np.empty(reps, dtype=np.float64)
    nchunks = (reps + CHUNK_REPS - 1) // CHUNK_REPS
    for c in range(nchunks):
        lo = c * CHUNK_REPS
        hi = min(reps, lo + CHUNK_REPS)
        base = _kernels.chunk_base(seed, c)
        _kernels.chunk_sums(np.uint64(base), n, hi - lo, fam, two_sided,
                            p0, p1, x0, b, mfill, loc, aff_scale, sums[lo:hi])
    values = np.sort(sums / scale)
    return EmpiricalCDF(values, reps, int(n), int(seed), norm, float(scale))


def sample(d: StandardizedDist, count: int, seed: int) -> np.ndarray:
    """iid draws from the standardized law by exact inverse transform;
    deterministic given (seed, count), chunked like the replication engine."""
    if count < 1:
        raise SpecificationError(f"sample needs count >= 1, got {count}")
    fam, two_sided, p0, p1, x0, b, mfill, loc, aff_scale = d.kernel_args()
    out = np.empty(count, dtype=np.float64)
    nchunks = (count + CHUNK_REPS - 1) // CHUNK_REPS
    for c in range(nchunks):
        lo = c * CHUNK_REPS
        hi = min(count, lo + CHUNK_REPS)
        base = _kernels.chunk_base(seed, c)
        _kernels.chunk_draws(np.uint64(base), hi - lo, fam, two_sided,
                             p0, p1, x0, b, mfill, loc, aff_scale, out[lo:hi])
    return out


# ---------------------------------------------------------------------------
# log-space p-fold powers
# ---------------------------------------------------------------------------


def _pow_from_log_cdf(log_cdf, log_p: float):
    """exp(p * log_cdf) for log_cdf <= 0, stable for log p up to ~1e3."""
    log_cdf = np.asarray(log_cdf, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        z = log_p + np.log(-log_cdf)
        out = np.exp(-np.exp(z))
    out = np.where(log_cdf == 0.0, 1.0, out)
    return np.where(np.isneginf(log_cdf), 0.0, out)


def _log_of(prob):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(prob, dtype=float))


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def rho_max(f_hat, log_p: float) -> DiscrepancyEstimate:
    """sup over t of |F_hat(t)^p - Phi(t)^p|, the max-set discrepancy.

    The sup over the real line of a difference of p-th powers of a step
    function and a continuous monotone function is attained at a one-sided
    limit of a jump point, so scanning both limits at every distinct sample
    value is exact.
    """
    if log_p < 0.0:
        raise DomainError(f"rho_max needs log_p >= 0, got {log_p}")
    pts, f_right, f_left = f_hat.candidates()
    gauss_pow = _pow_from_log_cdf(log_std_normal_cdf(pts), log_p)
    diff_r = np.abs(_pow_from_log_cdf(_log_of(f_right), log_p) - gauss_pow)
    diff_l = np.abs(_pow_from_log_cdf(_log_of(f_left), log_p) - gauss_pow)
    i_r, i_l = int(np.argmax(diff_r)), int(np.argmax(diff_l))
    if diff_r[i_r] >= diff_l[i_l]:
        rho, f_at = float(diff_r[i_r]), float(f_right[i_r])
    else:
        rho, f_at = float(diff_l[i_l]), float(f_left[i_l])
    reps = getattr(f_hat, "reps", None)
    se = _max_power_se(f_at, log_p, reps)
    return DiscrepancyEstimate("max", rho, se, log_p,
                               getattr(f_hat, "n", None), reps,
                               getattr(f_hat, "seed", None))


def _max_power_se(f_at: float, log_p: float, reps: Optional[int]) -> float:
    """Delta-method se of F^p under a binomial perturbation of F at the argmax."""
    if not reps or f_at <= 0.0 or f_at >= 1.0:
        return 0.0
    se_f = math.sqrt(f_at * (1.0 - f_at) / reps)
    lf = math.log(f_at)
    u = math.exp(log_p + math.log(-lf)) if lf != 0.0 else 0.0  # -p log f
    z = log_p + math.log(se_f) - u - lf
    return math.exp(z) if z < 700.0 else math.inf


def rho_dist(f_hat, log_p: float, grid_size: int = 64) -> DiscrepancyEstimate:
    """Feasible-point maximum of |prod F_hat(a_j) - prod Phi(a_j)| over
    left-infinite rectangles with endpoints on a value grid.

    Exact dynamic programming over (grid point, remaining multiplicity) for
    small integer p; otherwise a two-support-point search (the continuous
    relaxation concentrates on at most two endpoint values), still a certified
    lower bound for the product-set discrepancy.  The grid always contains the
    max-set argmax, so rho_dist >= rho_max by construction.
    """
    if log_p < 0.0:
        raise DomainError(f"rho_dist needs log_p >= 0, got {log_p}")
    if grid_size < 1:
        raise SpecificationError(f"grid_size must be positive, got {grid_size}")
    pts, f_right, _ = f_hat.candidates()
    if len(pts) == 0:
        raise SpecificationError("empty candidate grid")
    take = np.unique(np.linspace(0, len(pts) - 1, min(grid_size, len(pts))).astype(int))
    base_est = rho_max(f_hat, log_p)
    grid_pts = pts[take]
    # splice in the max-set argmax so the single-point optimum is always feasible
    diff = np.abs(_pow_from_log_cdf(_log_of(f_right), log_p)
                  - _pow_from_log_cdf(log_std_normal_cdf(pts), log_p))
    star = pts[int(np.argmax(diff))]
    grid_pts = np.unique(np.concatenate((grid_pts, [star])))
    idx = np.searchsorted(pts, grid_pts)
    fvals = f_right[idx]
    log_f = _log_of(fvals)
    log_g = log_std_normal_cdf(grid_pts)

    p_real = math.exp(log_p)
    p_int = int(round(p_real)) if log_p <= math.log(1e7) else None
    if p_int is not None and p_int <= 12 and abs(p_real - p_int) < 1e-9 * max(p_int, 1):
        rho, alloc = _dist_dp_exact(log_f, log_g, p_int)
    else:
        rho, alloc = _dist_two_point(log_f, log_g, p_real)
    rho = max(rho, base_est.rho_hat)
    reps = getattr(f_hat, "reps", None)
    se = _dist_se(alloc, fvals, log_f, reps)
    return DiscrepancyEstimate("dist", float(rho), se, log_p,
                               getattr(f_hat, "n", None), reps,
                               getattr(f_hat, "seed", None))


def _pareto_prune(states):
    """Keep the states on the Pareto frontier of either sign branch."""
    states = sorted(set(states))
    keep = []
    best_b = math.inf
    for a, b in reversed(states):   # decreasing a: maximize a, minimize b
        if b < best_b:
            keep.append((a, b))
            best_b = b
    best_b2 = -math.inf
    for a, b in states:             # increasing a: minimize a, maximize b
        if b > best_b2:
            keep.append((a, b))
            best_b2 = b
    return list(set(keep))


def _dist_dp_exact(log_f, log_g, p: int):
    """Exact maximization over integer multiplicities on the grid."""
    k = len(log_f)
    dp = [[] for _ in range(p + 1)]
    dp[0] = [((0.0, 0.0), ())]
    for i in range(k):
        lf, lg = float(log_f[i]), float(log_g[i])
        new = [list(cell) for cell in dp]
        for r in range(p + 1):
            if not dp[r]:
                continue
            for j in range(1, p - r + 1):
                a_add = j * lf if lf != -math.inf else -math.inf
                b_add = j * lg
                for (a, b), alloc in dp[r]:
                    new[r + j].append(((a + a_add, b + b_add), alloc + ((i, j),)))
        # prune each multiplicity level to its two-sided Pareto frontier
        for r in range(p + 1):
            if len(new[r]) > 1:
                frontier = _pareto_prune([ab for ab, _ in new[r]])
                fr = set(frontier)
                seen = set()
                pruned = []
                for ab, alloc in new[r]:
                    if ab in fr and ab not in seen:
                        pruned.append((ab, alloc))
                        seen.add(ab)
                new[r] = pruned
        dp = new
    best, best_alloc = 0.0, ()
    for (a, b), alloc in dp[p]:
        val = abs(math.exp(a) - math.exp(b))
        if val > best:
            best, best_alloc = val, alloc
    return best, best_alloc


def _dist_two_point(log_f, log_g, p_real: float):
    k = len(log_f)
    fracs = np.linspace(0.0, 1.0, 33)
    small = np.arange(0.0, min(16.0, p_real) + 1.0)
    ms = np.unique(np.concatenate((np.round(fracs * p_real), small, p_real - small)))
    ms = ms[(ms >= 0.0) & (ms <= p_real)]
    best, best_alloc = 0.0, ()
    with np.errstate(invalid="ignore"):
        for i in range(k):
            a_i = ms * log_f[i]
            b_i = ms * log_g[i]
            rem = p_real - ms
            for j in range(i, k):
                a = a_i + rem * log_f[j]
                b = b_i + rem * log_g[j]
                vals = np.abs(np.exp(a) - np.exp(b))
                vals = np.nan_to_num(vals, nan=0.0)
                t = int(np.argmax(vals))
                if vals[t] > best:
                    best = float(vals[t])
                    best_alloc = ((i, float(ms[t])), (j, float(rem[t])))
    return best, best_alloc


def _dist_se(alloc, fvals, log_f, reps: Optional[int]) -> float:
    if not reps or not alloc:
        return 0.0
    log_prod = sum(m * log_f[i] for i, m in alloc if m > 0)
    if log_prod == -math.inf:
        return 0.0
    var = 0.0
    for i, m in alloc:
        f = float(fvals[i])
        if m <= 0 or f <= 0.0 or f >= 1.0:
            continue
        term = math.exp(math.log(m) + log_prod - math.log(f)) * math.sqrt(
            f * (1.0 - f) / reps
        )
        var += term * term
    return math.sqrt(var)


def estimate_b_coeff(f_hat, zone_edge: float) -> float:
    """Empirical moderate-zone coefficient: sup over sample points in
    [-zone_edge, zone_edge] of |F_hat - Phi| / min(1/2, pdf/|t|)."""
    return b_coeff_estimate(f_hat, zone_edge).value


def b_coeff_estimate(f_hat, zone_edge: float) -> BCoeffEstimate:
    if zone_edge <= 0.0:
        raise DomainError(f"zone edge must be positive, got {zone_edge}")
    pts, f_right, f_left = f_hat.candidates()
    mask = np.abs(pts) <= zone_edge
    if not mask.any():
        raise EstimationError(
            f"no sample points inside [-{zone_edge}, {zone_edge}]: "
            "increase reps or check the normalization"
        )
    t = pts[mask]
    gauss = std_normal_cdf(t)
    den = np.minimum(0.5, std_normal_pdf(t) / np.maximum(np.abs(t), 1e-300))
    ratio_r = np.abs(f_right[mask] - gauss) / den
    ratio_l = np.abs(f_left[mask] - gauss) / den
    i_r, i_l = int(np.argmax(ratio_r)), int(np.argmax(ratio_l))
    if ratio_r[i_r] >= ratio_l[i_l]:
        val, at, f_at, d_at = float(ratio_r[i_r]), float(t[i_r]), float(f_right[mask][i_r]), float(den[i_r])
    else:
        val, at, f_at, d_at = float(ratio_l[i_l]), float(t[i_l]), float(f_left[mask][i_l]), float(den[i_l])
    reps = getattr(f_hat, "reps", None)
    se = math.sqrt(f_at * (1.0 - f_at) / reps) / d_at if reps and 0.0 < f_at < 1.0 else 0.0
    return BCoeffEstimate(val, se, at)


def zone_ratio(f_hat, log_p: float) -> float:
    """Empirical tail mass at the zone-ratio threshold over the Gaussian tail."""
    u = zone_ratio_threshold(log_p)
    tail_prob = float(std_normal_tail(u))
    reps = f_hat.reps
    expected_hits = reps * tail_prob
    if expected_hits < 50.0:
        raise EstimationError(
            f"only {expected_hits:.1f} expected tail hits at threshold {u:.4f}; "
            f"need reps >= {math.ceil(50.0 / tail_prob)}"
        )
    count = reps - int(np.searchsorted(f_hat.sorted_values, u, side="right"))
    return (count / reps) / tail_prob
