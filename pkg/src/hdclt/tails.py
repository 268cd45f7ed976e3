"""Parametric tail families realizing the four moment classes, plus the worked
heavy-tail example CDF, as exact sampleable laws.

The class conditions constrain tails only asymptotically, so each spec is
instantiated as an exact law whose two-sided tail equals the stated parametric
form beyond a cutoff ``x0``, with a bounded uniform fill below the cutoff:

* symmetric construction (default): fill is uniform on ``[-b, b]``; for the
  finite-variance classes the half-width ``b`` is tuned so the law has mean 0
  and variance exactly 1 with no affine correction, which keeps the
  standardized tail equal to the parametric form;
* one-sided construction: all tail mass on the positive side, uniform fill on
  ``[0, x0)``, affine standardization afterwards (finite-variance classes) or
  none at all (the infinite-variance example family, whose scale is handled
  by the B_n normalizing sequence downstream).

Sampling is exact inverse-transform; every family exposes its tail, log-tail
(also in log-argument form for astronomically large thresholds), tail inverse
and tail derivative, so the Monte Carlo engine, the scaling solvers and the
analytic bound evaluators all see one consistent law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import DomainError, SpecificationError
from .gaussian import normal_quantile, std_normal_cdf, std_normal_tail

_E = math.e
_TWO_E = 2.0 * math.e

CLASS_IDS = ("I", "II", "III", "IV", "normal")

# numba kernel family codes (see _kernels.py)
KERNEL_NORMAL = 0
KERNEL_POWER = 1
KERNEL_POLYLOG = 2
KERNEL_POLYNOMIAL = 3
KERNEL_LOGPOWER = 4
KERNEL_LOGLOG = 5
KERNEL_EXAMPLE = 6


# ---------------------------------------------------------------------------
# Tail-exponent handles (the h of the fractional-exponential moment condition)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerExponent:
    """h(x) = x**gamma; admissible for the growth equation when 0 < gamma < 2."""

    gamma: float

    def __call__(self, x: float) -> float:
        return float(x) ** self.gamma

    def lambda_closed_form(self, n: int) -> float:
        # h(sqrt(n) L) = L^2  =>  L = n^{gamma / (2 (2 - gamma))}
        return float(n) ** (self.gamma / (2.0 * (2.0 - self.gamma)))


@dataclass(frozen=True)
class PolyLogExponent:
    """h(x) = (log x)**gamma2 for x > 1."""

    gamma2: float

    def __call__(self, x: float) -> float:
        if x <= 1.0:
            raise DomainError(f"(log x)^gamma2 exponent needs x > 1, got {x}")
        return math.log(x) ** self.gamma2

    def lambda_closed_form(self, n: int):
        return None


@dataclass(frozen=True)
class LogPowerDecay:
    """g(x) = (log x)**beta1, the sub-logarithmic decay exponent."""

    beta1: float

    def __call__(self, x: float) -> float:
        if x <= 1.0:
            raise DomainError(f"(log x)^beta1 decay needs x > 1, got {x}")
        return math.log(x) ** self.beta1

    def from_log(self, log_x: float) -> float:
        return log_x ** self.beta1


@dataclass(frozen=True)
class LogLogDecay:
    """g(x) = beta2 * log log x."""

    beta2: float

    def __call__(self, x: float) -> float:
        if x <= 1.0:
            raise DomainError(f"log log decay needs x > 1, got {x}")
        return self.beta2 * math.log(math.log(x))

    def from_log(self, log_x: float) -> float:
        return self.beta2 * math.log(log_x)


# ---------------------------------------------------------------------------
# Spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailSpec:
    """Which tail class to instantiate, with its parameters.

    class_id "I":      form "power" (gamma in (0, 1/2)) or "polylog" (gamma2 > 1)
    class_id "II":     m > 2, slowly varying factor fixed to the constant tail_scale
    class_id "III":    form "log_power" (beta1 in (0, 1)) or "loglog" (beta2 > 1)
    class_id "IV":     the example CDF with eta > 0, kappa > 0
    class_id "normal": exact standard normal (reference law)
    """

    class_id: str
    form: Optional[str] = None
    gamma: Optional[float] = None
    gamma2: Optional[float] = None
    m: Optional[float] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    eta: Optional[float] = None
    kappa: Optional[float] = None
    tail_scale: float = 1.0
    cutoff: Optional[float] = None   # explicit tail-activation point x0
    symmetrize: bool = True

    def __post_init__(self) -> None:
        self._validate()

    def _validate(self) -> None:
        if self.class_id not in CLASS_IDS:
            raise SpecificationError(
                f"class_id must be one of {CLASS_IDS}, got {self.class_id!r}"
            )
        used = {"class_id", "symmetrize", "tail_scale"}
        if self.class_id == "I":
            used.add("form")
            if self.form == "power":
                used.add("gamma")
                if self.gamma is None or not 0.0 < self.gamma < 0.5:
                    raise SpecificationError(
                        "class I power form requires 0 < gamma < 1/2 "
                        f"(derivative bound alpha < 1/2), got gamma={self.gamma}"
                    )
            elif self.form == "polylog":
                used.add("gamma2")
                if self.gamma2 is None or self.gamma2 <= 1.0:
                    raise SpecificationError(
                        f"class I polylog form requires gamma2 > 1, got gamma2={self.gamma2}"
                    )
            else:
                raise SpecificationError(
                    f"class I needs form 'power' or 'polylog', got {self.form!r}"
                )
        elif self.class_id == "II":
            used.add("m")
            if self.m is None or self.m <= 2.0:
                raise SpecificationError(f"class II requires m > 2, got m={self.m}")
        elif self.class_id == "III":
            used.add("form")
            if self.form == "log_power":
                used.add("beta1")
                if self.beta1 is None or not 0.0 < self.beta1 < 1.0:
                    raise SpecificationError(
                        f"class III log_power form requires 0 < beta1 < 1, got {self.beta1}"
                    )
            elif self.form == "loglog":
                used.add("beta2")
                if self.beta2 is None or self.beta2 <= 1.0:
                    raise SpecificationError(
                        "class III loglog form requires beta2 > 1 (finite variance), "
                        f"got {self.beta2}"
                    )
            else:
                raise SpecificationError(
                    f"class III needs form 'log_power' or 'loglog', got {self.form!r}"
                )
            if self.tail_scale != 1.0:
                raise SpecificationError("class III tail form has no free scale constant")
        elif self.class_id == "IV":
            used.update(("eta", "kappa"))
            if self.eta is None or self.eta <= 0.0:
                raise SpecificationError(f"class IV requires eta > 0, got {self.eta}")
            if self.kappa is None or self.kappa <= 0.0:
                raise SpecificationError(f"class IV requires kappa > 0, got {self.kappa}")
            if self.tail_scale != 1.0:
                raise SpecificationError("the example CDF fixes its own constant")
        if self.tail_scale <= 0.0:
            raise SpecificationError(f"tail_scale must be positive, got {self.tail_scale}")
        for name in ("form", "gamma", "gamma2", "m", "beta1", "beta2", "eta", "kappa"):
            if name not in used and getattr(self, name) is not None:
                raise SpecificationError(
                    f"parameter {name!r} is not admissible for class {self.class_id}"
                )

    def to_mapping(self) -> dict:
        out = {"class_id": self.class_id, "symmetrize": self.symmetrize}
        if self.class_id in ("I", "II") and self.tail_scale != 1.0:
            out["tail_scale"] = self.tail_scale
        for name in ("form", "gamma", "gamma2", "m", "beta1", "beta2", "eta", "kappa"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TailSpec":
        allowed = {
            "class_id", "form", "gamma", "gamma2", "m", "beta1", "beta2",
            "eta", "kappa", "tail_scale", "symmetrize",
        }
        unknown = set(mapping) - allowed
        if unknown:
            raise SpecificationError(f"unknown spec keys: {sorted(unknown)}")
        if "class_id" not in mapping:
            raise SpecificationError("spec mapping needs a class_id")
        return cls(**mapping)


def h_function(spec: TailSpec):
    """The moment-condition exponent handle of a class I spec."""
    if spec.class_id != "I":
        raise SpecificationError(f"h is defined for class I only, got {spec.class_id}")
    if spec.form == "power":
        return PowerExponent(spec.gamma)
    return PolyLogExponent(spec.gamma2)


def g_function(spec: TailSpec):
    """The tail decay exponent handle of a class III spec."""
    if spec.class_id != "III":
        raise SpecificationError(f"g is defined for class III only, got {spec.class_id}")
    if spec.form == "log_power":
        return LogPowerDecay(spec.beta1)
    return LogLogDecay(spec.beta2)


# ---------------------------------------------------------------------------
# Tail families: T(x) is the tail magnitude placed beyond the cutoff
# ---------------------------------------------------------------------------


class _TailFamily:
    """Exact tail form T(x), valid (decreasing, <= 1) for x >= x_min."""

    kernel_id: int
    x_min: float
    p0: float = 0.0
    p1: float = 0.0

    def tail(self, x):
        return np.exp(self.log_tail(x))

    def log_tail(self, x):
        raise NotImplementedError

    def log_tail_from_log(self, log_x: float) -> float:
        """log T(x) given log x; usable when x itself overflows a double."""
        raise NotImplementedError

    def tail_inv(self, t):
        raise NotImplementedError

    def tail_deriv(self, x):
        """dT/dx (negative); density of the tail piece is -T' (one side)."""
        raise NotImplementedError

    def integral_T(self, a: float) -> float:
        """Integral of T(y) dy over [a, inf)."""
        raise NotImplementedError

    def integral_2yT(self, a: float) -> float:
        """Integral of 2 y T(y) dy over [a, inf); may be infinite."""
        raise NotImplementedError

    def integral_2yT_quad(self, a: float) -> float:
        """Same integral by adaptive quadrature in a substitution that makes
        the integrand exponential-tailed (independent cross-check route)."""
        val, _ = integrate.quad(lambda y: 2.0 * y * math.exp(self.log_tail(y)),
                                a, np.inf, limit=400)
        return val


class PowerTail(_TailFamily):
    """T(x) = c exp(-x**gamma)."""

    kernel_id = KERNEL_POWER

    def __init__(self, gamma: float, c: float):
        self.gamma = gamma
        self.c = c
        self.x_min = max(1.0, math.log(max(c, 1.0)) ** (1.0 / gamma) if c > 1.0 else 1.0)

    def log_tail(self, x):
        return math.log(self.c) - np.power(x, self.gamma)

    def log_tail_from_log(self, log_x: float) -> float:
        z = self.gamma * log_x
        return math.log(self.c) - (math.exp(z) if z < 700.0 else math.inf)

    def tail_inv(self, t):
        return np.power(math.log(self.c) - np.log(t), 1.0 / self.gamma)

    def tail_deriv(self, x):
        return -self.c * self.gamma * np.power(x, self.gamma - 1.0) * np.exp(-np.power(x, self.gamma))

    def integral_T(self, a: float) -> float:
        # substitute s = y^gamma:  (c/gamma) Gamma(1/gamma) Q(1/gamma, a^gamma)
        k = 1.0 / self.gamma
        return (self.c / self.gamma) * math.gamma(k) * float(special.gammaincc(k, a ** self.gamma))

    def integral_2yT(self, a: float) -> float:
        k = 2.0 / self.gamma
        return (2.0 * self.c / self.gamma) * math.gamma(k) * float(
            special.gammaincc(k, a ** self.gamma)
        )

    def integral_2yT_quad(self, a: float) -> float:
        # s = y^gamma turns the integrand into s^{2/gamma-1} e^{-s}
        k = 2.0 / self.gamma
        val, _ = integrate.quad(lambda s: s ** (k - 1.0) * math.exp(-s),
                                a ** self.gamma, np.inf, limit=400)
        return (2.0 * self.c / self.gamma) * val

    @property
    def p0(self):
        return self.gamma

    @property
    def p1(self):
        return self.c


class PolyLogTail(_TailFamily):
    """T(x) = c exp(-(log x)**gamma2)."""

    kernel_id = KERNEL_POLYLOG

    def __init__(self, gamma2: float, c: float):
        self.gamma2 = gamma2
        self.c = c
        self.x_min = _E

    def log_tail(self, x):
        return math.log(self.c) - np.power(np.log(x), self.gamma2)

    def log_tail_from_log(self, log_x: float) -> float:
        return math.log(self.c) - log_x ** self.gamma2

    def tail_inv(self, t):
        return np.exp(np.power(math.log(self.c) - np.log(t), 1.0 / self.gamma2))

    def tail_deriv(self, x):
        lx = np.log(x)
        return -self.c * self.gamma2 * np.power(lx, self.gamma2 - 1.0) / x * np.exp(
            -np.power(lx, self.gamma2)
        )

    def _exp_integral(self, shift: float, a: float) -> float:
        # integral over L >= log a of exp(shift*L - L^gamma2) dL, by quadrature
        # truncated where the exponent has fallen 80 nats below its maximum
        g2 = self.gamma2
        L0 = math.log(a)

        def expo(L):
            return shift * L - L ** g2

        l_peak = (shift / g2) ** (1.0 / (g2 - 1.0)) if shift > 0 else L0
        l_peak = max(l_peak, L0)
        top = expo(l_peak)
        hi = l_peak + 1.0
        while expo(hi) > top - 80.0:
            hi *= 2.0
            if hi > 1e12:
                raise SpecificationError(
                    "polylog tail too heavy to integrate; increase gamma2 or reduce tail_scale"
                )
        val, _ = integrate.quad(lambda L: math.exp(expo(L)), L0, hi, limit=400)
        return self.c * val

    def integral_T(self, a: float) -> float:
        return self._exp_integral(1.0, a)

    def integral_2yT(self, a: float) -> float:
        return 2.0 * self._exp_integral(2.0, a)

    def integral_2yT_quad(self, a: float) -> float:
        return self.integral_2yT(a)  # already an adaptive log-space quadrature

    @property
    def p0(self):
        return self.gamma2

    @property
    def p1(self):
        return self.c


class PolynomialTail(_TailFamily):
    """T(x) = c x**(-m)."""

    kernel_id = KERNEL_POLYNOMIAL

    def __init__(self, m: float, c: float):
        self.m = m
        self.c = c
        self.x_min = max(1.0, c ** (1.0 / m))

    def log_tail(self, x):
        return math.log(self.c) - self.m * np.log(x)

    def log_tail_from_log(self, log_x: float) -> float:
        return math.log(self.c) - self.m * log_x

    def tail_inv(self, t):
        return np.power(self.c / np.asarray(t, dtype=float), 1.0 / self.m)

    def tail_deriv(self, x):
        return -self.c * self.m * np.power(x, -self.m - 1.0)

    def integral_T(self, a: float) -> float:
        return self.c * a ** (1.0 - self.m) / (self.m - 1.0)

    def integral_2yT(self, a: float) -> float:
        return 2.0 * self.c * a ** (2.0 - self.m) / (self.m - 2.0)

    @property
    def p0(self):
        return self.m

    @property
    def p1(self):
        return self.c


def _solve_tail_log_eq(rhs, coeff: float, expo: float, kind: str, L_lo: float):
    """Vectorized solve of 2L + coeff * w(L) = rhs for L >= L_lo, where
    w(L) = L**expo ("pow"), log L ("log") or (log L)**expo ("loglog-pow").

    All three left sides are strictly increasing in L, so a bracketed
    bisection (followed by Newton polish) is exact and branch-free.
    """
    rhs = np.asarray(rhs, dtype=float)

    def phi(L):
        if kind == "pow":
            return 2.0 * L + coeff * np.power(L, expo)
        if kind == "log":
            return 2.0 * L + coeff * np.log(L)
        return 2.0 * L + coeff * np.power(np.log(L), expo)

    lo = np.full(rhs.shape, L_lo, dtype=float)
    hi = np.maximum(rhs, L_lo + 1.0)
    # expand until phi(hi) >= rhs everywhere (phi(L) >= 2L - O(log L) so this is fast)
    for _ in range(200):
        bad = phi(hi) < rhs
        if not bad.any():
            break
        hi = np.where(bad, hi * 2.0, hi)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        below = phi(mid) < rhs
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


class LogPowerDecayTail(_TailFamily):
    """T(x) = x**(-2) exp(-(log x)**beta1), finite variance, no higher moment."""

    kernel_id = KERNEL_LOGPOWER

    def __init__(self, beta1: float):
        self.beta1 = beta1
        self.x_min = _E

    def log_tail(self, x):
        lx = np.log(x)
        return -2.0 * lx - np.power(lx, self.beta1)

    def log_tail_from_log(self, log_x: float) -> float:
        return -2.0 * log_x - log_x ** self.beta1

    def tail_inv(self, t):
        L = _solve_tail_log_eq(-np.log(t), 1.0, self.beta1, "pow", 1.0)
        return np.exp(L)

    def tail_deriv(self, x):
        lx = np.log(x)
        return -np.exp(-np.power(lx, self.beta1)) * np.power(x, -3.0) * (
            2.0 + self.beta1 * np.power(lx, self.beta1 - 1.0)
        )

    def integral_T(self, a: float) -> float:
        val, _ = integrate.quad(lambda y: math.exp(self.log_tail(y)), a, np.inf, limit=400)
        return val

    def integral_2yT(self, a: float) -> float:
        # 2 integral y^{-1} e^{-(log y)^beta1} dy = (2/beta1) Gamma(1/b1) Q(1/b1, (log a)^b1)
        k = 1.0 / self.beta1
        return (2.0 / self.beta1) * math.gamma(k) * float(
            special.gammaincc(k, math.log(a) ** self.beta1)
        )

    def integral_2yT_quad(self, a: float) -> float:
        # s = (log y)^beta1 gives an exponential-tailed integrand
        k = 1.0 / self.beta1
        val, _ = integrate.quad(lambda s: s ** (k - 1.0) * math.exp(-s),
                                math.log(a) ** self.beta1, np.inf, limit=400)
        return (2.0 / self.beta1) * val

    @property
    def p0(self):
        return self.beta1


class LogLogDecayTail(_TailFamily):
    """T(x) = x**(-2) (log x)**(-beta2), i.e. g(x) = beta2 log log x."""

    kernel_id = KERNEL_LOGLOG

    def __init__(self, beta2: float):
        self.beta2 = beta2
        self.x_min = _E

    def log_tail(self, x):
        lx = np.log(x)
        return -2.0 * lx - self.beta2 * np.log(lx)

    def log_tail_from_log(self, log_x: float) -> float:
        return -2.0 * log_x - self.beta2 * math.log(log_x)

    def tail_inv(self, t):
        L = _solve_tail_log_eq(-np.log(t), self.beta2, 1.0, "log", 1.0)
        return np.exp(L)

    def tail_deriv(self, x):
        lx = np.log(x)
        return -np.power(x, -3.0) * np.power(lx, -self.beta2) * (2.0 + self.beta2 / lx)

    def integral_T(self, a: float) -> float:
        val, _ = integrate.quad(lambda y: math.exp(self.log_tail(y)), a, np.inf, limit=400)
        return val

    def integral_2yT(self, a: float) -> float:
        # 2 integral (log y)^{-beta2} dy/y = 2 (log a)^{1-beta2} / (beta2 - 1)
        return 2.0 * math.log(a) ** (1.0 - self.beta2) / (self.beta2 - 1.0)

    def integral_2yT_quad(self, a: float) -> float:
        # L = log y: plain algebraic decay L^{-beta2}, well handled on [L0, inf)
        val, _ = integrate.quad(lambda L: 2.0 * L ** (-self.beta2),
                                math.log(a), np.inf, limit=400)
        return val

    @property
    def p0(self):
        return self.beta2


class ExampleTail(_TailFamily):
    """The worked example: T(x) = e^{2e+kappa} x^{-2} e^{-kappa (log log x)^eta},
    defined for x >= e^e where T equals 1 exactly."""

    kernel_id = KERNEL_EXAMPLE

    def __init__(self, eta: float, kappa: float):
        self.eta = eta
        self.kappa = kappa
        self.x_min = math.exp(_E)
        self.logC = _TWO_E + kappa

    def log_tail(self, x):
        lx = np.log(x)
        return self.logC - 2.0 * lx - self.kappa * np.power(np.log(lx), self.eta)

    def log_tail_from_log(self, log_x: float) -> float:
        return self.logC - 2.0 * log_x - self.kappa * math.log(log_x) ** self.eta

    def tail_inv(self, t):
        rhs = self.logC - np.log(t)
        L = _solve_tail_log_eq(rhs, self.kappa, self.eta, "loglog-pow", _E)
        return np.exp(L)

    def tail_deriv(self, x):
        lx = np.log(x)
        llx = np.log(lx)
        return -np.exp(self.logC - self.kappa * np.power(llx, self.eta)) * np.power(x, -3.0) * (
            2.0 + self.kappa * self.eta * np.power(llx, self.eta - 1.0) / lx
        )

    def integral_T(self, a: float) -> float:
        val, _ = integrate.quad(lambda y: math.exp(self.log_tail(y)), a, np.inf, limit=400)
        return val

    def integral_2yT(self, a: float) -> float:
        # diverges for the infinite-variance cases; integrate up to where the
        # truncated moment is requested instead (see truncated_second_moment)
        raise SpecificationError("example tail second moment integral may diverge; use D(x)")

    @property
    def p0(self):
        return self.eta

    @property
    def p1(self):
        return self.kappa


def _family_for(spec: TailSpec) -> _TailFamily:
    if spec.class_id == "I":
        if spec.form == "power":
            return PowerTail(spec.gamma, spec.tail_scale)
        return PolyLogTail(spec.gamma2, spec.tail_scale)
    if spec.class_id == "II":
        return PolynomialTail(spec.m, spec.tail_scale)
    if spec.class_id == "III":
        if spec.form == "log_power":
            return LogPowerDecayTail(spec.beta1)
        return LogLogDecayTail(spec.beta2)
    if spec.class_id == "IV":
        return ExampleTail(spec.eta, spec.kappa)
    raise SpecificationError(f"no tail family for class {spec.class_id}")


# ---------------------------------------------------------------------------
# The example family's truncated second moment (closed reduction)
# ---------------------------------------------------------------------------


def example_truncated_moment_from_loglog(eta: float, kappa: float, loglog_x: float) -> float:
    """D(x) for the example CDF, parameterized by log log x (valid for any
    astronomically large x).  Closed reduction with one well-behaved
    quadrature in z-space."""
    if loglog_x < 1.0:
        raise DomainError(f"example support starts at e^e (log log x >= 1), got {loglog_x}")
    ub = kappa * loglog_x ** eta
    if ub <= kappa:
        return 0.0
    inv_eta = 1.0 / eta

    def integrand(z):
        return z ** (inv_eta - 1.0) * math.exp(-z + (z / kappa) ** inv_eta)

    val, _ = integrate.quad(integrand, kappa, ub, limit=400)
    bracket = 1.0 - math.exp(kappa - ub) + (2.0 * math.exp(kappa) / (eta * kappa ** inv_eta)) * val
    return math.exp(_TWO_E) * bracket


def example_truncated_moment(eta: float, kappa: float, x: float) -> float:
    """D(x) for the example CDF at a materializable x >= e^e."""
    if x < math.exp(_E):
        raise DomainError(f"example support starts at e^e ~ 15.154, got x={x}")
    return example_truncated_moment_from_loglog(eta, kappa, math.log(math.log(x)))


def example_variance(eta: float, kappa: float) -> float:
    """Limit of D(x); finite exactly when (eta > 1) or (eta = 1 and kappa > 1)."""
    if not (eta > 1.0 or (eta == 1.0 and kappa > 1.0)):
        return math.inf
    inv_eta = 1.0 / eta

    def integrand(z):
        return z ** (inv_eta - 1.0) * math.exp(-z + (z / kappa) ** inv_eta)

    val, _ = integrate.quad(integrand, kappa, np.inf, limit=400)
    return math.exp(_TWO_E) * (1.0 + (2.0 * math.exp(kappa) / (eta * kappa ** inv_eta)) * val)


def example_v_from_loglog(eta: float, kappa: float, loglog_x: float) -> float:
    """The decay exponent v with x^2 F_bar(x) / D(x) = exp(-v(x)) exactly:
    v = kappa (log log x)^eta + log D(x) - (2e + kappa)."""
    d = example_truncated_moment_from_loglog(eta, kappa, loglog_x)
    if d <= 0.0:
        raise DomainError("v undefined where D(x) = 0 (x at the support start)")
    return kappa * loglog_x ** eta + math.log(d) - (_TWO_E + kappa)


# ---------------------------------------------------------------------------
# Standardized laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardizedDist:
    """An exact law realizing a TailSpec, ready for simulation and analysis.

    kind "symmetric": two-sided tail T beyond x0, uniform fill on [-b, b],
        mean 0 by symmetry; variance 1 built in for the finite-variance
        classes (loc=0, scale=1 always).
    kind "one_sided": tail on the positive side, uniform fill on [0, x0);
        finite-variance classes carry affine loc/scale so the standardized
        law has mean 0, variance 1; the example family stays raw.
    kind "normal": exact standard normal.
    """

    spec: TailSpec
    kind: str
    family: Optional[_TailFamily]
    x0: float
    fill_halfwidth: float  # b for symmetric; x0 reused as fill width one-sided
    fill_mass: float
    loc: float
    scale: float

    # -- raw-law pieces (before affine standardization) --------------------

    def _raw_cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return std_normal_cdf(x)
        if self.kind == "symmetric":
            ax = np.abs(x)
            upper = np.where(
                ax >= self.x0,
                0.5 * self.family.tail(np.maximum(ax, self.x0)),
                0.5 - 0.5 * self.fill_mass * np.minimum(ax, self.fill_halfwidth)
                / max(self.fill_halfwidth, np.finfo(float).tiny),
            )
            return np.where(x >= 0.0, 1.0 - upper, upper)
        # one-sided
        out = np.where(
            x >= self.x0,
            1.0 - self.family.tail(np.maximum(x, self.x0)),
            self.fill_mass * np.clip(x, 0.0, self.x0) / self.x0,
        )
        return np.where(x < 0.0, 0.0, out)

    def _raw_upper_tail(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return std_normal_tail(x)
        if self.kind == "symmetric":
            ax = np.abs(x)
            up = np.where(
                ax >= self.x0,
                0.5 * self.family.tail(np.maximum(ax, self.x0)),
                0.5 - 0.5 * self.fill_mass * np.minimum(ax, self.fill_halfwidth)
                / max(self.fill_halfwidth, np.finfo(float).tiny),
            )
            return np.where(x >= 0.0, up, 1.0 - up)
        out = np.where(
            x >= self.x0,
            self.family.tail(np.maximum(x, self.x0)),
            1.0 - self.fill_mass * np.clip(x, 0.0, self.x0) / self.x0,
        )
        return np.where(x < 0.0, 1.0, out)

    def _raw_density(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if self.kind == "symmetric":
            ax = np.abs(x)
            dens = np.zeros_like(ax)
            if self.fill_mass > 0.0:
                dens = np.where(
                    ax < self.fill_halfwidth,
                    self.fill_mass / (2.0 * self.fill_halfwidth),
                    dens,
                )
            tail_side = ax >= self.x0
            if np.any(tail_side):
                dens = np.where(tail_side, -0.5 * self.family.tail_deriv(np.maximum(ax, self.x0)), dens)
            return dens
        dens = np.zeros_like(x)
        if self.fill_mass > 0.0:
            dens = np.where((x >= 0.0) & (x < self.x0), self.fill_mass / self.x0, dens)
        tail_side = x >= self.x0
        if np.any(tail_side):
            dens = np.where(tail_side, -self.family.tail_deriv(np.maximum(x, self.x0)), dens)
        return dens

    def _raw_quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0.0) | (u >= 1.0)):
            raise DomainError("quantile requires u strictly inside (0, 1)")
        if self.kind == "normal":
            return special.ndtri(u)
        tiny = np.finfo(float).tiny
        if self.kind == "symmetric":
            sign = np.where(u >= 0.5, 1.0, -1.0)
            w = np.abs(2.0 * u - 1.0)
            in_fill = w < self.fill_mass
            r = np.empty_like(w)
            if self.fill_mass > 0.0:
                r[in_fill] = self.fill_halfwidth * w[in_fill] / self.fill_mass
            t = np.maximum(1.0 - w[~in_fill], tiny)
            r[~in_fill] = self.family.tail_inv(t)
            return sign * r
        r = np.empty_like(u)
        in_fill = u < self.fill_mass
        if self.fill_mass > 0.0:
            r[in_fill] = self.x0 * u[in_fill] / self.fill_mass
        t = np.maximum(1.0 - u[~in_fill], tiny)
        r[~in_fill] = self.family.tail_inv(t)
        return r

    # -- standardized-law surface ------------------------------------------

    def cdf(self, z):
        scalar = np.isscalar(z)
        out = self._raw_cdf(self.loc + self.scale * np.asarray(z, dtype=float))
        return float(out) if scalar else out

    def upper_tail(self, z):
        scalar = np.isscalar(z)
        out = self._raw_upper_tail(self.loc + self.scale * np.asarray(z, dtype=float))
        return float(out) if scalar else out

    def tail_bar(self, z):
        """Two-sided tail 1 - F(z) + F(-z) of the standardized law, z >= 0."""
        zz = np.asarray(z, dtype=float)
        if np.any(zz < 0.0):
            raise DomainError("tail_bar is defined for z >= 0")
        scalar = np.isscalar(z)
        out = self._raw_upper_tail(self.loc + self.scale * zz) + self._raw_cdf(
            self.loc - self.scale * zz
        )
        return float(out) if scalar else out

    def log_tail_bar(self, z: float) -> float:
        if z < 0.0:
            raise DomainError("log_tail_bar is defined for z >= 0")
        if self.kind == "symmetric" and self.loc + self.scale * z >= self.x0:
            return float(self.family.log_tail(self.loc + self.scale * z))
        val = self.tail_bar(z)
        return math.log(val) if val > 0.0 else -math.inf

    def log_upper_tail(self, z: float) -> float:
        x = self.loc + self.scale * z
        if self.kind == "normal":
            return float(special.log_ndtr(-x))
        if x >= self.x0:
            lt = float(self.family.log_tail(x))
            return lt - math.log(2.0) if self.kind == "symmetric" else lt
        val = float(self._raw_upper_tail(x))
        return math.log(val) if val > 0.0 else -math.inf

    def log_upper_tail_from_log(self, log_z: float) -> float:
        """log(1 - F(z)) with the threshold given as log z (arbitrarily large)."""
        if self.kind == "normal":
            raise SpecificationError("log-argument tail only for parametric tail laws")
        if log_z > 500.0:
            log_x = math.log(self.scale) + log_z if self.scale != 1.0 or self.loc != 0.0 else log_z
        else:
            x = self.loc + self.scale * math.exp(log_z)
            if x < self.x0:
                return self.log_upper_tail(math.exp(log_z))
            log_x = math.log(x)
        lt = self.family.log_tail_from_log(log_x)
        return lt - math.log(2.0) if self.kind == "symmetric" else lt

    def quantile(self, u):
        scalar = np.isscalar(u)
        raw = self._raw_quantile(np.atleast_1d(np.asarray(u, dtype=float)))
        out = (raw - self.loc) / self.scale
        return float(out[0]) if scalar else out

    def density(self, z):
        scalar = np.isscalar(z)
        out = self.scale * self._raw_density(self.loc + self.scale * np.asarray(z, dtype=float))
        return float(out) if scalar else out

    # -- moments -------------------------------------------------------------

    def moment(self, k: int) -> float:
        """E Z^k of the standardized law by adaptive quadrature (tests)."""
        if self.kind == "normal":
            return 0.0 if k % 2 else float(np.prod(np.arange(1, k, 2, dtype=float))) if k else 1.0

        def f(z):
            return z ** k * self.density(z)

        if self.kind == "symmetric":
            if k % 2 == 1:
                return 0.0
            b, x0 = self.fill_halfwidth, self.x0
            if k == 2:
                # parts identity with the family's quadrature route: the direct
                # y-space integrand decays too slowly for class III tails
                fill = self.fill_mass * b * b / 3.0
                t0 = float(self.family.tail(x0))
                return float(fill + x0 * x0 * t0 + self.family.integral_2yT_quad(x0))
            total = 2.0 * integrate.quad(f, 0.0, b, limit=200)[0] if self.fill_mass > 0.0 else 0.0
            total += 2.0 * integrate.quad(f, x0, np.inf, limit=400)[0]
            return float(total)
        # one-sided: support is [lo_supp, inf) in standardized units
        lo_supp = (0.0 - self.loc) / self.scale
        split = (self.x0 - self.loc) / self.scale
        val1, _ = integrate.quad(f, lo_supp, split, limit=200)
        val2, _ = integrate.quad(f, split, np.inf, limit=400)
        return float(val1 + val2)

    def abs_moment(self, k: float) -> float:
        if self.kind == "normal":
            return float(2.0 ** (k / 2.0) * math.gamma((k + 1.0) / 2.0) / math.sqrt(math.pi))

        def f(z):
            return abs(z) ** k * self.density(z)

        if self.kind == "symmetric":
            b, x0 = self.fill_halfwidth, self.x0
            val0 = 2.0 * integrate.quad(f, 0.0, b, limit=200)[0] if self.fill_mass > 0 else 0.0
            val1, _ = integrate.quad(f, x0, np.inf, limit=400)
            return float(val0 + 2.0 * val1)
        lo_supp = (0.0 - self.loc) / self.scale
        split = (self.x0 - self.loc) / self.scale
        val1, _ = integrate.quad(f, lo_supp, split, limit=200)
        val2, _ = integrate.quad(f, split, np.inf, limit=400)
        return float(val1 + val2)

    def truncated_second_moment(self, x: float, method: str = "parts") -> float:
        """D(x) = integral of y^2 dF over |y| < x, standardized units."""
        if self.kind == "normal":
            if x <= 0.0:
                raise DomainError("truncation point must be positive")
            return float(1.0 - 2.0 * x * std_normal_pdf_scalar(x) - 2.0 * std_normal_tail(x))
        if method == "quadrature":
            return self._d_by_quadrature(x)
        if self.kind == "symmetric":
            b, x0, mf = self.fill_halfwidth, self.x0, self.fill_mass
            if x <= 0.0:
                raise DomainError("truncation point must be positive")
            fill = mf * min(x, b) ** 3 / (3.0 * b) if mf > 0.0 else 0.0
            if x <= x0:
                return float(fill)
            t0 = float(self.family.tail(x0))
            tx = float(self.family.tail(x))
            mid = self._tail_2yT_between(x0, x)
            return float(fill + x0 * x0 * t0 - x * x * tx + mid)
        # one-sided standardized: integrate about the (possibly shifted) origin
        return self._d_by_quadrature(x)

    def _tail_2yT_between(self, a: float, bb: float) -> float:
        try:
            return self.family.integral_2yT(a) - self.family.integral_2yT(bb)
        except SpecificationError:
            val, _ = integrate.quad(
                lambda y: 2.0 * y * math.exp(self.family.log_tail(y)), a, bb, limit=400
            )
            return val

    def _d_by_quadrature(self, x: float) -> float:
        if x <= 0.0:
            raise DomainError("truncation point must be positive")

        def f(z):
            return z * z * self.density(z)

        if self.kind == "symmetric":
            b, x0 = self.fill_halfwidth, self.x0
            pts = sorted({0.0, min(b, x), min(x0, x), x})
            total = 0.0
            for lo, hi in zip(pts[:-1], pts[1:]):
                if hi > lo:
                    total += integrate.quad(f, lo, hi, limit=400)[0]
            return float(2.0 * total)
        lo_supp = (0.0 - self.loc) / self.scale
        split = (self.x0 - self.loc) / self.scale
        pts = sorted({max(-x, lo_supp), min(split, x), x})
        total = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            if hi > lo:
                total += integrate.quad(f, lo, hi, limit=400)[0]
        return float(total)

    # -- kernel plumbing ------------------------------------------------------

    def kernel_args(self) -> tuple:
        """(family_code, two_sided, p0, p1, x0, b, fill_mass, loc, scale)."""
        if self.kind == "normal":
            return (KERNEL_NORMAL, True, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
        fam = self.family
        return (
            fam.kernel_id,
            self.kind == "symmetric",
            float(fam.p0),
            float(getattr(fam, "p1", 0.0)),
            float(self.x0),
            float(self.fill_halfwidth),
            float(self.fill_mass),
            float(self.loc),
            float(self.scale),
        )


def std_normal_pdf_scalar(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

_FILL_TAIL_MASS_CAP = 0.5      # keep at least half the mass in the fill
_FILL_TAIL_VAR_CAP = 0.75      # tail may carry at most 3/4 of the unit variance


def _choose_cutoff(fam: _TailFamily) -> tuple[float, float, float]:
    """Smallest power-of-two multiple of x_min at which a variance-1 symmetric
    law exists: returns (x0, fill_mass, fill_halfwidth)."""
    x0 = fam.x_min
    for _ in range(90):
        t0 = float(fam.tail(x0))
        if t0 <= _FILL_TAIL_MASS_CAP:
            v_tail = x0 * x0 * t0 + fam.integral_2yT(x0)
            if v_tail <= _FILL_TAIL_VAR_CAP:
                mf = 1.0 - t0
                b = math.sqrt(3.0 * (1.0 - v_tail) / mf)
                if b <= x0:
                    return x0, mf, b
        x0 *= 2.0
    raise SpecificationError(
        "no admissible cutoff found: tail too heavy to standardize at unit variance"
    )


def make_distribution(spec: TailSpec) -> StandardizedDist:
    """Instantiate the exact law for a spec (see module docstring)."""
    if spec.class_id == "normal":
        return StandardizedDist(spec, "normal", None, 0.0, 0.0, 0.0, 0.0, 1.0)
    fam = _family_for(spec)
    if spec.class_id == "IV":
        x0 = fam.x_min  # T(e^e) = 1: all mass beyond the cutoff, no fill
        kind = "symmetric" if spec.symmetrize else "one_sided"
        return StandardizedDist(spec, kind, fam, x0, 0.0, 0.0, 0.0, 1.0)
    if spec.symmetrize:
        x0, mf, b = _choose_cutoff(fam)
        return StandardizedDist(spec, "symmetric", fam, x0, b, mf, 0.0, 1.0)
    # one-sided finite-variance: uniform fill on [0, x0), affine standardization
    x0 = fam.x_min
    for _ in range(90):
        if float(fam.tail(x0)) <= _FILL_TAIL_MASS_CAP:
            break
        x0 *= 2.0
    t0 = float(fam.tail(x0))
    mf = 1.0 - t0
    mean = x0 * (1.0 - mf / 2.0) + fam.integral_T(x0)
    second = mf * x0 * x0 / 3.0 + x0 * x0 * t0 + fam.integral_2yT(x0)
    var = second - mean * mean
    if not (var > 0.0 and math.isfinite(var)):
        raise SpecificationError("one-sided construction has no finite positive variance")
    return StandardizedDist(spec, "one_sided", fam, x0, x0, mf, mean, math.sqrt(var))


def tail_bar(d: StandardizedDist, x) -> float:
    """Module-level alias of the two-sided tail of a standardized law."""
    return d.tail_bar(x)


def truncated_second_moment(d_or_spec, x: float, method: str = "auto") -> float:
    """D(x) for a law or for the raw example spec.

    method "auto": closed reduction for the raw example family, tail-integral
    split otherwise; "quadrature": direct adaptive quadrature of y^2 dF (the
    independent cross-check route); "closed": the example reduction only.
    """
    if isinstance(d_or_spec, TailSpec):
        spec = d_or_spec
        if spec.class_id != "IV":
            d_or_spec = make_distribution(spec)
        else:
            if method == "quadrature":
                raw = make_distribution(
                    TailSpec(class_id="IV", eta=spec.eta, kappa=spec.kappa, symmetrize=False)
                )
                return raw.truncated_second_moment(x, method="quadrature")
            return example_truncated_moment(spec.eta, spec.kappa, x)
    d = d_or_spec
    if method == "closed":
        if d.spec.class_id != "IV":
            raise SpecificationError("closed truncated moment exists for the example family only")
        return example_truncated_moment(d.spec.eta, d.spec.kappa, x)
    if method == "quadrature":
        return d.truncated_second_moment(x, method="quadrature")
    if d.spec.class_id == "IV":
        # symmetrization preserves second moments: D_sym(x) = D_raw(x) exactly
        return example_truncated_moment(d.spec.eta, d.spec.kappa, x)
    return d.truncated_second_moment(x)
