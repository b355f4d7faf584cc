"""Fractional-calculus operators and special functions on uniform grids.

Everything is real-valued double precision: the Gamma function, the
two-parameter Mittag-Leffler function, the Riemann-Liouville fractional
integral (product-trapezoidal rule) and the Caputo fractional derivative
(L1 scheme) for orders 0 < alpha <= 1.  The integral and derivative act on
uniformly sampled functions and keep the full O(N^2) memory; short-memory
truncation is a solver concern, not a kernel one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

__all__ = [
    "GridFunction",
    "FracOrder",
    "MLParams",
    "GammaPoleError",
    "ConvergenceError",
    "gamma_fn",
    "mittag_leffler",
    "frac_integral",
    "caputo_derivative",
    "caputo_sinusoid",
]

# Branch switch for the Mittag-Leffler evaluation: series for z >= -ML_Z_SWITCH,
# asymptotic expansion for z < -ML_Z_SWITCH.
ML_Z_SWITCH = 50.0

_SERIES_RTOL = 1e-15
_ASYMP_RTOL = 1e-12
_MAX_SERIES_TERMS = 10_000


class GammaPoleError(ValueError):
    """Gamma evaluated at zero or a negative integer."""


class ConvergenceError(ArithmeticError):
    """Neither evaluation branch met its accuracy target."""


@dataclass(eq=False)
class GridFunction:
    """Real samples v_k ~ f(t0 + k*dt) on a uniform time grid.

    Invariants: dt > 0, at least two samples, all samples finite.
    """

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError("GridFunction needs a 1-D array of at least 2 samples")
        if not self.dt > 0:
            raise ValueError(f"grid step must be positive, got {self.dt}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridFunction samples must all be finite")

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class FracOrder:
    """Fractional order restricted to 0 < alpha <= 1."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"fractional order must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class MLParams:
    """Arguments of the two-parameter Mittag-Leffler function E_{alpha,beta}(z).

    Real z only; alpha > 0 and beta > 0.
    """

    alpha: float
    beta: float
    z: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Mittag-Leffler parameters require alpha > 0 and beta > 0")
        if isinstance(self.z, complex) or not math.isfinite(self.z):
            raise ValueError("Mittag-Leffler argument must be a finite real number")


def gamma_fn(x: float) -> float:
    """Gamma(x) for real x away from the poles at 0, -1, -2, ...

    Accurate to at least 12 significant digits on [0.1, 30], which covers
    every argument produced by the quadrature weights and series below.
    """
    if x <= 0 and x == math.floor(x):
        raise GammaPoleError(f"Gamma has a pole at {x}")
    return math.gamma(x)


def _recip_gamma(x: float) -> float:
    """1/Gamma(x), finite everywhere (zero at the poles)."""
    if x > 0.5:
        return 1.0 / math.gamma(x)
    # reflection: 1/Gamma(x) = Gamma(1-x) * sin(pi x) / pi
    return math.gamma(1.0 - x) * math.sin(math.pi * x) / math.pi


def _ml_series_peak_log(alpha: float, beta: float, z: float) -> float:
    """Natural log of the largest series term magnitude (a priori estimate)."""
    if abs(z) <= 1.0:
        return 0.0
    k_peak = max(1, round(abs(z) ** (1.0 / alpha) / alpha))
    best = 0.0
    for k in (k_peak // 2, k_peak, 2 * k_peak):
        if 0 < k <= 10**7:
            best = max(best, k * math.log(abs(z)) - math.lgamma(alpha * k + beta))
    return best


def _ml_series_double(alpha: float, beta: float, z: float):
    """Partial sums of the defining power series in double precision.

    Returns (sum, max_abs_term), or None when a term would overflow
    float64 and the caller must fall back to extended precision.  Terms
    are formed in log space so the alternating sign costs nothing.
    """
    terms = [_recip_gamma(beta)]
    max_term = abs(terms[0])
    if z == 0.0:
        return terms[0], max_term
    ln_az = math.log(abs(z))
    neg = z < 0
    for k in range(1, _MAX_SERIES_TERMS):
        ln_t = k * ln_az - math.lgamma(alpha * k + beta)
        if ln_t > 700.0:
            return None
        t = math.exp(ln_t)
        if neg and (k % 2):
            t = -t
        terms.append(t)
        max_term = max(max_term, abs(t))
        total = math.fsum(terms)
        scale = max(abs(total), 1e-300)
        if abs(t) < _SERIES_RTOL * scale and alpha * k + beta > abs(z) ** (1.0 / alpha):
            return total, max_term
    raise ConvergenceError(
        f"Mittag-Leffler series did not converge for alpha={alpha}, beta={beta}, z={z}"
    )


def _ml_series_mp(alpha: float, beta: float, z: float) -> float:
    """Re-sum the series at elevated working precision.

    Used when the alternating series cancels so heavily that double
    precision cannot represent the result.  Working precision is sized
    from the a priori peak-term estimate and verified after the fact
    against the achieved cancellation; the interface stays float64.  The
    gamma arguments must be formed in extended precision too: rounding
    alpha*k + beta to double perturbs terms enough to defeat the rescue.
    """
    digits_peak = _ml_series_peak_log(alpha, beta, z) / math.log(10.0)
    if digits_peak > 900:
        raise ConvergenceError(
            f"series cancellation too severe for alpha={alpha}, beta={beta}, z={z}"
        )
    dps = 40 + int(digits_peak)
    k_tail = abs(z) ** (1.0 / alpha)
    for _attempt in range(3):
        with mpmath.workdps(dps):
            total = mpmath.mpf(0)
            zz = mpmath.mpf(z)
            aa = mpmath.mpf(alpha)
            bb = mpmath.mpf(beta)
            tiny = mpmath.mpf(10) ** (-dps + 3)
            peak = mpmath.mpf(0)
            k = 0
            while True:
                term = zz**k / mpmath.gamma(aa * k + bb)
                total += term
                peak = max(peak, abs(term))
                if abs(term) < tiny * max(abs(total), mpmath.mpf("1e-300")) and alpha * k + beta > k_tail:
                    break
                k += 1
                if k > 10 * _MAX_SERIES_TERMS:
                    raise ConvergenceError("high-precision Mittag-Leffler series stalled")
            cancelled = mpmath.log10(peak / max(abs(total), mpmath.mpf("1e-300")))
        if dps >= cancelled + 25:
            return float(total)
        dps = int(cancelled) + 40
    raise ConvergenceError(
        f"could not stabilise high-precision series for alpha={alpha}, beta={beta}, z={z}"
    )


def _ml_asymptotic_tail(alpha: float, beta: float, z: float):
    """-sum_{j>=1} z^{-j} / Gamma(beta - alpha*j), truncated adaptively.

    Returns (sum, first_omitted_over_scale).  Terms are added while they
    shrink; the expansion is asymptotic, so growth past the optimal index
    stops the summation.
    """
    acc = 0.0
    prev = math.inf
    rel_reached = math.inf
    for j in range(1, 80):
        term = -(z ** (-j)) * _recip_gamma(beta - alpha * j)
        mag = abs(term)
        scale = max(abs(acc), 1e-300)
        if mag >= prev and j > 2:
            rel_reached = mag / scale
            break
        acc += term
        prev = mag
        if mag < _ASYMP_RTOL * max(abs(acc), 1e-300):
            rel_reached = mag / max(abs(acc), 1e-300)
            break
    return acc, rel_reached


def _ml_oscillatory_part(alpha: float, beta: float, z: float) -> float:
    """Contribution of the conjugate saddle pair for 1 < alpha <= 2, z < 0.

    (2/alpha) * Re[h^(1-beta) * e^h] with h = |z|^(1/alpha) * e^(i*pi/alpha).
    Exponentially small for alpha < 2; purely oscillatory at alpha = 2,
    where dropping it would be wrong because it decays slower than the
    algebraic tail.
    """
    r = abs(z) ** (1.0 / alpha)
    theta = math.pi / alpha
    re_h = r * math.cos(theta)
    im_h = r * math.sin(theta)
    if re_h < -700.0:
        return 0.0
    mag = r ** (1.0 - beta) * math.exp(re_h)
    phase = (1.0 - beta) * theta + im_h
    return (2.0 / alpha) * mag * math.cos(phase)


def mittag_leffler(p: MLParams) -> float:
    """E_{alpha,beta}(z) = sum_k z^k / Gamma(alpha*k + beta) for real z.

    For z >= -ML_Z_SWITCH the defining series is summed (compensated, with
    a fixed-precision re-summation when alternating cancellation would
    destroy the double result).  For z < -ML_Z_SWITCH with alpha < 2 the
    algebraic asymptotic expansion is used; alpha == 2 additionally needs
    the oscillatory contribution y^{1-beta} cos(y - pi(beta-1)/2), y=sqrt(-z),
    which the pure algebraic expansion misses.
    """
    alpha, beta, z = p.alpha, p.beta, p.z
    if z == 0.0:
        return _recip_gamma(beta)

    # At alpha == 2 the algebraic tail decays only like |z|^(-1) per term,
    # so the series window is widened to where double summation still holds.
    series_floor = -130.0 if alpha == 2.0 else -ML_Z_SWITCH
    if z >= series_floor:
        summed = _ml_series_double(alpha, beta, z)
        if summed is None:
            return _ml_series_mp(alpha, beta, z)
        total, max_term = summed
        if max_term * 2e-16 > 1e-10 * max(abs(total), 1e-300):
            return _ml_series_mp(alpha, beta, z)
        return total

    if alpha > 2.0:
        raise ConvergenceError(
            f"no branch available for alpha={alpha} > 2 with z={z} < -{ML_Z_SWITCH}"
        )

    acc, rel_reached = _ml_asymptotic_tail(alpha, beta, z)
    if alpha > 1.0:
        acc += _ml_oscillatory_part(alpha, beta, z)
    elif rel_reached > _ASYMP_RTOL:
        raise ConvergenceError(
            f"asymptotic branch reached {rel_reached:.1e} relative, "
            f"needed {_ASYMP_RTOL:.0e} (alpha={alpha}, beta={beta}, z={z})"
        )
    return acc


def _trapezoid_weights(alpha: float, n: int) -> np.ndarray:
    """Interior weights c_m of the product-trapezoidal rule, m = 0..n."""
    m = np.arange(n + 1, dtype=float)
    c = np.empty(n + 1)
    c[0] = 1.0  # weight of the newest node
    if n >= 1:
        mm = m[1:]
        c[1:] = (mm + 1.0) ** (alpha + 1.0) + (mm - 1.0) ** (alpha + 1.0) - 2.0 * mm ** (alpha + 1.0)
    return c


def frac_integral(f: GridFunction, order: FracOrder) -> GridFunction:
    """Fractional integral of order alpha via product-trapezoidal quadrature.

    The convolution with the power kernel (t - tau)^(alpha-1)/Gamma(alpha)
    is evaluated exactly for piecewise-linear f, so linear inputs incur
    only roundoff.  Node 0 is 0 by construction.
    """
    alpha = order.alpha
    v = f.values
    n_nodes = v.size
    w = f.dt**alpha / gamma_fn(alpha + 2.0)
    c = _trapezoid_weights(alpha, n_nodes - 1)

    out = np.zeros(n_nodes)
    n = np.arange(1, n_nodes, dtype=float)
    a0 = (n - 1.0) ** (alpha + 1.0) - (n - alpha - 1.0) * n**alpha
    # interior sum_{j=1}^{n-1} c_{n-j} v_j for every n at once
    if n_nodes > 2:
        interior = np.convolve(v[1:-1], c[1:-1])[: n_nodes - 2]
        out[2:] = interior
    out[1:] += a0 * v[0] + v[1:]
    out[1:] *= w
    return GridFunction(f.t0, f.dt, out)


def caputo_derivative(f: GridFunction, order: FracOrder) -> GridFunction:
    """Caputo derivative on the grid: L1 scheme for alpha < 1.

    Node 0 is defined as 0 (the memory integral is empty there).  For
    alpha == 1 the operator degenerates to the classical derivative and
    central finite differences are used instead.
    """
    alpha = order.alpha
    v = f.values
    n_nodes = v.size
    out = np.zeros(n_nodes)

    if alpha == 1.0:
        out[0] = (v[1] - v[0]) / f.dt
        out[-1] = (v[-1] - v[-2]) / f.dt
        if n_nodes > 2:
            out[1:-1] = (v[2:] - v[:-2]) / (2.0 * f.dt)
        return GridFunction(f.t0, f.dt, out)

    j = np.arange(n_nodes - 1, dtype=float)
    b = (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)
    d = np.diff(v)
    coef = f.dt ** (-alpha) / gamma_fn(2.0 - alpha)
    out[1:] = coef * np.convolve(d, b)[: n_nodes - 1]
    return GridFunction(f.t0, f.dt, out)


def caputo_sinusoid(omega: float, order: FracOrder, t: float) -> float:
    """Exact Caputo derivative of sin(omega*t) from t=0.

    Equals omega * t^(1-alpha) * E_{2,2-alpha}(-(omega*t)^2); reduces to
    omega*cos(omega*t) at alpha = 1 and vanishes at t = 0.
    """
    if t < 0:
        raise ValueError("caputo_sinusoid requires t >= 0")
    alpha = order.alpha
    if t == 0.0:
        return 0.0
    if alpha == 1.0:
        return omega * math.cos(omega * t)
    y = omega * t
    ml = mittag_leffler(MLParams(2.0, 2.0 - alpha, -(y * y)))
    return omega * t ** (1.0 - alpha) * ml
