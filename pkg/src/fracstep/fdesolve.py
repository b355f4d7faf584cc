"""Fixed-step initial-value solvers for commensurate Caputo systems.

``solve_abm`` is the workhorse: the fractional Adams-Bashforth-Moulton
predictor-corrector (fractional rectangle rule predictor, fractional
trapezoid corrector applied a configurable number of times).  ``solve_gl``
is a structurally independent Grunwald-Letnikov scheme kept as a
cross-check oracle.  Both carry the full nonlocal history; an optional
short-memory window bounds the per-step cost at the price of accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .frackernel import FracOrder, gamma_fn

__all__ = [
    "CommensurateFDE",
    "SolverConfig",
    "Trajectory",
    "solve_abm",
    "solve_gl",
]

DIVERGENCE_LIMIT = 1e9


@dataclass
class CommensurateFDE:
    """Initial-value problem D^alpha x = rhs(t, x) with one shared order.

    ``discontinuity_times`` lists instants where rhs jumps in t (step
    disturbances); they are snapped to grid nodes by the solver so no
    quadrature interval straddles a jump.
    """

    order: FracOrder
    dim: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    discontinuity_times: Sequence[float] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("system dimension must be >= 1")
        times = list(self.discontinuity_times)
        if any(t < 0 for t in times):
            raise ValueError("discontinuity times must be >= 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("discontinuity times must be strictly increasing")


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    corrector_iters: int = 2
    memory_window: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.dt <= self.t_end:
            raise ValueError(f"need 0 < dt <= t_end, got dt={self.dt}, t_end={self.t_end}")
        if self.corrector_iters < 1:
            raise ValueError("corrector_iters must be >= 1")
        if self.memory_window is not None and self.memory_window < 1:
            raise ValueError("memory_window must be a positive step count")


@dataclass
class Trajectory:
    """Time-indexed record of a run: states plus named diagnostic channels.

    When a run diverges the arrays are truncated at the last finite node
    and ``diverged`` is set; otherwise every recorded value is finite.
    """

    t: np.ndarray
    states: np.ndarray
    aux: dict = field(default_factory=dict)
    diverged: bool = False

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def n_nodes(self) -> int:
        return self.t.size

    def channel(self, name: str) -> np.ndarray:
        if name not in self.aux:
            raise KeyError(f"unknown trajectory channel {name!r}; have {sorted(self.aux)}")
        return self.aux[name]


def _snap_discontinuities(sys: CommensurateFDE, dt: float) -> list[float]:
    return [round(td / dt) * dt for td in sys.discontinuity_times]


def _grid(cfg: SolverConfig) -> np.ndarray:
    n_steps = int(round(cfg.t_end / cfg.dt))
    return np.arange(n_steps + 1) * cfg.dt


def _bad(x: np.ndarray) -> bool:
    return not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT


def solve_abm(sys: CommensurateFDE, x0, cfg: SolverConfig) -> Trajectory:
    """Fractional Adams predictor-corrector solution of the IVP.

    Predictor: rectangle-rule convolution of the stored rates.  Corrector:
    product-trapezoid weights, applied ``corrector_iters`` times, with one
    final rhs evaluation at the accepted state so the stored history is
    consistent.  x(t0) = x0 exactly.  At alpha = 1 the weights collapse to
    the classical Adams pair (cumulative Euler / trapezoid).
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise ValueError(f"x0 must have shape ({sys.dim},), got {x0.shape}")
    _snap_discontinuities(sys, cfg.dt)

    alpha = sys.order.alpha
    t = _grid(cfg)
    n_steps = t.size - 1
    w_pred = cfg.dt**alpha / gamma_fn(alpha + 1.0)
    w_corr = cfg.dt**alpha / gamma_fn(alpha + 2.0)

    m = np.arange(n_steps + 1, dtype=float)
    b = (m + 1.0) ** alpha - m**alpha  # rectangle weights by lag
    c = np.empty(n_steps + 1)  # trapezoid interior weights by lag
    c[0] = 1.0
    if n_steps >= 1:
        mm = m[1:]
        c[1:] = (mm + 1.0) ** (alpha + 1.0) + (mm - 1.0) ** (alpha + 1.0) - 2.0 * mm ** (alpha + 1.0)

    x = np.empty((n_steps + 1, sys.dim))
    x[0] = x0
    # rate history stored reversed: fbuf[n_steps - k] holds F(t_k, x_k),
    # so every lag-ordered convolution below is a contiguous slice.
    fbuf = np.empty((n_steps + 1, sys.dim))
    f0 = np.asarray(sys.rhs(t[0], x0), dtype=float)
    if f0.shape != (sys.dim,):
        raise ValueError("rhs returned a vector of the wrong length")
    if not np.all(np.isfinite(f0)):
        return Trajectory(t[:1], x[:1].copy(), diverged=True)
    fbuf[n_steps] = f0

    window = cfg.memory_window
    for k in range(n_steps):
        lo = 0 if window is None else max(0, k + 1 - window)
        n_hist = k + 1 - lo  # history nodes lo..k enter the sums
        rows = slice(n_steps - k, n_steps - lo + 1)  # F_k ... F_lo

        # predictor: x0 + w_pred * sum_{j=lo}^{k} b_{k-j} F_j
        hist_pred = b[:n_hist] @ fbuf[rows]
        x_new = x0 + w_pred * hist_pred

        # corrector history: a0 * F_0 + sum_{j=max(1,lo)}^{k} c_{k+1-j} F_j
        kk = float(k)
        a0 = kk ** (alpha + 1.0) - (kk - alpha) * (kk + 1.0) ** alpha
        jmin = max(1, lo)
        hist_corr = c[1 : k + 2 - jmin] @ fbuf[n_steps - k : n_steps + 1 - jmin] if k >= jmin else 0.0
        if lo == 0:
            hist_corr = hist_corr + a0 * fbuf[n_steps]

        t_new = t[k + 1]
        for _ in range(cfg.corrector_iters):
            f_new = np.asarray(sys.rhs(t_new, x_new), dtype=float)
            if not np.all(np.isfinite(f_new)):
                return Trajectory(t[: k + 1], x[: k + 1].copy(), diverged=True)
            x_new = x0 + w_corr * (hist_corr + f_new)
        if _bad(x_new):
            return Trajectory(t[: k + 1], x[: k + 1].copy(), diverged=True)

        f_new = np.asarray(sys.rhs(t_new, x_new), dtype=float)
        if not np.all(np.isfinite(f_new)):
            return Trajectory(t[: k + 1], x[: k + 1].copy(), diverged=True)
        x[k + 1] = x_new
        fbuf[n_steps - (k + 1)] = f_new

    return Trajectory(t, x)


def solve_gl(sys: CommensurateFDE, x0, cfg: SolverConfig) -> Trajectory:
    """Grunwald-Letnikov fixed-step solution with Caputo initial shift.

    Evolves y = x - x0 (so the Caputo initial condition is honoured) with
    the first-order GL recursion; used as an independent oracle for
    solve_abm, not as the primary integrator.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise ValueError(f"x0 must have shape ({sys.dim},), got {x0.shape}")
    _snap_discontinuities(sys, cfg.dt)

    alpha = sys.order.alpha
    t = _grid(cfg)
    n_steps = t.size - 1
    h_a = cfg.dt**alpha

    # c_j = (-1)^j binom(alpha, j) by the standard recurrence
    cw = np.empty(n_steps + 1)
    cw[0] = 1.0
    for j in range(1, n_steps + 1):
        cw[j] = cw[j - 1] * (1.0 - (alpha + 1.0) / j)

    x = np.empty((n_steps + 1, sys.dim))
    x[0] = x0
    ybuf = np.zeros((n_steps + 1, sys.dim))  # ybuf[n_steps - k] = x_k - x0

    window = cfg.memory_window
    for k in range(1, n_steps + 1):
        f_prev = np.asarray(sys.rhs(t[k], x[k - 1]), dtype=float)
        if not np.all(np.isfinite(f_prev)):
            return Trajectory(t[:k], x[:k].copy(), diverged=True)
        jmax = k if window is None else min(k, window)
        # sum_{j=1}^{jmax} c_j y_{k-j}; rows are contiguous in the reversed buffer
        hist = cw[1 : jmax + 1] @ ybuf[n_steps - k + 1 : n_steps - k + jmax + 1]
        y_new = h_a * f_prev - hist
        x_new = x0 + y_new
        if _bad(x_new):
            return Trajectory(t[:k], x[:k].copy(), diverged=True)
        x[k] = x_new
        ybuf[n_steps - k] = y_new

    return Trajectory(t, x)
