"""Smooth adaptive backstepping for fractional strict-feedback plants.

The controller recursion builds one virtual control per stage.  Because a
Caputo derivative of a composite signal has no usable chain rule, each
stage's fractional derivative is approximated through the stage's partial
derivatives, and the resulting structure needs those partials exactly:
they are propagated with forward-mode duals (``duals.Dual``), with the
regressor derivatives supplied analytically by the plant definition.
Finite differences appear only in tests, never in the control path.

Exact partial propagation is implemented through second order, which
covers plants up to third order; higher orders would need third
derivatives of the early stages and are rejected at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .duals import Dual, dual_dot, independents, value_of
from .fdesolve import CommensurateFDE
from .frackernel import FracOrder

__all__ = [
    "Regressor",
    "PlantModel",
    "ControllerGains",
    "AdaptiveState",
    "ReferenceSignal",
    "StageEval",
    "RateBundle",
    "SingularGainError",
    "BacksteppingController",
    "ClosedLoop",
    "sg",
    "epsilon_fn",
    "eval_stage1",
    "build_phi_v",
    "build_zeta",
    "eval_stage_i",
    "control_input",
    "adaptive_rates",
]

SINGULAR_GAIN = 1e-12

COMPENSATOR_KINDS = ("smooth", "sign", "arctan")
CONTROLLER_KINDS = ("proposed", "sign_baseline", "arctan_baseline", "uncontrolled")


class SingularGainError(ZeroDivisionError):
    """Input gain g(x) vanished along the trajectory."""


def sg(x: float, eps: float) -> float:
    """Smooth odd surrogate for sign: x / sqrt(x^2 + eps^2), range (-1, 1)."""
    if not eps > 0:
        raise ValueError("sg needs eps > 0")
    return x / math.sqrt(x * x + eps * eps)


def epsilon_fn(t: float, a: float) -> float:
    """Integrable boundary-layer width e^(-a t), a > 0."""
    if not a > 0:
        raise ValueError("epsilon_fn needs a > 0")
    return math.exp(-a * t)


def _compensation(kind: str, z_n: float, eps: float) -> float:
    if kind == "smooth":
        return sg(z_n, eps)
    if kind == "sign":
        return 0.0 if z_n == 0.0 else math.copysign(1.0, z_n)
    if kind == "arctan":
        return (2.0 / math.pi) * math.atan(10.0 * z_n)
    raise ValueError(f"unknown compensator kind {kind!r}; expected one of {COMPENSATOR_KINDS}")


@dataclass
class Regressor:
    """Known nonlinear regressor phi_i(x_1..x_i) with analytic derivatives.

    ``value`` maps the first i states to a length-p vector; ``jac`` returns
    the (p, i) Jacobian; ``hess`` the (p, i, i) second derivatives, needed
    only for the early stages of third-order plants.
    """

    value: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass
class PlantModel:
    """Strict-feedback plant: D^alpha x_i = x_{i+1} + phi_i^T theta_i,
    D^alpha x_n = g(x) u + phi_n^T theta_n + d(t)."""

    n: int
    p: int
    phi: Sequence[Regressor]
    g: Callable[[np.ndarray], float]
    theta_true: Sequence[np.ndarray]
    disturbance: Callable[[float], float]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("strict-feedback backstepping needs plant order n >= 2")
        if len(self.phi) != self.n:
            raise ValueError(f"need {self.n} regressors, got {len(self.phi)}")
        self.theta_true = [np.asarray(th, dtype=float) for th in self.theta_true]
        if len(self.theta_true) != self.n or any(th.shape != (self.p,) for th in self.theta_true):
            raise ValueError(f"theta_true must be {self.n} vectors of length {self.p}")

    def phi_value(self, i: int, x: np.ndarray) -> np.ndarray:
        """phi_i evaluated on the first i states (i is 1-based)."""
        out = np.asarray(self.phi[i - 1].value(x[:i]), dtype=float)
        if out.shape != (self.p,):
            raise ValueError(f"phi_{i} returned shape {out.shape}, expected ({self.p},)")
        return out

    def gain(self, x: np.ndarray) -> float:
        g = float(self.g(x))
        if abs(g) < SINGULAR_GAIN:
            raise SingularGainError(f"|g(x)| = {abs(g):.3e} below {SINGULAR_GAIN} at x = {x}")
        return g


@dataclass
class ControllerGains:
    """Design constants: stage gains c_i, adaptation matrices Gamma_i,
    leakage rates lambda_i, disturbance-estimator gain eta, and the decay
    rate a of the boundary-layer width eps(t) = e^(-a t)."""

    c: np.ndarray
    Gamma: Sequence[np.ndarray]
    lam: np.ndarray
    eta: float
    a: float

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        self.Gamma = [np.asarray(G, dtype=float) for G in self.Gamma]
        if np.any(self.c <= 0) or np.any(self.lam <= 0) or self.eta <= 0 or self.a <= 0:
            raise ValueError("all gains c_i, lambda_i, eta, a must be positive")
        for i, G in enumerate(self.Gamma, start=1):
            if G.shape[0] != G.shape[1]:
                raise ValueError(f"Gamma_{i} must be square")
            if not np.allclose(G, G.T):
                raise ValueError(f"Gamma_{i} must be symmetric")
            try:
                np.linalg.cholesky(G)
            except np.linalg.LinAlgError:
                raise ValueError(f"Gamma_{i} must be positive definite") from None

    @staticmethod
    def scaled_identity(n: int, p: int, c, gamma_scales, lam, eta: float, a: float) -> "ControllerGains":
        """Gains with Gamma_i = gamma_scales[i-1] * I of the stage dimension p*i."""
        Gamma = [float(gamma_scales[i - 1]) * np.eye(p * i) for i in range(1, n + 1)]
        return ControllerGains(np.asarray(c, float), Gamma, np.asarray(lam, float), eta, a)


@dataclass
class AdaptiveState:
    """Estimator states: stacked parameter estimates per stage, the
    per-stage approximation-error bounds, and the disturbance bound."""

    theta_hat: list
    rho_hat: np.ndarray
    D_hat: float

    def __post_init__(self):
        self.theta_hat = [np.asarray(th, dtype=float) for th in self.theta_hat]
        self.rho_hat = np.asarray(self.rho_hat, dtype=float)
        self.D_hat = float(self.D_hat)
        if not all(np.all(np.isfinite(th)) for th in self.theta_hat):
            raise ValueError("theta_hat entries must be finite")
        if not (np.all(np.isfinite(self.rho_hat)) and math.isfinite(self.D_hat)):
            raise ValueError("rho_hat and D_hat must be finite")

    @staticmethod
    def zeros(n: int, p: int) -> "AdaptiveState":
        return AdaptiveState([np.zeros(p * i) for i in range(1, n + 1)], np.zeros(n - 1), 0.0)


@dataclass
class ReferenceSignal:
    """Reference r(t) together with its exact fractional derivative."""

    r: Callable[[float], float]
    dr_alpha: Callable[[float], float]

    @staticmethod
    def zero() -> "ReferenceSignal":
        return ReferenceSignal(lambda t: 0.0, lambda t: 0.0)


@dataclass
class StageEval:
    """A virtual control value with its exact partial derivatives.

    ``d_dx[j]`` is the partial w.r.t. x_{j+1}; ``d_dtheta[j]`` the partial
    w.r.t. the stage-(j+1) estimate stack.  ``dual`` keeps the forward-mode
    object so the next stage can differentiate these partials again.
    """

    value: float
    d_dx: np.ndarray
    d_dtheta: list
    dual: Dual = field(repr=False, default=None)


@dataclass
class RateBundle:
    """Caputo rates of every estimator state at one instant."""

    theta: list
    rho: np.ndarray
    D: float


def _theta_block(n: int, p: int, i: int) -> slice:
    """Slice of the stage-i estimate stack inside the independent layout."""
    start = n + p * (i - 1) * i // 2
    return slice(start, start + p * i)


def _layout_size(n: int, p: int) -> int:
    return n + p * n * (n + 1) // 2


def _lift_regressor(reg: Regressor, x: np.ndarray, i: int, m: int, p: int, with_hess: bool):
    """phi_i entries as Duals over the independent layout."""
    xbar = np.asarray(x[:i], dtype=float)
    vals = np.asarray(reg.value(xbar), dtype=float)
    jac = np.asarray(reg.jac(xbar), dtype=float).reshape(p, i)
    hs = None
    if with_hess:
        if reg.hess is None:
            raise ValueError("regressor needs an analytic hess callback for this plant order")
        hs = np.asarray(reg.hess(xbar), dtype=float).reshape(p, i, i)
    out = []
    for r_ in range(p):
        g = np.zeros(m)
        g[:i] = jac[r_]
        H = None
        if with_hess:
            H = np.zeros((m, m))
            H[:i, :i] = hs[r_]
        out.append(Dual(float(vals[r_]), g, H))
    return out


def _dual_matvec(mat: np.ndarray, vec):
    return [dual_dot(mat[r_], vec) for r_ in range(mat.shape[0])]


def _stack_phi_v(i: int, phi_lifted, dalpha_dx):
    """[phi_i, (-da/dx_{i-1}) phi_{i-1}, ..., (-da/dx_1) phi_1] as a flat list."""
    out = list(phi_lifted[i - 1])
    for j in range(i - 1, 0, -1):
        scale = -dalpha_dx[j - 1]
        out.extend(scale * entry for entry in phi_lifted[j - 1])
    return out


def _zeta(i: int, x_duals, dalpha_dx, dalpha_dtheta, theta_rates):
    """zeta_i = sum_{j=2..i} (-da_{i-1}/dx_{j-1}) x_j
             + sum_{j=1..i-1} (-da_{i-1}/dtheta_j) . rate_j."""
    total = 0.0
    for j in range(2, i + 1):
        total = total + (-dalpha_dx[j - 2]) * x_duals[j - 1]
    for j in range(1, i):
        block = dalpha_dtheta[j - 1]
        rate = theta_rates[j - 1]
        total = total + dual_dot([-e for e in block], rate)
    return total


@dataclass
class ControlEval:
    """Everything the closed loop and the diagnostics need at one instant."""

    z: np.ndarray
    u: float
    stages: list
    phi_v: list
    rates: RateBundle
    eps: float


class BacksteppingController:
    """Stage recursion bound to one plant / gain / reference triple.

    ``compensator`` selects the disturbance term in the final control law
    and the bound-estimator law: "smooth" is the shrinking-layer design,
    "sign" and "arctan" are the comparison baselines.
    """

    def __init__(
        self,
        plant: PlantModel,
        gains: ControllerGains,
        reference: ReferenceSignal,
        compensator: str = "smooth",
    ):
        if compensator not in COMPENSATOR_KINDS:
            raise ValueError(f"compensator must be one of {COMPENSATOR_KINDS}")
        n, p = plant.n, plant.p
        if n > 3:
            raise NotImplementedError(
                "exact partial propagation is implemented through second order, "
                "covering plants of order n <= 3"
            )
        if gains.c.shape != (n,) or gains.lam.shape != (n - 1,):
            raise ValueError("gain dimensions do not match the plant order")
        for i, G in enumerate(gains.Gamma, start=1):
            if G.shape != (p * i, p * i):
                raise ValueError(f"Gamma_{i} must be {p * i}x{p * i} for the stacked estimate")
        self.plant = plant
        self.gains = gains
        self.reference = reference
        self.compensator = compensator
        self.m = _layout_size(n, p)
        self.theta_slices = [_theta_block(n, p, i) for i in range(1, n + 1)]

    # -- full stage recursion -------------------------------------------
    def evaluate(self, t: float, x: np.ndarray, est: AdaptiveState) -> ControlEval:
        plant, gains = self.plant, self.gains
        n, p, m = plant.n, plant.p, self.m
        # second-order propagation is only needed for stages whose partials
        # get differentiated again, i.e. everything before stage n-1
        deep = n >= 3

        x = np.asarray(x, dtype=float)
        x_duals = independents(x, m, 0, deep)
        theta_duals = [
            independents(est.theta_hat[i - 1], m, self.theta_slices[i - 1].start, deep)
            for i in range(1, n + 1)
        ]
        phi_lifted = [
            _lift_regressor(plant.phi[i - 1], x, i, m, p, deep and i <= n - 2)
            for i in range(1, n + 1)
        ]

        r_val = float(self.reference.r(t))
        dr_val = float(self.reference.dr_alpha(t))

        z_duals = [x_duals[0] - r_val]
        alpha1 = (
            -gains.c[0] * z_duals[0]
            - dual_dot(phi_lifted[0], theta_duals[0])
            + dr_val
        )
        stages = [self._publish(1, alpha1)]
        phi_v = [list(phi_lifted[0])]
        theta_rates = [
            [z_duals[0] * e for e in _dual_matvec(gains.Gamma[0], phi_v[0])]
        ]

        for i in range(2, n):
            prev = stages[i - 2].dual
            dalpha_dx = [prev.partial(j) for j in range(i - 1)]
            dalpha_dth = [
                [prev.partial(k) for k in range(sl.start, sl.stop)]
                for sl in self.theta_slices[: i - 1]
            ]
            z_duals.append(x_duals[i - 1] - prev)
            pv = _stack_phi_v(i, phi_lifted, dalpha_dx)
            zeta = _zeta(i, x_duals, dalpha_dx, dalpha_dth, theta_rates)
            alpha_i = (
                -z_duals[i - 2]
                - gains.c[i - 1] * z_duals[i - 1]
                - dual_dot(pv, theta_duals[i - 1])
                - zeta
                - float(est.rho_hat[i - 2])
            )
            stages.append(self._publish(i, alpha_i))
            phi_v.append(pv)
            theta_rates.append(
                [z_duals[i - 1] * e for e in _dual_matvec(gains.Gamma[i - 1], pv)]
            )

        # final stage: values only
        prev = stages[n - 2].dual
        dalpha_dx_f = prev.grad[:n - 1]
        z_n = float(x[n - 1] - prev.val)
        z_vals = np.array([value_of(zd) for zd in z_duals] + [z_n])

        pv_n = _stack_phi_v(n, phi_lifted, list(dalpha_dx_f))
        pv_n_vals = np.array([value_of(e) for e in pv_n])
        zeta_n = 0.0
        for j in range(2, n + 1):
            zeta_n += -dalpha_dx_f[j - 2] * x[j - 1]
        for j in range(1, n):
            block = prev.grad[self.theta_slices[j - 1]]
            rate_vals = np.array([value_of(e) for e in theta_rates[j - 1]])
            zeta_n += -block @ rate_vals

        eps = epsilon_fn(t, gains.a)
        comp = _compensation(self.compensator, z_n, eps)
        g_val = plant.gain(x)
        u = (
            -z_vals[n - 2]
            - gains.c[n - 1] * z_n
            - pv_n_vals @ est.theta_hat[n - 1]
            - comp * est.D_hat
            - zeta_n
            - float(est.rho_hat[n - 2])
        ) / g_val

        phi_v_vals = [np.array([value_of(e) for e in pv]) for pv in phi_v] + [pv_n_vals]
        theta_rate_vals = [
            np.array([value_of(e) for e in tr]) for tr in theta_rates
        ] + [z_n * (self.gains.Gamma[n - 1] @ pv_n_vals)]
        rho_rates = np.array([z_vals[i] * gains.lam[i - 1] for i in range(1, n)])
        D_rate = gains.eta * z_n * comp
        rates = RateBundle(theta_rate_vals, rho_rates, D_rate)

        return ControlEval(z_vals, float(u), stages, phi_v_vals, rates, eps)

    def _publish(self, i: int, alpha_dual: Dual) -> StageEval:
        d_dx = alpha_dual.grad[:i].copy()
        d_dtheta = [alpha_dual.grad[self.theta_slices[j]].copy() for j in range(i)]
        return StageEval(float(alpha_dual.val), d_dx, d_dtheta, alpha_dual)

    # -- adaptive initial state -----------------------------------------
    def initial_estimates(self) -> AdaptiveState:
        return AdaptiveState.zeros(self.plant.n, self.plant.p)


class ClosedLoop:
    """Callable rhs of the augmented system [x, theta_hats, rho_hats, D_hat].

    ``kind`` "uncontrolled" forces u = 0 and freezes the estimators; the
    other kinds wire the matching compensator into the control law and the
    disturbance-bound estimator.
    """

    KIND_TO_COMPENSATOR = {
        "proposed": "smooth",
        "sign_baseline": "sign",
        "arctan_baseline": "arctan",
    }

    def __init__(
        self,
        plant: PlantModel,
        gains: ControllerGains,
        reference: ReferenceSignal,
        order: FracOrder,
        kind: str = "proposed",
    ):
        if kind not in CONTROLLER_KINDS:
            raise ValueError(f"controller kind must be one of {CONTROLLER_KINDS}")
        self.plant = plant
        self.order = order
        self.kind = kind
        self.controller = (
            None
            if kind == "uncontrolled"
            else BacksteppingController(plant, gains, reference, self.KIND_TO_COMPENSATOR[kind])
        )
        self.gains = gains
        self.reference = reference
        n, p = plant.n, plant.p
        self.n, self.p = n, p
        self.n_theta = p * n * (n + 1) // 2
        self.dim = n + self.n_theta + (n - 1) + 1

    # augmented vector layout ------------------------------------------
    def split(self, aug: np.ndarray):
        n, p = self.n, self.p
        x = aug[:n]
        theta_hat = []
        off = n
        for i in range(1, n + 1):
            theta_hat.append(aug[off : off + p * i])
            off += p * i
        rho_hat = aug[off : off + n - 1]
        D_hat = aug[off + n - 1]
        return x, AdaptiveState(theta_hat, rho_hat, float(D_hat))

    def pack(self, x: np.ndarray, est: AdaptiveState) -> np.ndarray:
        parts = [np.asarray(x, float)] + [np.asarray(th, float) for th in est.theta_hat]
        parts.append(np.asarray(est.rho_hat, float))
        parts.append(np.array([est.D_hat]))
        return np.concatenate(parts)

    def initial_state(self, x0) -> np.ndarray:
        return self.pack(np.asarray(x0, float), AdaptiveState.zeros(self.n, self.p))

    def control_and_rates(self, t: float, aug: np.ndarray):
        x, est = self.split(aug)
        if self.kind == "uncontrolled":
            zero_rates = RateBundle(
                [np.zeros(self.p * i) for i in range(1, self.n + 1)],
                np.zeros(self.n - 1),
                0.0,
            )
            return 0.0, zero_rates, x
        ev = self.controller.evaluate(t, x, est)
        return ev.u, ev.rates, x

    def plant_rates(self, t: float, x: np.ndarray, u: float) -> np.ndarray:
        plant = self.plant
        n = plant.n
        rates = np.empty(n)
        for i in range(1, n):
            rates[i - 1] = x[i] + plant.phi_value(i, x) @ plant.theta_true[i - 1]
        rates[n - 1] = (
            plant.gain(x) * u
            + plant.phi_value(n, x) @ plant.theta_true[n - 1]
            + plant.disturbance(t)
        )
        return rates

    def __call__(self, t: float, aug: np.ndarray) -> np.ndarray:
        u, rates, x = self.control_and_rates(t, aug)
        out = np.empty(self.dim)
        out[: self.n] = self.plant_rates(t, x, u)
        off = self.n
        for th_rate in rates.theta:
            out[off : off + th_rate.size] = th_rate
            off += th_rate.size
        out[off : off + self.n - 1] = rates.rho
        out[off + self.n - 1] = rates.D
        return out

    def as_fde(self, discontinuity_times=()) -> CommensurateFDE:
        return CommensurateFDE(self.order, self.dim, self, discontinuity_times)


# ---------------------------------------------------------------------------
# Free-function views of the stage operations.  They re-derive whatever
# context their signature does not carry; all heavy lifting shares the
# controller pipeline above.
# ---------------------------------------------------------------------------


def eval_stage1(
    x1: float,
    theta_hat_1: np.ndarray,
    ref_dr: float,
    gains: ControllerGains,
    plant: PlantModel,
) -> StageEval:
    """First virtual control -c1 z1 - phi_1^T th_1 + D^alpha r with exact partials.

    z1 is taken as x1 minus the instantaneous reference; callers that track
    a nonzero reference fold it into x1 before calling (the closed loop
    uses the full pipeline instead).
    """
    m = 1 + plant.p
    xd = independents([x1], m, 0, False)
    thd = independents(np.asarray(theta_hat_1, float), m, 1, False)
    phi1 = _lift_regressor(plant.phi[0], np.array([x1]), 1, m, plant.p, False)
    a1 = -gains.c[0] * xd[0] - dual_dot(phi1, thd) + float(ref_dr)
    return StageEval(float(a1.val), a1.grad[:1].copy(), [a1.grad[1:].copy()], a1)


def build_phi_v(i: int, x: np.ndarray, prev: StageEval, plant: PlantModel) -> np.ndarray:
    """Stacked regressor [phi_i, (-da/dx_{i-1}) phi_{i-1}, ..., (-da/dx_1) phi_1]."""
    if not 2 <= i <= plant.n:
        raise ValueError(f"stage index must be in [2, {plant.n}]")
    x = np.asarray(x, dtype=float)
    parts = [plant.phi_value(i, x)]
    for j in range(i - 1, 0, -1):
        parts.append(-prev.d_dx[j - 1] * plant.phi_value(j, x))
    return np.concatenate(parts)


def build_zeta(i: int, x: np.ndarray, prev: StageEval, theta_rates: Sequence[np.ndarray]) -> float:
    """zeta_i from the previous stage's partials and the estimate rates."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for j in range(2, i + 1):
        total += -prev.d_dx[j - 2] * x[j - 1]
    for j in range(1, i):
        total += -(prev.d_dtheta[j - 1] @ np.asarray(theta_rates[j - 1], float))
    return float(total)


def _pipeline_for(x, estimates, t, gains, plant, reference=None, compensator="smooth"):
    ref = reference if reference is not None else ReferenceSignal.zero()
    ctl = BacksteppingController(plant, gains, ref, compensator)
    return ctl.evaluate(t, np.asarray(x, float), estimates)


def eval_stage_i(
    i: int,
    x: np.ndarray,
    estimates: AdaptiveState,
    prev: StageEval,
    z: np.ndarray,
    gains: ControllerGains,
    plant: PlantModel,
    reference: Optional[ReferenceSignal] = None,
    t: float = 0.0,
) -> StageEval:
    """Intermediate virtual control -z_{i-1} - c_i z_i - phi_v^T th - zeta - rho_hat.

    ``prev``/``z`` document the data the stage consumes; the partials are
    produced by re-running the exact forward-mode recursion, which is the
    only way to keep them consistent with ``prev``'s own derivatives.
    """
    if not 2 <= i <= plant.n - 1:
        raise ValueError(f"stage index must be in [2, {plant.n - 1}] for this plant")
    ev = _pipeline_for(x, estimates, t, gains, plant, reference)
    return ev.stages[i - 1]


def control_input(
    x: np.ndarray,
    estimates: AdaptiveState,
    prev: StageEval,
    z: np.ndarray,
    t: float,
    gains: ControllerGains,
    plant: PlantModel,
    reference: Optional[ReferenceSignal] = None,
    compensator: str = "smooth",
) -> float:
    """Final control law u = (1/g)[-z_{n-1} - c_n z_n - phi_v^T th
    - comp(z_n) D_hat - zeta_n - rho_hat_{n-1}]."""
    ev = _pipeline_for(x, estimates, t, gains, plant, reference, compensator)
    return ev.u


def adaptive_rates(
    x: np.ndarray,
    z: np.ndarray,
    estimates: AdaptiveState,
    t: float,
    gains: ControllerGains,
    plant: PlantModel,
    reference: Optional[ReferenceSignal] = None,
    compensator: str = "smooth",
) -> RateBundle:
    """Caputo rates of every estimator state at the given instant."""
    ev = _pipeline_for(x, estimates, t, gains, plant, reference, compensator)
    return ev.rates
