"""Concrete study plants, disturbances, references and baseline controllers.

Two systems are packaged: a second-order plant with a quartic-saturated
regressor and a sin+cos+step disturbance (stabilisation and tracking
variants), and the third-order Chua-Hartley circuit, chaotic when
uncontrolled.  Baseline controller variants swap the smooth disturbance
compensator for sign(.) or a range-matched arctan(10 .) so chattering and
residual-error comparisons run on otherwise identical loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .backstep import (
    CONTROLLER_KINDS,
    AdaptiveState,
    ClosedLoop,
    ControllerGains,
    PlantModel,
    ReferenceSignal,
    Regressor,
    StageEval,
    control_input,
)
from .fdesolve import CommensurateFDE
from .frackernel import FracOrder, caputo_sinusoid

__all__ = [
    "DisturbanceSpec",
    "Scenario",
    "second_order_scenario",
    "chua_hartley_scenario",
    "baseline_control_input",
    "scenario_by_name",
    "SCENARIO_NAMES",
]

# Decay rates of the boundary-layer width eps(t) = e^(-a t), per study.
# A fast decay collapses the smooth compensator onto sign() within a few
# seconds and the fixed-step loop then chatters exactly like the sign
# baseline; these values keep eps above the discrete switching floor
# (~ dt^alpha * D_hat) across each study's horizon while still shrinking
# the layer by orders of magnitude.
SECOND_ORDER_EPS_DECAY = 0.05
CHUA_EPS_DECAY = 0.15


@dataclass(frozen=True)
class DisturbanceSpec:
    """d(t) = sum of sinusoids plus right-continuous steps U(t - onset).

    ``sinusoids`` holds (amplitude, frequency, kind) with kind "sin" or
    "cos"; ``steps`` holds (amplitude, onset).  U(0) = 1, so a step is
    already active at its onset instant.
    """

    sinusoids: tuple = ()
    steps: tuple = ()

    def __post_init__(self):
        for amp, freq, kind in self.sinusoids:
            if kind not in ("sin", "cos"):
                raise ValueError(f"sinusoid kind must be 'sin' or 'cos', got {kind!r}")
        if any(onset < 0 for _amp, onset in self.steps):
            raise ValueError("step onset times must be >= 0")

    def __call__(self, t: float) -> float:
        total = 0.0
        for amp, freq, kind in self.sinusoids:
            total += amp * (math.sin(freq * t) if kind == "sin" else math.cos(freq * t))
        for amp, onset in self.steps:
            if t >= onset:
                total += amp
        return total

    def bound(self) -> float:
        """A tight amplitude bound: same-frequency sin/cos pairs combine
        in quadrature, steps add their magnitudes."""
        by_freq: dict = {}
        for amp, freq, kind in self.sinusoids:
            s, c = by_freq.get(freq, (0.0, 0.0))
            if kind == "sin":
                s += amp
            else:
                c += amp
            by_freq[freq] = (s, c)
        total = sum(math.hypot(s, c) for s, c in by_freq.values())
        return total + sum(abs(amp) for amp, _onset in self.steps)

    def snapped(self, dt: float) -> "DisturbanceSpec":
        """Step onsets moved to the nearest grid node."""
        steps = tuple((amp, round(onset / dt) * dt) for amp, onset in self.steps)
        return replace(self, steps=steps)

    def onsets(self) -> tuple:
        return tuple(onset for _amp, onset in self.steps)


@dataclass
class Scenario:
    """A fully configured run: plant, gains, reference, grid and kind."""

    name: str
    plant: PlantModel
    gains: ControllerGains
    reference: ReferenceSignal
    x0: np.ndarray
    alpha: FracOrder
    controller_kind: str
    horizon: float
    dt: float
    disturbance: DisturbanceSpec

    def __post_init__(self):
        if self.controller_kind not in CONTROLLER_KINDS:
            raise ValueError(f"controller_kind must be one of {CONTROLLER_KINDS}")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.plant.n,):
            raise ValueError(f"x0 must have shape ({self.plant.n},)")

    def closed_loop(self) -> ClosedLoop:
        return ClosedLoop(self.plant, self.gains, self.reference, self.alpha, self.controller_kind)

    def fde(self) -> CommensurateFDE:
        return self.closed_loop().as_fde(self.disturbance.onsets())


def _second_order_plant(disturbance: DisturbanceSpec) -> PlantModel:
    phi1 = Regressor(
        value=lambda xb: np.array([-0.4 * xb[0] ** 2]),
        jac=lambda xb: np.array([[-0.8 * xb[0]]]),
        hess=lambda xb: np.array([[[-0.8]]]),
    )

    def phi2_value(xb):
        x1, x2 = xb
        return np.array([-0.1 * x2 + (x2 - 0.5 * x1**2) / (1.0 + x1**4)])

    def phi2_jac(xb):
        x1, x2 = xb
        den = 1.0 + x1**4
        d1 = (-x1 * den - (x2 - 0.5 * x1**2) * 4.0 * x1**3) / den**2
        d2 = -0.1 + 1.0 / den
        return np.array([[d1, d2]])

    phi2 = Regressor(value=phi2_value, jac=phi2_jac)
    return PlantModel(
        n=2,
        p=1,
        phi=[phi1, phi2],
        g=lambda x: 1.0,
        theta_true=[np.array([1.0]), np.array([1.0])],
        disturbance=disturbance,
    )


def _tracking_reference(alpha: FracOrder, omega: float = 0.5) -> ReferenceSignal:
    @lru_cache(maxsize=200_000)
    def dr(t: float) -> float:
        return caputo_sinusoid(omega, alpha, t)

    return ReferenceSignal(r=lambda t: math.sin(omega * t), dr_alpha=dr)


def second_order_scenario(
    kind: str = "proposed",
    tracking: bool = False,
    dt: float = 1e-3,
    horizon: float | None = None,
    x0=(0.5, 0.5),
    a: float = SECOND_ORDER_EPS_DECAY,
) -> Scenario:
    """The second-order study: alpha = 0.95, quartic-saturated regressors,
    d(t) = sin t + cos t + 2 U(t-15), gains c=(30,1), Gamma=2I, eta=4,
    lambda=2.  Stabilisation by default; ``tracking`` switches the
    reference to sin(t/2) with its exact fractional derivative.
    """
    alpha = FracOrder(0.95)
    dist = DisturbanceSpec(
        sinusoids=((1.0, 1.0, "sin"), (1.0, 1.0, "cos")),
        steps=((2.0, 15.0),),
    ).snapped(dt)
    plant = _second_order_plant(dist)
    gains = ControllerGains.scaled_identity(2, 1, c=[30.0, 1.0], gamma_scales=[2.0, 2.0], lam=[2.0], eta=4.0, a=a)
    reference = _tracking_reference(alpha) if tracking else ReferenceSignal.zero()
    if horizon is None:
        horizon = 60.0 if tracking else (50.0 if kind == "uncontrolled" else 40.0)
    base = "second-order-track" if tracking else (
        "second-order-uncontrolled" if kind == "uncontrolled" else "second-order-stabilize"
    )
    return Scenario(base, plant, gains, reference, np.asarray(x0, float), alpha, kind, horizon, dt, dist)


def chua_hartley_scenario(
    kind: str = "proposed",
    dt: float = 1e-3,
    horizon: float = 50.0,
    a: float = CHUA_EPS_DECAY,
) -> Scenario:
    """The Chua-Hartley study: alpha = 0.98, cubic first regressor, chaotic
    when uncontrolled, d(t) = 0.5 sin 2t + 3 U(t-10), gains c=(2,2,2),
    Gamma=0.1I, lambda=(1,1), eta=0.1, x0 = (0.8, -2, 1).
    """
    alpha = FracOrder(0.98)
    dist = DisturbanceSpec(
        sinusoids=((0.5, 2.0, "sin"),),
        steps=((3.0, 10.0),),
    ).snapped(dt)
    k = 10.0 / 7.0
    phi1 = Regressor(
        value=lambda xb: np.array([k * (xb[0] - xb[0] ** 3)]),
        jac=lambda xb: np.array([[k * (1.0 - 3.0 * xb[0] ** 2)]]),
        hess=lambda xb: np.array([[[-6.0 * k * xb[0]]]]),
    )
    phi2 = Regressor(
        value=lambda xb: np.array([10.0 * xb[0] - xb[1]]),
        jac=lambda xb: np.array([[10.0, -1.0]]),
        hess=lambda xb: np.zeros((1, 2, 2)),
    )
    phi3 = Regressor(
        value=lambda xb: np.array([-(100.0 / 7.0) * xb[1]]),
        jac=lambda xb: np.array([[0.0, -(100.0 / 7.0), 0.0]]),
    )
    plant = PlantModel(
        n=3,
        p=1,
        phi=[phi1, phi2, phi3],
        g=lambda x: 1.0,
        theta_true=[np.ones(1), np.ones(1), np.ones(1)],
        disturbance=dist,
    )
    gains = ControllerGains.scaled_identity(
        3, 1, c=[2.0, 2.0, 2.0], gamma_scales=[0.1, 0.1, 0.1], lam=[1.0, 1.0], eta=0.1, a=a
    )
    name = "chua-hartley-uncontrolled" if kind == "uncontrolled" else "chua-hartley"
    return Scenario(
        name, plant, gains, ReferenceSignal.zero(), np.array([0.8, -2.0, 1.0]),
        alpha, kind, horizon, dt, dist,
    )


def baseline_control_input(
    kind: str,
    x: np.ndarray,
    estimates: AdaptiveState,
    prev: StageEval,
    z: np.ndarray,
    t: float,
    gains: ControllerGains,
    plant: PlantModel,
    reference: ReferenceSignal | None = None,
) -> float:
    """Final control law with the smooth compensator replaced by sign(z_n)
    or by arctan(10 z_n) scaled by 2/pi so its range matches sign's."""
    comp = {"sign_baseline": "sign", "arctan_baseline": "arctan"}.get(kind)
    if comp is None:
        raise ValueError(f"kind must be 'sign_baseline' or 'arctan_baseline', got {kind!r}")
    return control_input(x, estimates, prev, z, t, gains, plant, reference, compensator=comp)


SCENARIO_NAMES = (
    "second-order-stabilize",
    "second-order-track",
    "second-order-uncontrolled",
    "chua-hartley",
    "chua-hartley-uncontrolled",
)


def scenario_by_name(name: str, controller: str | None = None, dt: float | None = None,
                     horizon: float | None = None, **overrides) -> Scenario:
    """CLI-facing factory: map a scenario name plus options to a Scenario."""
    kw = {}
    if dt is not None:
        kw["dt"] = dt
    if horizon is not None:
        kw["horizon"] = horizon
    if name == "second-order-stabilize":
        sc = second_order_scenario(controller or "proposed", tracking=False, **kw, **overrides)
    elif name == "second-order-track":
        sc = second_order_scenario(controller or "proposed", tracking=True, **kw, **overrides)
    elif name == "second-order-uncontrolled":
        sc = second_order_scenario("uncontrolled", tracking=False, **kw, **overrides)
    elif name == "chua-hartley":
        sc = chua_hartley_scenario(controller or "proposed", **kw, **overrides)
    elif name == "chua-hartley-uncontrolled":
        sc = chua_hartley_scenario("uncontrolled", **kw, **overrides)
    else:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    return sc
