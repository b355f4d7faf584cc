"""fracstep: fractional-order strict-feedback control simulation toolkit.

Layers, bottom up:

- ``frackernel``: Gamma / Mittag-Leffler evaluation plus fractional
  integral and Caputo derivative on uniform grids.
- ``fdesolve``: fixed-step initial-value solvers for commensurate Caputo
  systems (Adams predictor-corrector, Grunwald-Letnikov cross-check).
- ``backstep``: smooth adaptive backstepping controller with forward-mode
  exact partial derivatives and fractional adaptive laws.
- ``scenarios``: the concrete second-order and Chua-Hartley study plants,
  disturbances and baseline controller variants.
- ``harness``: run/compare drivers, CSV + metrics persistence, plots.
"""

from .frackernel import (
    ConvergenceError,
    FracOrder,
    GammaPoleError,
    GridFunction,
    MLParams,
    caputo_derivative,
    caputo_sinusoid,
    frac_integral,
    gamma_fn,
    mittag_leffler,
)
from .fdesolve import CommensurateFDE, SolverConfig, Trajectory, solve_abm, solve_gl
from .backstep import (
    AdaptiveState,
    ClosedLoop,
    ControllerGains,
    PlantModel,
    ReferenceSignal,
    Regressor,
    SingularGainError,
    StageEval,
    adaptive_rates,
    build_phi_v,
    build_zeta,
    control_input,
    epsilon_fn,
    eval_stage1,
    eval_stage_i,
    sg,
)
from .scenarios import (
    DisturbanceSpec,
    Scenario,
    baseline_control_input,
    chua_hartley_scenario,
    scenario_by_name,
    second_order_scenario,
)

__version__ = "0.1.0"
