"""Run configuration, trajectory persistence, metrics and plots.

``run`` wires a scenario into the closed loop, integrates it, attaches the
diagnostic channels (virtual errors, control input, disturbance, candidate
Lyapunov value with its post-hoc error-bound reconstruction) and persists
CSV + metrics JSON.  ``compare`` aligns several runs of the same scenario
and grid into one table with overlay plots.

CSV column contract (fixed, header mandatory):
    t, x1..xn, z1..zn, u, D_hat, rho_hat_1.., theta_hat_1.., d, V_n
Values are written with 17 significant digits so a read-back is
bit-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backstep import ClosedLoop, ControllerGains
from .fdesolve import SolverConfig, Trajectory, solve_abm
from .frackernel import GridFunction, caputo_derivative
from .scenarios import SCENARIO_NAMES, Scenario, scenario_by_name

__all__ = [
    "RunConfig",
    "MetricsReport",
    "RunResult",
    "run",
    "compare",
    "emit_plots",
    "emit_phase3d",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "csv_columns",
]

SETTLE_THRESHOLD = 0.05
CHATTER_WINDOW = (0.4, 0.9)  # fraction of horizon, transients excluded
TAIL_FRACTION = 0.2


class OverrideKeyError(ValueError):
    """Unknown run-config override key."""


@dataclass
class RunConfig:
    """One run: scenario name, controller kind, grid, outputs, overrides.

    ``overrides`` is a flat map for gains, initial state and the
    boundary-layer decay rate, e.g. {"c1": 25.0, "x0_2": 0.1, "a": 0.05}.
    """

    scenario: str
    controller: Optional[str] = None
    dt: Optional[float] = None
    horizon: Optional[float] = None
    out_dir: Optional[Path] = None
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    expect_stable: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIO_NAMES:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIO_NAMES}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)

    def label(self) -> str:
        kind = self.controller or "default"
        return f"{self.scenario}__{kind}"


@dataclass
class MetricsReport:
    tail_tracking_error: float
    rms_control: float
    chattering_index: float
    settle_time: Optional[float]
    diverged: bool

    def to_dict(self) -> dict:
        return {
            "tail_tracking_error": self.tail_tracking_error,
            "rms_control": self.rms_control,
            "chattering_index": self.chattering_index,
            "settle_time": self.settle_time,
            "diverged": self.diverged,
        }


@dataclass
class RunResult:
    config: RunConfig
    scenario: Scenario
    trajectory: Trajectory
    metrics: MetricsReport
    csv_path: Optional[Path] = None
    metrics_path: Optional[Path] = None
    plot_paths: list = field(default_factory=list)


def _valid_override_keys(n: int) -> list:
    keys = ["a", "eta"]
    keys += [f"c{i}" for i in range(1, n + 1)]
    keys += [f"gamma{i}" for i in range(1, n + 1)]
    keys += [f"lambda{i}" for i in range(1, n)]
    keys += [f"x0_{i}" for i in range(1, n + 1)]
    return keys


def _apply_overrides(sc: Scenario, overrides: dict) -> Scenario:
    if not overrides:
        return sc
    n, p = sc.plant.n, sc.plant.p
    valid = _valid_override_keys(n)
    unknown = sorted(set(overrides) - set(valid))
    if unknown:
        raise OverrideKeyError(
            f"unknown override keys {unknown}; valid keys for {sc.name!r}: {valid}"
        )
    g = sc.gains
    c = g.c.copy()
    lam = g.lam.copy()
    gamma_scales = [float(G[0, 0]) for G in g.Gamma]
    eta, a = g.eta, g.a
    x0 = sc.x0.copy()
    for key, value in overrides.items():
        value = float(value)
        if key == "a":
            a = value
        elif key == "eta":
            eta = value
        elif key.startswith("c"):
            c[int(key[1:]) - 1] = value
        elif key.startswith("gamma"):
            gamma_scales[int(key[5:]) - 1] = value
        elif key.startswith("lambda"):
            lam[int(key[6:]) - 1] = value
        elif key.startswith("x0_"):
            x0[int(key[3:]) - 1] = value
    gains = ControllerGains.scaled_identity(n, p, c, gamma_scales, lam, eta, a)
    return replace(sc, gains=gains, x0=x0)


def _build_scenario(config: RunConfig) -> Scenario:
    sc = scenario_by_name(config.scenario, config.controller, config.dt, config.horizon)
    return _apply_overrides(sc, config.overrides)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def attach_diagnostics(tr: Trajectory, sc: Scenario, cl: ClosedLoop) -> None:
    """Fill tr.aux with z_i, u, d, the virtual controls, stage partials,
    the reconstructed approximation errors and the candidate Lyapunov value."""
    n, p = sc.plant.n, sc.plant.p
    t = tr.t
    n_nodes = t.size
    controller = cl.controller
    if controller is None:
        # estimators are frozen in uncontrolled runs; evaluate the stage
        # chain with the recorded (zero) estimates purely for diagnostics
        from .backstep import BacksteppingController

        controller = BacksteppingController(sc.plant, sc.gains, sc.reference, "smooth")

    z = np.empty((n_nodes, n))
    u = np.empty(n_nodes)
    alpha = np.empty((n_nodes, n - 1))
    d_dx = [np.empty((n_nodes, i)) for i in range(1, n)]
    d_dth = [[np.empty((n_nodes, p * j)) for j in range(1, i + 1)] for i in range(1, n)]
    th_rate = [np.empty((n_nodes, p * i)) for i in range(1, n + 1)]
    dist = np.empty(n_nodes)

    uncontrolled = cl.kind == "uncontrolled"
    for k in range(n_nodes):
        x, est = cl.split(tr.states[k])
        ev = controller.evaluate(t[k], x, est)
        z[k] = ev.z
        u[k] = 0.0 if uncontrolled else ev.u
        dist[k] = sc.plant.disturbance(t[k])
        for i in range(1, n):
            se = ev.stages[i - 1]
            alpha[k, i - 1] = se.value
            d_dx[i - 1][k] = se.d_dx
            for j in range(1, i + 1):
                d_dth[i - 1][j - 1][k] = se.d_dtheta[j - 1]
        for i in range(1, n + 1):
            th_rate[i - 1][k] = np.zeros(p * i) if uncontrolled else ev.rates.theta[i - 1]

    aux = tr.aux
    for i in range(1, n + 1):
        aux[f"x{i}"] = tr.states[:, i - 1].copy()
        aux[f"z{i}"] = z[:, i - 1]
    aux["u"] = u
    aux["d"] = dist
    for i in range(1, n):
        aux[f"alpha{i}"] = alpha[:, i - 1]

    # estimator channels straight from the augmented state
    off = n
    flat_cols = []
    for i in range(1, n + 1):
        for j_ in range(p * i):
            flat_cols.append(tr.states[:, off + j_].copy())
        off += p * i
    for idx, col in enumerate(flat_cols, start=1):
        aux[f"theta_hat_{idx}"] = col
    for i in range(1, n):
        aux[f"rho_hat_{i}"] = tr.states[:, off + i - 1].copy()
    aux["D_hat"] = tr.states[:, off + n - 1].copy()

    # reconstructed approximation errors rho_i(t): what the stage-i
    # derivative shortcut misses relative to an L1 derivative of alpha_i
    if n_nodes < 2:
        for i in range(1, n):
            aux[f"rho_rec_{i}"] = np.zeros(n_nodes)
            aux[f"rho_bar_{i}"] = np.zeros(n_nodes)
        aux["V_n"] = np.zeros(n_nodes)
        return

    dt = tr.dt
    rho_rec = np.empty((n_nodes, n - 1))
    plant_rates = np.empty((n_nodes, n - 1))
    xall = tr.states[:, :n]
    for j in range(1, n):
        phi_j = np.array([sc.plant.phi_value(j, xall[k]) for k in range(n_nodes)])
        plant_rates[:, j - 1] = xall[:, j] + phi_j @ sc.plant.theta_true[j - 1]
    for i in range(1, n):
        da = caputo_derivative(GridFunction(t[0], dt, aux[f"alpha{i}"]), sc.alpha).values
        shortcut = np.zeros(n_nodes)
        for j in range(1, i + 1):
            shortcut += d_dx[i - 1][:, j - 1] * plant_rates[:, j - 1]
            shortcut += np.einsum("kj,kj->k", d_dth[i - 1][j - 1], th_rate[j - 1])
        rho_rec[:, i - 1] = shortcut - da
        aux[f"rho_rec_{i}"] = rho_rec[:, i - 1]

    # candidate Lyapunov value with ground-truth parameters, the post-hoc
    # bounds rho_bar = max_t |rho_i|, and the true disturbance bound
    theta_v = [
        np.concatenate([sc.plant.theta_true[j - 1] for j in range(i, 0, -1)])
        for i in range(1, n + 1)
    ]
    rho_bar = np.max(np.abs(rho_rec), axis=0)
    D_true = sc.disturbance.bound()
    gains = sc.gains
    Gamma_inv = [np.linalg.inv(G) for G in gains.Gamma]
    V = 0.5 * np.sum(z**2, axis=1)
    off = n
    for i in range(1, n + 1):
        th = tr.states[:, off : off + p * i]
        err = theta_v[i - 1][None, :] - th
        V += 0.5 * np.einsum("kj,jl,kl->k", err, Gamma_inv[i - 1], err)
        off += p * i
    for i in range(1, n):
        rho_tilde = rho_bar[i - 1] - tr.states[:, off + i - 1]
        V += rho_tilde**2 / (2.0 * gains.lam[i - 1])
        aux[f"rho_bar_{i}"] = np.full(n_nodes, rho_bar[i - 1])
    D_tilde = D_true - tr.states[:, off + n - 1]
    V += D_tilde**2 / (2.0 * gains.eta)
    aux["V_n"] = V


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def compute_metrics(tr: Trajectory, horizon: float, n: int) -> MetricsReport:
    t = tr.t
    if tr.diverged or t.size < 3:
        return MetricsReport(math.inf, math.inf, math.inf, None, True)
    z = np.column_stack([tr.channel(f"z{i}") for i in range(1, n + 1)])
    u = tr.channel("u")

    tail = t >= (1.0 - TAIL_FRACTION) * horizon
    tail_err = float(np.abs(z[tail, 0]).max()) if np.any(tail) else math.inf
    rms = float(np.sqrt(np.mean(u**2)))
    w = (t[:-1] >= CHATTER_WINDOW[0] * horizon) & (t[:-1] <= CHATTER_WINDOW[1] * horizon)
    chat = float(np.abs(np.diff(u))[w].sum()) if np.any(w) else 0.0

    below = np.all(np.abs(z) < SETTLE_THRESHOLD, axis=1)
    settle: Optional[float]
    if not below[-1]:
        settle = None
    else:
        above = np.flatnonzero(~below)
        settle = float(t[above[-1] + 1]) if above.size else float(t[0])
    return MetricsReport(tail_err, rms, chat, settle, False)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def csv_columns(n: int, p: int) -> list:
    cols = ["t"]
    cols += [f"x{i}" for i in range(1, n + 1)]
    cols += [f"z{i}" for i in range(1, n + 1)]
    cols += ["u", "D_hat"]
    cols += [f"rho_hat_{i}" for i in range(1, n)]
    cols += [f"theta_hat_{i}" for i in range(1, p * n * (n + 1) // 2 + 1)]
    cols += ["d", "V_n"]
    return cols


def write_trajectory_csv(path: Path, tr: Trajectory, n: int, p: int) -> Path:
    cols = csv_columns(n, p)
    data = {"t": tr.t}
    data.update({c: tr.channel(c) for c in cols if c != "t"})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for k in range(tr.t.size):
            writer.writerow([f"{data[c][k]:.17g}" for c in cols])
    return path


def read_trajectory_csv(path: Path) -> dict:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    arr = np.array(rows)
    return {name: arr[:, i] for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------


def _plot_backend():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "fracstep"
    return plt


def emit_plots(tr: Trajectory, channel_sets: Sequence[Sequence[str]], out_dir: Path, stem: str) -> list:
    """One SVG line chart per channel set, deterministic for equal inputs."""
    if not channel_sets:
        raise ValueError("no channel sets requested")
    plt = _plot_backend()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for idx, channels in enumerate(channel_sets):
        channels = list(channels)
        if not channels:
            raise ValueError("empty channel list")
        for ch in channels:
            if ch not in tr.aux:
                raise KeyError(f"unknown channel {ch!r}; available: {sorted(tr.aux)}")
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for ch in channels:
            ax.plot(tr.t, tr.channel(ch), label=ch, linewidth=1.0)
        ax.set_xlabel("t [s]")
        ax.legend(loc="best")
        ax.grid(True, alpha=0.3)
        path = out_dir / f"{stem}__{'_'.join(channels)}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def emit_phase3d(tr: Trajectory, out_dir: Path, stem: str) -> Path:
    """State-space polyline x1-x2-x3 for third-order runs."""
    if tr.states.shape[1] < 3 or "x3" not in tr.aux:
        raise ValueError("phase-space plot needs a third-order run")
    plt = _plot_backend()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig = plt.figure(figsize=(6.4, 5.2))
    ax = fig.add_subplot(projection="3d")
    ax.plot(tr.channel("x1"), tr.channel("x2"), tr.channel("x3"), linewidth=0.6)
    ax.scatter([tr.channel("x1")[0]], [tr.channel("x2")[0]], [tr.channel("x3")[0]], color="green", s=18)
    ax.scatter([0.0], [0.0], [0.0], color="red", s=18)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_zlabel("x3")
    path = out_dir / f"{stem}__phase3d.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def run(config: RunConfig, plot: bool = False, phase3d: bool = False) -> RunResult:
    """Integrate one configured scenario and persist its artifacts."""
    sc = _build_scenario(config)
    cl = sc.closed_loop()
    solver_cfg = SolverConfig(dt=sc.dt, t_end=sc.horizon)
    tr = solve_abm(cl.as_fde(sc.disturbance.onsets()), cl.initial_state(sc.x0), solver_cfg)
    attach_diagnostics(tr, sc, cl)
    metrics = compute_metrics(tr, sc.horizon, sc.plant.n)

    result = RunResult(config, sc, tr, metrics)
    if config.out_dir is not None:
        label = config.label()
        result.csv_path = write_trajectory_csv(
            config.out_dir / f"{label}.csv", tr, sc.plant.n, sc.plant.p
        )
        result.metrics_path = config.out_dir / f"{label}__metrics.json"
        result.metrics_path.write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
        if plot:
            sets = [[f"z{i}" for i in range(1, sc.plant.n + 1)], ["u"],
                    [f"x{i}" for i in range(1, sc.plant.n + 1)]]
            result.plot_paths = emit_plots(tr, sets, config.out_dir, label)
        if phase3d and sc.plant.n == 3:
            result.plot_paths.append(emit_phase3d(tr, config.out_dir, label))
    return result


class ComparisonMismatchError(ValueError):
    """Compared runs must share scenario and grid."""


def compare(configs: Sequence[RunConfig], out_dir: Optional[Path] = None, plot: bool = False):
    """Run several configs of one scenario/grid; aligned metrics table."""
    if len(configs) < 2:
        raise ComparisonMismatchError("compare needs at least two run configs")
    scn = {c.scenario for c in configs}
    dts = {c.dt for c in configs}
    hzs = {c.horizon for c in configs}
    if len(scn) > 1 or len(dts) > 1 or len(hzs) > 1:
        raise ComparisonMismatchError(
            f"compared configs must share scenario, dt and horizon; got scenarios={sorted(scn)}, dt={dts}, horizon={hzs}"
        )
    results = [run(c) for c in configs]

    labels = [c.controller or "default" for c in configs]
    fields = ["tail_tracking_error", "rms_control", "chattering_index", "settle_time", "diverged"]
    lines = ["metric".ljust(22) + "".join(lb.rjust(20) for lb in labels)]
    for f_ in fields:
        row = f_.ljust(22)
        for r in results:
            v = getattr(r.metrics, f_)
            row += (f"{v:.6g}" if isinstance(v, float) else str(v)).rjust(20)
        lines.append(row)
    table = "\n".join(lines)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "comparison.txt").write_text(table + "\n")
        with (out_dir / "comparison.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric"] + labels)
            for f_ in fields:
                writer.writerow([f_] + [repr(getattr(r.metrics, f_)) for r in results])
        if plot:
            plt = _plot_backend()
            for ch in ("u", "z1", "z2"):
                fig, ax = plt.subplots(figsize=(7.0, 4.2))
                for lb, r in zip(labels, results):
                    ax.plot(r.trajectory.t, r.trajectory.channel(ch), label=lb, linewidth=0.9)
                ax.set_xlabel("t [s]")
                ax.set_ylabel(ch)
                ax.legend(loc="best")
                ax.grid(True, alpha=0.3)
                fig.savefig(out_dir / f"overlay__{ch}.svg", format="svg", metadata={"Date": None})
                plt.close(fig)
    return results, table
