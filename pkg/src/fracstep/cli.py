"""Command-line entry points: run, compare, selftest.

    fracstep run second-order-track --controller proposed --out results --plot
    fracstep compare second-order-track -c proposed -c sign -c arctan --out cmp
    fracstep selftest
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .harness import RunConfig, compare as compare_runs, run as run_one
from .scenarios import SCENARIO_NAMES

CONTROLLER_ALIASES = {
    "proposed": "proposed",
    "sign": "sign_baseline",
    "arctan": "arctan_baseline",
    "none": "uncontrolled",
}


def _parse_set(pairs):
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.BadParameter(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = float(value)
    return overrides


def _load_config_file(path):
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise click.BadParameter("config file must hold a JSON object")
    return data


@click.group()
def main():
    """Fractional-order adaptive backstepping simulation harness."""


@main.command("run")
@click.argument("scenario", type=click.Choice(SCENARIO_NAMES))
@click.option("--controller", "-k", type=click.Choice(sorted(CONTROLLER_ALIASES)), default=None,
              help="Controller kind (default: scenario's own).")
@click.option("--dt", type=float, default=None, help="Step size in seconds.")
@click.option("--horizon", type=float, default=None, help="Run length in seconds.")
@click.option("--set", "set_pairs", multiple=True, help="Override key=value (gains, x0_i, a).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with the same keys as the CLI options.")
@click.option("--out", "out_dir", type=click.Path(), default="runs", show_default=True)
@click.option("--plot", is_flag=True, help="Emit SVG charts of z, u and states.")
@click.option("--phase3d", is_flag=True, help="Also emit the 3-D state-space curve (n=3 runs).")
@click.option("--expect-stable", is_flag=True, help="Exit nonzero if the run diverges.")
def run_cmd(scenario, controller, dt, horizon, set_pairs, config_path, out_dir, plot, phase3d, expect_stable):
    """Integrate one scenario and write CSV, metrics and plots."""
    file_cfg = _load_config_file(config_path)
    overrides = dict(file_cfg.get("set", {}))
    overrides.update(_parse_set(set_pairs))
    kind = CONTROLLER_ALIASES[controller] if controller else file_cfg.get("controller")
    cfg = RunConfig(
        scenario=scenario,
        controller=kind,
        dt=dt if dt is not None else file_cfg.get("dt"),
        horizon=horizon if horizon is not None else file_cfg.get("horizon"),
        out_dir=Path(out_dir),
        overrides=overrides,
        expect_stable=expect_stable,
    )
    result = run_one(cfg, plot=plot, phase3d=phase3d)
    click.echo(f"wrote {result.csv_path}")
    click.echo(f"wrote {result.metrics_path}")
    for p in result.plot_paths:
        click.echo(f"wrote {p}")
    for key, value in result.metrics.to_dict().items():
        click.echo(f"  {key}: {value}")
    if result.metrics.diverged:
        click.echo("run diverged (trajectory truncated at the last finite node)")
        if expect_stable:
            sys.exit(1)


@main.command("compare")
@click.argument("scenario", type=click.Choice(SCENARIO_NAMES))
@click.option("--controller", "-c", "controllers", multiple=True, required=True,
              type=click.Choice(sorted(CONTROLLER_ALIASES)),
              help="Two or more controller kinds to run side by side.")
@click.option("--dt", type=float, default=None)
@click.option("--horizon", type=float, default=None)
@click.option("--set", "set_pairs", multiple=True)
@click.option("--out", "out_dir", type=click.Path(), default="runs-compare", show_default=True)
@click.option("--plot", is_flag=True, help="Overlay u, z1, z2 across the runs.")
def compare_cmd(scenario, controllers, dt, horizon, set_pairs, out_dir, plot):
    """Run one scenario under several controllers; aligned metrics table."""
    overrides = _parse_set(set_pairs)
    configs = [
        RunConfig(scenario=scenario, controller=CONTROLLER_ALIASES[c], dt=dt, horizon=horizon,
                  overrides=dict(overrides))
        for c in controllers
    ]
    _results, table = compare_runs(configs, out_dir=Path(out_dir), plot=plot)
    click.echo(table)
    click.echo(f"artifacts in {out_dir}")


@main.command("selftest")
def selftest_cmd():
    """Fast operator and property checks; nonzero exit on any failure."""
    failures = _selftest(click.echo)
    sys.exit(1 if failures else 0)


def _selftest(echo) -> int:
    from .frackernel import FracOrder, GridFunction, MLParams, caputo_derivative, frac_integral, gamma_fn, mittag_leffler
    from .backstep import sg
    from .fdesolve import CommensurateFDE, SolverConfig, solve_abm

    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        if ok:
            echo(f"PASS {name}")
        else:
            failures += 1
            echo(f"FAIL {name} {detail}")

    check("gamma half-integer", abs(gamma_fn(0.5) - math.sqrt(math.pi)) < 1e-14)
    check("gamma factorial", gamma_fn(5) == 24.0)
    e_val = mittag_leffler(MLParams(1.0, 1.0, 1.0))
    check("mittag-leffler exp", abs(e_val - math.e) < 1e-12, f"got {e_val}")

    dt = 1e-3
    t = np.arange(0, 2.0 + dt / 2, dt)
    lin = frac_integral(GridFunction(0.0, dt, t.copy()), FracOrder(0.5))
    exact = gamma_fn(2.0) / gamma_fn(2.5) * t**1.5
    rel = np.abs(lin.values[1:] - exact[1:]) / exact[1:]
    check("fractional integral power rule", rel.max() < 1e-10, f"max rel {rel.max():.2e}")

    f = np.exp(-t)
    order = FracOrder(0.5)
    rt = frac_integral(caputo_derivative(GridFunction(0.0, dt, f), order), order)
    err = np.abs(rt.values - (f - f[0])).max()
    check("derivative/integral round trip", err < 1e-2, f"max abs {err:.2e}")

    rng = np.random.default_rng(0)
    ok = True
    for _ in range(2000):
        x = rng.uniform(-50, 50)
        eps = rng.uniform(1e-6, 10)
        s = sg(x, eps)
        ok &= abs(x) < eps + x * s and -1.0 < s < 1.0
    check("smooth sign-surrogate inequality", ok)

    sys_lin = CommensurateFDE(FracOrder(0.8), 1, lambda tt, xx: -xx)
    tr = solve_abm(sys_lin, np.array([1.0]), SolverConfig(dt=1e-2, t_end=4.0))
    ml = np.array([mittag_leffler(MLParams(0.8, 1.0, -float(tt) ** 0.8)) if tt > 0 else 1.0 for tt in tr.t])
    solver_err = np.abs(tr.states[:, 0] - ml).max()
    check("solver vs Mittag-Leffler decay", solver_err < 5e-3, f"max abs {solver_err:.2e}")

    echo(f"{'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return failures


if __name__ == "__main__":
    main()
