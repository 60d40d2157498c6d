"""Configuration, workflow and artifacts of the ensemble control experiment.

The workflow optimizes one control per objective over a uniform detuning
ensemble: Armijo gradient descent on the expectation objective from a random
start, then the subgradient method on the worst case and the primal-dual
continuation on the avar objective, both warm-started from the expectation
solution.  The literature reference pulse joins the comparison untouched.
(config, seed) -> artifacts is a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .cost import ControlCost, CostMeasure
from .dynamics import Stepper
from .ensemble import ConfigError, Control, ControlGrid, make_uniform_grid
from .objectives import EnsembleTrackingProblem
from .optimize import armijo_gd, primal_dual_avar, subgradient_method
from .qubit import QubitSystem, TerminalInfidelity, reference_control, terminal_overlaps
from .risk import RiskMeasure, evaluate

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "load_config",
    "gaussian_init",
    "run_experiment",
    "write_artifacts",
]

# JSON key -> dataclass attribute for the few short names.
_KEY_TO_ATTR = {"E": "energy", "N": "n_theta", "T": "horizon"}


@dataclass(frozen=True)
class ExperimentConfig:
    energy: float = 1.0          # not stated in the source experiment; see metadata flag
    theta_lo: float = -0.5
    theta_hi: float = 0.5
    n_theta: int = 100
    horizon: float = 20.0
    dt: float = 2.0**-5
    alpha: float = 2.0**-4
    beta: float = 0.95
    seed: int = 3
    init_std: float = 0.1
    armijo_iters: int = 500
    subgrad_a0: float = 2.0**-3
    subgrad_iters: int = 1000
    pd_eps0: float = 0.1
    pd_eps_factor: float = 0.25
    pd_eps_min: float = 1e-5
    pd_outer_tol: float = 1e-4
    pd_max_outer: int = 20
    pd_inner_iters: int = 200
    pd_inner_memory: int = 20
    pd_inner_grad_tol: float = 1e-7
    threads: int = 1
    include_mean_parameter: bool = False
    out_dir: str = "riskctrl-out"

    def __post_init__(self):
        def bad(key, why):
            return ConfigError(f"config key {key!r} {why}")

        if not np.isfinite(self.energy):
            raise bad("E", "must be finite")
        if not (np.isfinite(self.theta_lo) and np.isfinite(self.theta_hi)):
            raise bad("theta_lo/theta_hi", "must be finite")
        if self.theta_lo > self.theta_hi:
            raise bad("theta_lo", "must not exceed theta_hi")
        if self.n_theta < 1:
            raise bad("N", "must be a positive integer")
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise bad("T", "must be positive")
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise bad("dt", "must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise bad("dt", f"must divide the horizon into whole steps, got T/dt={steps!r}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise bad("alpha", "must be nonnegative")
        if not (0.0 < self.beta < 1.0):
            raise bad("beta", "must lie strictly inside (0, 1)")
        if int(self.seed) != self.seed:
            raise bad("seed", "must be an integer")
        if not np.isfinite(self.init_std) or self.init_std < 0:
            raise bad("init_std", "must be nonnegative")
        for key in ("armijo_iters", "subgrad_iters", "pd_max_outer", "pd_inner_iters"):
            if getattr(self, key) < 1:
                raise bad(key, "must be a positive integer")
        if self.subgrad_a0 <= 0:
            raise bad("subgrad_a0", "must be positive")
        for key in ("pd_eps0", "pd_eps_min", "pd_outer_tol", "pd_inner_grad_tol"):
            if getattr(self, key) <= 0:
                raise bad(key, "must be positive")
        if not (0.0 < self.pd_eps_factor < 1.0):
            raise bad("pd_eps_factor", "must lie strictly inside (0, 1)")
        if self.pd_inner_memory < 0:
            raise bad("pd_inner_memory", "must be nonnegative")
        if self.threads < 1:
            raise bad("threads", "must be at least 1")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def grid(self) -> ControlGrid:
        return ControlGrid(self.horizon, self.steps)

    def echo(self) -> dict:
        """Flat JSON-ready dict using the documented config keys; round-trips."""
        attr_to_key = {v: k for k, v in _KEY_TO_ATTR.items()}
        out = {}
        for f in fields(self):
            key = attr_to_key.get(f.name, f.name)
            val = getattr(self, f.name)
            out[key] = val if isinstance(val, (bool, int, str)) else float(val)
        return out


def _coerce(key: str, value, target_type):
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be a boolean")
        return value
    if target_type is int:
        if isinstance(value, bool) or (not isinstance(value, int) and value != int(value)):
            raise ConfigError(f"config key {key!r} must be an integer")
        return int(value)
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number")
        return float(value)
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} must be a string")
        return value
    raise ConfigError(f"config key {key!r} has unsupported type")


def config_from_dict(raw: dict) -> ExperimentConfig:
    field_types = {f.name: f.type for f in fields(ExperimentConfig)}
    type_map = {"float": float, "int": int, "bool": bool, "str": str}
    kwargs = {}
    unknown = []
    for key, value in raw.items():
        attr = _KEY_TO_ATTR.get(key, key)
        if attr not in field_types:
            unknown.append(key)
            continue
        kwargs[attr] = _coerce(key, value, type_map[field_types[attr]])
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**kwargs)


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a flat JSON config; unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return config_from_dict(raw)


def gaussian_init(grid: ControlGrid, std: float, seed: int, channels: int = 1) -> Control:
    """Deterministic Gaussian control start from a counter-based generator.

    Philox keyed by the seed gives identical draws on every platform and is
    independent of thread count by construction.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    values = std * rng.standard_normal((grid.steps, channels))
    return Control(grid, values)


def _control_hash(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype=float).tobytes()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    thetas: np.ndarray
    grid: ControlGrid
    controls: dict = field(default_factory=dict)    # name -> (steps,) array
    overlaps: dict = field(default_factory=dict)    # name -> (scenarios,) array
    summaries: dict = field(default_factory=dict)   # name -> summary dict
    stages: dict = field(default_factory=dict)      # name -> status string
    reports: dict = field(default_factory=dict)
    log_lines: list = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the full workflow; per-stage failures are recorded, not raised.

    Wall-clock timings live only in the in-memory reports: written artifacts
    must be byte-identical across runs, so nothing time-dependent is logged.
    """
    system = QubitSystem(energy=cfg.energy)
    ensemble = make_uniform_grid(cfg.theta_lo, cfg.theta_hi, cfg.n_theta)
    grid = cfg.grid()
    problem = EnsembleTrackingProblem(
        system=system,
        ensemble=ensemble,
        grid=grid,
        integrand=TerminalInfidelity(system.target),
        measure=CostMeasure.terminal(cfg.horizon),
        stepper=Stepper.EXACT_BILINEAR,
        control_cost=ControlCost(cfg.alpha),
        workers=cfg.threads,
    )
    result = ExperimentResult(config=cfg, thetas=ensemble.thetas, grid=grid)
    log = result.log_lines.append
    log(f"config: {json.dumps(cfg.echo(), sort_keys=True)}")
    log("note: field E defaults to 1.0; it is not pinned by the source experiment")

    u0 = gaussian_init(grid, cfg.init_std, cfg.seed).flat()
    log(f"init: gaussian std={cfg.init_std} seed={cfg.seed} sha256={_control_hash(u0)}")

    r_avg = RiskMeasure.expectation()
    r_worst = RiskMeasure.worst_case()
    r_avar = RiskMeasure.avar(cfg.beta)
    u_avg = None

    # Stage 1: expectation objective, Armijo gradient descent from noise.
    try:
        t0 = time.perf_counter()
        u_avg, rep = armijo_gd(problem.oracle(r_avg), u0, max_iters=cfg.armijo_iters)
        rep.info["stage_wall_time"] = time.perf_counter() - t0
        result.reports["avg"] = rep
        result.controls["avg"] = u_avg
        result.stages["avg"] = "ok"
        log(
            f"avg: armijo_gd iters={rep.iterations} objective={rep.objective_history[-1]!r} "
            f"termination={rep.termination} sha256={_control_hash(u_avg)}"
        )
    except Exception as exc:  # noqa: BLE001 - stage status is the error channel
        result.stages["avg"] = f"failed: {exc}"
        log(f"avg: FAILED {exc}")

    # Stage 2: worst case, subgradient method warm-started at the avg solution.
    if u_avg is not None:
        try:
            warm = _control_hash(u_avg)
            log(f"worst: warm start from avg sha256={warm} (check: {warm == _control_hash(result.controls['avg'])})")
            t0 = time.perf_counter()
            u_worst, rep = subgradient_method(
                problem.oracle(r_worst), u_avg, max_iters=cfg.subgrad_iters, a0=cfg.subgrad_a0
            )
            rep.info["stage_wall_time"] = time.perf_counter() - t0
            result.reports["worst"] = rep
            result.controls["worst"] = u_worst
            result.stages["worst"] = "ok"
            log(
                f"worst: subgradient iters={rep.iterations} "
                f"best={rep.info['best_objective']!r} sha256={_control_hash(u_worst)}"
            )
        except Exception as exc:  # noqa: BLE001
            result.stages["worst"] = f"failed: {exc}"
            log(f"worst: FAILED {exc}")
    else:
        result.stages["worst"] = "skipped: avg stage failed"

    # Stage 3: avar, primal-dual continuation warm-started at the avg solution.
    if u_avg is not None:
        try:
            warm = _control_hash(u_avg)
            log(f"avar: warm start from avg sha256={warm} (check: {warm == _control_hash(result.controls['avg'])})")
            t0 = time.perf_counter()
            u_avar, t_star, ident, rep = primal_dual_avar(
                problem,
                u_avg,
                beta=cfg.beta,
                eps0=cfg.pd_eps0,
                eps_factor=cfg.pd_eps_factor,
                eps_min=cfg.pd_eps_min,
                outer_tol=cfg.pd_outer_tol,
                max_outer=cfg.pd_max_outer,
                inner_max_iters=cfg.pd_inner_iters,
                inner_memory=cfg.pd_inner_memory,
                inner_grad_tol=cfg.pd_inner_grad_tol,
            )
            rep.info["stage_wall_time"] = time.perf_counter() - t0
            result.reports["avar"] = rep
            result.controls["avar"] = u_avar
            result.stages["avar"] = "ok"
            log(
                f"avar: primal_dual outers={rep.iterations} t_star={t_star!r} "
                f"objective={rep.objective_history[-1]!r} termination={rep.termination} "
                f"sha256={_control_hash(u_avar)}"
            )
        except Exception as exc:  # noqa: BLE001
            result.stages["avar"] = f"failed: {exc}"
            log(f"avar: FAILED {exc}")
    else:
        result.stages["avar"] = "skipped: avg stage failed"

    # Stage 4: untuned literature pulse sampled at interval left endpoints.
    result.controls["ref"] = reference_control(grid.left_endpoints(), energy=cfg.energy)
    result.stages["ref"] = "ok"
    log(f"ref: sampled sha256={_control_hash(result.controls['ref'])}")

    # Optional naive method: optimize the mean-parameter scenario alone.
    if cfg.include_mean_parameter:
        try:
            theta_bar = float(ensemble.weights @ ensemble.thetas)
            single = EnsembleTrackingProblem(
                system=system,
                ensemble=make_uniform_grid(theta_bar, theta_bar, 1),
                grid=grid,
                integrand=TerminalInfidelity(system.target),
                measure=CostMeasure.terminal(cfg.horizon),
                stepper=Stepper.EXACT_BILINEAR,
                control_cost=ControlCost(cfg.alpha),
                workers=cfg.threads,
            )
            u_mp, rep = armijo_gd(single.oracle(r_avg), u0, max_iters=cfg.armijo_iters)
            result.reports["meanparam"] = rep
            result.controls["meanparam"] = u_mp
            result.stages["meanparam"] = "ok"
            log(f"meanparam: theta_bar={theta_bar!r} sha256={_control_hash(u_mp)}")
        except Exception as exc:  # noqa: BLE001
            result.stages["meanparam"] = f"failed: {exc}"
            log(f"meanparam: FAILED {exc}")

    # Evaluation: terminal overlaps per scenario and method summaries.
    stationarity_measures = {"avg": r_avg, "worst": r_worst, "avar": r_avar}
    for name, u_vals in result.controls.items():
        overlaps = terminal_overlaps(system, ensemble.thetas, u_vals, grid.dt)
        result.overlaps[name] = overlaps
        infidelities = 1.0 - overlaps**2
        u_ctrl = Control.from_flat(grid, u_vals)
        reg = problem.reg_value(u_vals)
        rm = stationarity_measures.get(name, r_avg)
        summary = {
            "objective": evaluate(rm, infidelities, ensemble.weights) + reg,
            "objective_kind": rm.kind,
            "mean_infidelity": evaluate(r_avg, infidelities, ensemble.weights),
            "worst_infidelity": evaluate(r_worst, infidelities, ensemble.weights),
            "avar_infidelity": evaluate(r_avar, infidelities, ensemble.weights),
            "min_overlap": float(np.min(overlaps)),
            "control_penalty": reg,
        }
        if name in stationarity_measures and name in result.reports:
            summary["stationarity"] = problem.stationarity(rm, u_vals)
            rep = result.reports[name]
            summary["iterations"] = rep.iterations
            summary["termination"] = rep.termination
            if name == "avar":
                summary["t_star"] = rep.info["t_star"]
        result.summaries[name] = summary
        log(f"eval {name}: {json.dumps(summary, sort_keys=True, default=str)}")

    return result


def _fmt(x: float) -> str:
    """Full-precision decimal text that round-trips the double exactly."""
    return repr(float(x))


def write_artifacts(result: ExperimentResult, out_dir) -> None:
    """Write final_state.csv, controls.csv, summary.json and run.log."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    method_order = [m for m in ("avg", "worst", "avar", "ref", "meanparam") if m in result.overlaps]

    path = os.path.join(out_dir, "final_state.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("theta," + ",".join(f"overlap_{m}" for m in method_order) + "\n")
        for i, theta in enumerate(result.thetas):
            row = [_fmt(theta)] + [_fmt(result.overlaps[m][i]) for m in method_order]
            fh.write(",".join(row) + "\n")

    path = os.path.join(out_dir, "controls.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t," + ",".join(f"u_{m}" for m in method_order) + "\n")
        times = result.grid.left_endpoints()
        for j, t in enumerate(times):
            row = [_fmt(t)] + [_fmt(result.controls[m][j]) for m in method_order]
            fh.write(",".join(row) + "\n")

    summary = {
        "config": result.config.echo(),
        "seed": int(result.config.seed),
        "energy_default_flag": "E not pinned by the source experiment; default 1.0",
        "versions": {
            "riskctrl": _package_version(),
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "stages": result.stages,
        "methods": result.summaries,
    }
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    path = os.path.join(out_dir, "run.log")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in result.log_lines:
            fh.write(line + "\n")


def _package_version() -> str:
    from . import __version__

    return __version__
