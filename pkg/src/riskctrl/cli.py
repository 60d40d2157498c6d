"""Command line entry points.

Subcommands:
  run       execute the ensemble control workflow and write artifacts
  check     fast built-in invariant suite (no config needed)
  gradcheck finite-difference audit of the adjoint gradient for a config

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .cost import ControlCost, CostMeasure
from .dynamics import Stepper
from .ensemble import ConfigError, make_uniform_grid
from .experiment import ExperimentConfig, gaussian_init, load_config, run_experiment, write_artifacts
from .objectives import EnsembleTrackingProblem
from .qubit import QubitSystem, TerminalInfidelity, pauli_expm
from .risk import RiskMeasure, evaluate, risk_identifier

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskctrl", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment workflow")
    p_run.add_argument("--config", required=True, help="path to a flat JSON config file")
    p_run.add_argument("--out", required=True, help="output directory for artifacts")
    p_run.add_argument("--threads", type=int, default=None, help="worker threads for scenario loops")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")

    sub.add_parser("check", help="run the built-in invariant suite")

    p_grad = sub.add_parser("gradcheck", help="finite-difference audit of the gradient")
    p_grad.add_argument("--config", required=True, help="path to a flat JSON config file")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {"out_dir": args.out}
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = dataclasses.replace(cfg, **overrides)

    result = run_experiment(cfg)
    write_artifacts(result, cfg.out_dir)
    failed = [name for name, status in result.stages.items() if status.startswith("failed")]
    for name, status in result.stages.items():
        print(f"stage {name}: {status}")
    print(f"artifacts written to {cfg.out_dir}")
    if failed:
        print(f"numerical failure in stages: {failed}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _check_pauli(rng) -> str | None:
    from scipy.linalg import expm as dense_expm

    from .qubit import SIGMA_X, SIGMA_Y, SIGMA_Z

    worst = 0.0
    for _ in range(200):
        c0 = rng.normal()
        c = rng.normal(size=3) * 10.0 ** rng.integers(-9, 1)
        dt = 10.0 ** rng.uniform(-3, 0)
        got = pauli_expm(c0, c, dt)
        ham = c0 * np.eye(2) + c[0] * SIGMA_X + c[1] * SIGMA_Y + c[2] * SIGMA_Z
        ref = dense_expm(-1j * dt * ham)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return None if worst <= 1e-12 else f"pauli_expm mismatch {worst:.3e}"


def _check_unitarity() -> str | None:
    from .qubit import propagate_states

    system = QubitSystem()
    ensemble = make_uniform_grid(-0.5, 0.5, 20)
    rng = np.random.Generator(np.random.Philox(key=7))
    u = rng.normal(size=160)
    states = propagate_states(system, ensemble.thetas, u, dt=0.125)
    drift = np.max(np.abs(np.linalg.norm(states, axis=2) - 1.0))
    return None if drift <= 1e-12 else f"unitarity drift {drift:.3e}"


def _check_gradient() -> str | None:
    problem = _default_problem(n_theta=6, steps=32, horizon=4.0)
    rng = np.random.Generator(np.random.Philox(key=11))
    u = 0.2 * rng.standard_normal(32)
    measure = RiskMeasure.expectation()
    _, grad, _ = problem.risk_gradient(measure, u)
    h = 1e-6
    worst = 0.0
    for idx in [0, 7, 19, 31]:
        e = np.zeros_like(u)
        e[idx] = h
        fd = (problem.objective(measure, u + e) - problem.objective(measure, u - e)) / (2 * h)
        denom = max(1.0, abs(fd))
        worst = max(worst, abs(fd - grad[idx]) / denom)
    return None if worst <= 1e-6 else f"gradient FD mismatch {worst:.3e}"


def _check_avar_duality(rng) -> str | None:
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 12))
        costs = rng.normal(size=n)
        w = rng.random(size=n) + 0.01
        w = w / w.sum()
        beta = float(rng.uniform(0.05, 0.95))
        measure = RiskMeasure.avar(beta)
        val = evaluate(measure, costs, w)
        ident = risk_identifier(measure, costs, w)
        gap = abs(float(np.dot(w * ident.values, costs)) - val)
        worst = max(worst, gap)
    return None if worst <= 1e-10 else f"avar duality gap {worst:.3e}"


def _check_determinism() -> str | None:
    cfg = ExperimentConfig(
        n_theta=8, horizon=2.0, dt=0.125, armijo_iters=8, subgrad_iters=8,
        pd_max_outer=2, pd_inner_iters=8, out_dir="unused",
    )
    import hashlib

    def run_hash(threads):
        c = dataclasses.replace(cfg, threads=threads)
        res = run_experiment(c)
        payload = b"".join(np.ascontiguousarray(res.controls[m]).tobytes() for m in sorted(res.controls))
        payload += b"".join(np.ascontiguousarray(res.overlaps[m]).tobytes() for m in sorted(res.overlaps))
        return hashlib.sha256(payload).hexdigest()

    h1, h2, h4 = run_hash(1), run_hash(1), run_hash(4)
    if h1 != h2:
        return "determinism: repeated runs differ"
    if h1 != h4:
        return "determinism: thread count changes results"
    return None


def _default_problem(n_theta: int, steps: int, horizon: float) -> EnsembleTrackingProblem:
    system = QubitSystem()
    grid_cfg = ExperimentConfig(n_theta=n_theta, horizon=horizon, dt=horizon / steps)
    return EnsembleTrackingProblem(
        system=system,
        ensemble=make_uniform_grid(-0.5, 0.5, n_theta),
        grid=grid_cfg.grid(),
        integrand=TerminalInfidelity(system.target),
        measure=CostMeasure.terminal(horizon),
        stepper=Stepper.EXACT_BILINEAR,
        control_cost=ControlCost(2.0**-4),
    )


def _cmd_check() -> int:
    rng = np.random.Generator(np.random.Philox(key=2024))
    checks = [
        ("pauli step vs dense matrix exponential", lambda: _check_pauli(rng)),
        ("unit norm along trajectories", _check_unitarity),
        ("adjoint gradient vs finite differences", _check_gradient),
        ("avar identifier zero duality gap", lambda: _check_avar_duality(rng)),
        ("deterministic across runs and threads", _check_determinism),
    ]
    failures = 0
    for label, fn in checks:
        err = fn()
        status = "ok" if err is None else f"FAIL ({err})"
        print(f"check {label}: {status}")
        failures += err is not None
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


def _cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    system = QubitSystem(energy=cfg.energy)
    problem = EnsembleTrackingProblem(
        system=system,
        ensemble=make_uniform_grid(cfg.theta_lo, cfg.theta_hi, cfg.n_theta),
        grid=cfg.grid(),
        integrand=TerminalInfidelity(system.target),
        measure=CostMeasure.terminal(cfg.horizon),
        stepper=Stepper.EXACT_BILINEAR,
        control_cost=ControlCost(cfg.alpha),
        workers=cfg.threads,
    )
    u = gaussian_init(cfg.grid(), cfg.init_std, cfg.seed).flat()
    measure = RiskMeasure.expectation()
    _, grad, _ = problem.risk_gradient(measure, u)
    rng = np.random.Generator(np.random.Philox(key=int(cfg.seed) + 1))
    coords = rng.choice(u.size, size=min(10, u.size), replace=False)
    h = 1e-5
    worst = 0.0
    for idx in sorted(int(i) for i in coords):
        e = np.zeros_like(u)
        e[idx] = h
        fd = (problem.objective(measure, u + e) - problem.objective(measure, u - e)) / (2 * h)
        rel = abs(fd - grad[idx]) / max(1.0, abs(fd))
        worst = max(worst, rel)
        print(f"coordinate {idx}: adjoint={float(grad[idx])!r} fd={float(fd)!r} rel_err={rel:.3e}")
    print(f"worst relative error: {worst:.3e}")
    if not np.isfinite(worst) or worst > 1e-6:
        print("gradcheck failed: adjoint and finite differences disagree", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check()
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
