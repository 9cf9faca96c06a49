"""Experiment configuration, Monte-Carlo orchestration and bound verification.

A single JSON config describes the problem, the methods to run, the noise
model and the replica count. ``run_experiment`` executes every
(method, replica) cell, optionally across a process pool, and writes one
ensemble CSV per method plus a manifest with every resolved constant
needed to recompute the bounds. ``verify_experiment`` re-runs the cells
and compares the measured ergodic quantities against the closed-form
bound right-hand sides.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from monozero import __version__
from monozero.errors import ConfigError, DivergenceError
from monozero.metrics import (EnsembleSummary, RunRecord, aggregate,
                              write_ensemble_csv)
from monozero.operators import (OperatorSpec, bilinear_problem,
                                rotation_operator, strong_rotation_operator)
from monozero.oracle import NOISE_KINDS, NoiseModel, SeedSpec
from monozero.sde import DiffusionSpec, ParamSchedule, continuous_bounds, \
    initial_anchor_energy, simulate
from monozero.solvers import SolverConfig, eg_bound, ogda_bound, run_eg, \
    run_forward, run_ogda

PROBLEMS = {
    "bilinear": "saddle operator of the bilinear-quadratic benchmark game (size 2n)",
    "rotation": "plane rotation by pi/2; monotone with purely rotational dynamics",
    "identity-strong": "identity plus rotation blocks; strongly monotone, modulus 1",
}

SOLVER_METHODS = ("ogda", "eg", "forward")
ALL_METHODS = SOLVER_METHODS + ("sde",)


@dataclass
class ScheduleConfig:
    kind: str = "constant"
    up: float = 1.0
    low: float = 1.0

    def to_dict(self):
        return {"kind": self.kind, "up": self.up, "low": self.low}


@dataclass
class SdeConfig:
    mu: ScheduleConfig = field(default_factory=ScheduleConfig)
    gamma: ScheduleConfig = field(default_factory=ScheduleConfig)
    sigma_star: float = 0.0
    envelope: str = "constant"
    power: float = 1.0
    horizon: float = 10.0
    step: float = 0.01

    def to_dict(self):
        return {"mu": self.mu.to_dict(), "gamma": self.gamma.to_dict(),
                "sigma_star": self.sigma_star, "envelope": self.envelope,
                "power": self.power, "horizon": self.horizon, "step": self.step}

    def schedule(self) -> ParamSchedule:
        return ParamSchedule(mu_kind=self.mu.kind, mu_up=self.mu.up, mu_low=self.mu.low,
                             gamma_kind=self.gamma.kind, gamma_up=self.gamma.up,
                             gamma_low=self.gamma.low)

    def diffusion(self, n: int) -> DiffusionSpec:
        return DiffusionSpec.isotropic(n, self.sigma_star, envelope=self.envelope,
                                       power=self.power)


@dataclass
class ExperimentConfig:
    """Full description of one experiment; round-trips losslessly through JSON."""

    problem: str = "bilinear"
    n: int = 10
    methods: list = field(default_factory=lambda: ["ogda", "eg"])
    iterations: int = 1000
    gamma: dict = field(default_factory=dict)  # per-method; missing -> default rule
    x0: list | None = None                     # None -> zeros
    x1: list | None = None                     # None -> x0 (bound RHS stays deterministic)
    noise: NoiseModel = field(default_factory=NoiseModel)
    replicas: int = 1
    master_seed: int = 0
    record_stride: int = 1
    sde: SdeConfig | None = None
    verify_checkpoints: int = 10
    verify_solver_checks: int = 50

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "n": self.n,
            "methods": list(self.methods),
            "iterations": self.iterations,
            "gamma": dict(self.gamma),
            "x0": self.x0,
            "x1": self.x1,
            "noise": {"kind": self.noise.kind, "sigma_star": self.noise.sigma_star,
                      "decay_std": self.noise.decay_std},
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "record_stride": self.record_stride,
            "sde": self.sde.to_dict() if self.sde is not None else None,
            "verify_checkpoints": self.verify_checkpoints,
            "verify_solver_checks": self.verify_solver_checks,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {"problem", "n", "methods", "iterations", "gamma", "x0", "x1",
                 "noise", "replicas", "master_seed", "record_stride", "sde",
                 "verify_checkpoints", "verify_solver_checks"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        noise = kwargs.get("noise")
        if isinstance(noise, dict):
            try:
                kwargs["noise"] = NoiseModel(**noise)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"noise: {exc}") from exc
        sde = kwargs.get("sde")
        if isinstance(sde, dict):
            try:
                sde = dict(sde)
                for key in ("mu", "gamma"):
                    if isinstance(sde.get(key), dict):
                        sde[key] = ScheduleConfig(**sde[key])
                kwargs["sde"] = SdeConfig(**sde)
            except TypeError as exc:
                raise ConfigError(f"sde: {exc}") from exc
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@dataclass
class ResolvedProblem:
    op: OperatorSpec
    x_star: np.ndarray
    x0: np.ndarray
    x1: np.ndarray | None
    gamma: dict
    label: str


DEFAULT_GAMMA_FRACTION = {"ogda": 1.0 / 8.0, "eg": 1.0 / 2.0, "forward": 1.0 / 8.0}


def resolve_problem(config: ExperimentConfig) -> ResolvedProblem:
    """Build the operator and all method parameters; raise ConfigError on bad input."""
    name = config.problem
    if name not in PROBLEMS:
        raise ConfigError(f"problem: unknown name {name!r}, expected one of {sorted(PROBLEMS)}")
    if name == "bilinear":
        if config.n < 2:
            raise ConfigError(f"n: bilinear problem needs n >= 2, got {config.n}")
        prob = bilinear_problem(config.n)
        op, x_star = prob.operator, prob.certificate.x_star
    elif name == "rotation":
        op = rotation_operator()
        x_star = np.zeros(2)
    else:
        if config.n < 2 or config.n % 2:
            raise ConfigError(f"n: identity-strong needs even n >= 2, got {config.n}")
        op = strong_rotation_operator(config.n)
        x_star = np.zeros(config.n)

    if config.x0 is None:
        x0 = np.zeros(op.dim)
    else:
        x0 = np.asarray(config.x0, dtype=float)
        if x0.shape != (op.dim,):
            raise ConfigError(f"x0: expected length {op.dim}, got shape {x0.shape}")
    x1 = None
    if config.x1 is not None:
        x1 = np.asarray(config.x1, dtype=float)
        if x1.shape != (op.dim,):
            raise ConfigError(f"x1: expected length {op.dim}, got shape {x1.shape}")

    gamma: dict = {}
    L = op.lipschitz
    for method in config.methods:
        if method not in ALL_METHODS:
            raise ConfigError(f"methods: unknown method {method!r}, expected one of {ALL_METHODS}")
        if method == "sde":
            continue
        g = config.gamma.get(method)
        if g is None:
            g = DEFAULT_GAMMA_FRACTION[method] / L if L > 0 else 1.0
        g = float(g)
        if g <= 0:
            raise ConfigError(f"gamma.{method}: step size must be positive, got {g}")
        if L > 0 and method == "ogda" and g >= 1.0 / (4.0 * L):
            raise ConfigError(
                f"gamma.ogda: {g:.6g} violates the bound hypothesis gamma < 1/(4L) = "
                f"{1.0 / (4.0 * L):.6g}"
            )
        if L > 0 and method == "eg" and g >= 1.0 / (math.sqrt(3.0) * L):
            raise ConfigError(
                f"gamma.eg: {g:.6g} violates the bound hypothesis gamma < 1/(sqrt(3)L) = "
                f"{1.0 / (math.sqrt(3.0) * L):.6g}"
            )
        gamma[method] = g
    return ResolvedProblem(op=op, x_star=x_star, x0=x0, x1=x1, gamma=gamma, label=name)


def validate_config(config: ExperimentConfig) -> ResolvedProblem:
    """Check every numeric parameter before any run starts."""
    if not config.methods:
        raise ConfigError("methods: need at least one method")
    if config.iterations < 1:
        raise ConfigError(f"iterations: must be >= 1, got {config.iterations}")
    if config.replicas < 1:
        raise ConfigError(f"replicas: must be >= 1, got {config.replicas}")
    if config.record_stride < 1:
        raise ConfigError(f"record_stride: must be >= 1, got {config.record_stride}")
    if config.verify_checkpoints < 1 or config.verify_solver_checks < 1:
        raise ConfigError("verify_checkpoints and verify_solver_checks must be >= 1")
    resolved = resolve_problem(config)
    if "sde" in config.methods:
        if config.sde is None:
            raise ConfigError("sde: section required when methods include 'sde'")
        sc = config.sde
        if sc.horizon <= 0 or sc.step <= 0:
            raise ConfigError(f"sde: need horizon > 0 and step > 0, got {sc.horizon}, {sc.step}")
        L = resolved.op.lipschitz
        cap = 0.01 * sc.horizon if L == 0 else min(0.1 / L, 0.01 * sc.horizon)
        if sc.step > cap * (1 + 1e-12):
            raise ConfigError(
                f"sde.step: {sc.step} exceeds min(0.1/L, 0.01*horizon) = {cap:.6g}"
            )
        if sc.sigma_star < 0:
            raise ConfigError(f"sde.sigma_star: must be nonnegative, got {sc.sigma_star}")
        try:
            sc.schedule()
        except ValueError as exc:
            raise ConfigError(f"sde schedules: {exc}") from exc
        try:
            sc.diffusion(resolved.op.dim)
        except ValueError as exc:
            raise ConfigError(f"sde diffusion: {exc}") from exc
    return resolved


def _run_cell(payload: tuple) -> tuple[str, int, RunRecord | None, str | None]:
    """Execute one (method, replica) cell; used directly and via process pools."""
    config_dict, method, replica, stride_override = payload
    config = ExperimentConfig.from_dict(config_dict)
    resolved = resolve_problem(config)
    stride = stride_override if stride_override is not None else config.record_stride
    seed = SeedSpec(config.master_seed, run_index=replica)
    try:
        if method == "sde":
            sc = config.sde
            traj = simulate(resolved.op, sc.schedule(), sc.diffusion(resolved.op.dim),
                            resolved.x0, sc.horizon, sc.step, seed,
                            x_star=resolved.x_star, record_stride=stride)
            return method, replica, traj.record, None
        x1 = resolved.x1 if resolved.x1 is not None else resolved.x0.copy()
        cfg = SolverConfig(method=method, gamma=resolved.gamma[method],
                           iterations=config.iterations, x0=resolved.x0,
                           x1=x1 if method == "ogda" else None,
                           record_stride=stride)
        runner = {"ogda": run_ogda, "eg": run_eg, "forward": run_forward}[method]
        trace = runner(resolved.op, config.noise, cfg, seed, x_star=resolved.x_star)
        return method, replica, trace.record, None
    except DivergenceError as exc:
        return method, replica, None, str(exc)


def _execute_cells(config: ExperimentConfig, cells: list[tuple], threads: int,
                   stride_override: int | None = None) -> list[tuple]:
    payloads = [(config.to_dict(), method, replica, stride_override)
                for method, replica in cells]
    if threads <= 1 or len(payloads) <= 1:
        return [_run_cell(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_cell, payloads, chunksize=8))


def _resolved_constants(config: ExperimentConfig, resolved: ResolvedProblem) -> dict:
    out = {
        "problem": resolved.label,
        "dimension": resolved.op.dim,
        "lipschitz": resolved.op.lipschitz,
        "strong_modulus": resolved.op.strong_modulus,
        "x_star": resolved.x_star.tolist(),
        "x0": resolved.x0.tolist(),
        "gamma": dict(resolved.gamma),
        "noise_variance_bound": config.noise.variance_bound(),
        "iterations": config.iterations,
    }
    if "ogda" in config.methods:
        x1 = resolved.x1 if resolved.x1 is not None else resolved.x0
        out["x1"] = np.asarray(x1, dtype=float).tolist()
    if "sde" in config.methods and config.sde is not None:
        sc = config.sde
        out["sde"] = {
            "mu_up": sc.mu.up, "mu_low": sc.mu.low, "gamma_up": sc.gamma.up,
            "gamma_low": sc.gamma.low, "sigma_star": sc.sigma_star,
            "horizon": sc.horizon, "step": sc.step,
            "initial_anchor_energy": initial_anchor_energy(
                resolved.op, resolved.x0, resolved.x_star, sc.mu.up),
        }
    return out


def run_experiment(config: ExperimentConfig, out_dir, threads: int = 1,
                   seed_override: int | None = None) -> tuple[dict, int]:
    """Run all cells, write per-method ensemble CSVs and a manifest.

    Returns (manifest, exit_code); exit code 1 signals at least one
    diverged cell, whose error is recorded in the manifest.
    """
    if seed_override is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(),
                                             "master_seed": int(seed_override)})
    resolved = validate_config(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    cells = [(m, r) for m in config.methods for r in range(config.replicas)]
    results = _execute_cells(config, cells, threads)

    by_method: dict[str, dict[int, RunRecord]] = {m: {} for m in config.methods}
    cell_status = []
    for method, replica, record, error in results:
        cell_status.append({"method": method, "replica": replica,
                            "status": "ok" if error is None else "diverged",
                            **({"error": error} if error else {})})
        if record is not None:
            by_method[method][replica] = record

    artifacts = []
    for method in config.methods:
        records = [by_method[method][r] for r in sorted(by_method[method])]
        if not records:
            continue
        summary = aggregate(records)
        path = out_dir / f"{method}_ensemble.csv"
        write_ensemble_csv(summary, path)
        artifacts.append(path.name)

    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "resolved": _resolved_constants(config, resolved),
        "replicas": config.replicas,
        "master_seed": config.master_seed,
        "cells": cell_status,
        "artifacts": artifacts,
        "wall_time_s": time.monotonic() - started,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    failed = any(c["status"] != "ok" for c in cell_status)
    return manifest, (1 if failed else 0)


def _log_spaced_indices(lo: int, hi: int, count: int) -> list[int]:
    if hi <= lo:
        return [max(lo, 0)]
    raw = np.unique(np.round(np.geomspace(max(lo, 1), hi, count)).astype(int))
    return [int(v) for v in raw if lo <= v <= hi]


def verify_experiment(config: ExperimentConfig, threads: int = 1,
                      seed_override: int | None = None) -> tuple[list[dict], int]:
    """Compare measured ergodic quantities against the bound right-hand sides.

    Deterministic (noise-free) solver runs are checked pointwise at
    log-spaced window lengths; stochastic runs compare the replica mean at
    the final window against the bound plus three standard errors; SDE
    ensembles are checked at evenly spaced times with an extra
    O(step) discretization allowance of 10 * step * (1 + L).
    """
    if seed_override is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(),
                                             "master_seed": int(seed_override)})
    resolved = validate_config(config)
    op, x_star, x0 = resolved.op, resolved.x_star, resolved.x0
    L = op.lipschitz
    sigma_b = math.sqrt(config.noise.variance_bound())
    rows: list[dict] = []

    solver_methods = [m for m in config.methods if m in ("ogda", "eg")]
    deterministic = config.noise.kind == "none"
    for method in solver_methods:
        gamma = resolved.gamma[method]
        x1 = resolved.x1 if resolved.x1 is not None else x0.copy()
        replicas = 1 if deterministic else config.replicas
        cells = [(method, r) for r in range(replicas)]
        # deterministic runs are checked at many window lengths and need a
        # dense record; stochastic runs are checked at the final row only
        results = _execute_cells(config, cells, threads,
                                 stride_override=1 if deterministic else None)
        records = [rec for _, _, rec, err in sorted(results, key=lambda c: c[1]) if rec is not None]
        if len(records) < replicas:
            rows.append({"check": f"{method}-run", "at": math.nan,
                         "empirical": math.nan, "bound": math.nan,
                         "allowance": 0.0, "passed": False,
                         "note": "cell diverged"})
            continue
        bound_fn = (lambda K, which: ogda_bound(K, gamma, L, sigma_b, x0, x1, x_star, which)) \
            if method == "ogda" else \
            (lambda K, which: eg_bound(K, gamma, L, sigma_b, x0, x_star, which))
        # the ergodic value for window K sits at iterate index K+1 (sqnorm) and
        # K+2 (gap) for the optimistic method, and at index K for extragradient
        sq_shift = 1 if method == "ogda" else 0
        gap_shift = 2 if method == "ogda" else 0
        if deterministic:
            record = records[0]
            for which, shift in (("sqnorm", sq_shift), ("gap", gap_shift)):
                col = record.ergodic_norm_M_sq if which == "sqnorm" else record.ergodic_gap
                for K in _log_spaced_indices(1, config.iterations - shift,
                                             config.verify_solver_checks):
                    emp = float(col[K + shift])
                    bnd = bound_fn(K, which)
                    rows.append({"check": f"{method}-ergodic-{which}", "at": K,
                                 "empirical": emp, "bound": bnd, "allowance": 0.0,
                                 "passed": emp <= bnd * (1 + 1e-9) + 1e-12})
        else:
            summary = aggregate(records)
            k_final = int(round(summary.index[-1]))
            for which, shift in (("sqnorm", sq_shift), ("gap", gap_shift)):
                name = "ergodic_norm_M_sq" if which == "sqnorm" else "ergodic_gap"
                K = k_final - shift
                emp = float(summary.mean[name][-1])
                err = float(summary.stderr[name][-1])
                bnd = bound_fn(K, which)
                rows.append({"check": f"{method}-ergodic-{which}", "at": K,
                             "empirical": emp, "bound": bnd, "allowance": 3 * err,
                             "passed": emp <= bnd + 3 * err})

    if "sde" in config.methods:
        sc = config.sde
        cells = [("sde", r) for r in range(config.replicas)]
        results = _execute_cells(config, cells, threads)
        records = [rec for _, _, rec, err in sorted(results, key=lambda c: c[1]) if rec is not None]
        if len(records) < config.replicas:
            rows.append({"check": "sde-run", "at": math.nan, "empirical": math.nan,
                         "bound": math.nan, "allowance": 0.0, "passed": False,
                         "note": "cell diverged"})
        else:
            summary = aggregate(records)
            times = summary.index
            allowance = 10.0 * sc.step * (1.0 + L)
            positive = np.flatnonzero(times > 0)
            picks = positive[np.unique(np.linspace(0, len(positive) - 1,
                                                   config.verify_checkpoints).astype(int))]
            strong = op.strong_modulus >= 1.0 / (2.0 * sc.mu.up) - 1e-12
            sched = sc.schedule()
            g0 = initial_anchor_energy(op, x0, x_star, sc.mu.up)
            dist0_sq = float((x0 - x_star) @ (x0 - x_star))
            for i in picks:
                t = float(times[i])
                if strong:
                    emp = 0.5 * float(summary.mean["dist_sq"][i])
                    err = 0.5 * float(summary.stderr["dist_sq"][i])
                    bnd = continuous_bounds("strong", t=t, sigma_star=sc.sigma_star,
                                            mu_up=sc.mu.up, gamma_low=sc.gamma.low,
                                            g0=g0, kappa=op.strong_modulus)
                    label = "sde-strong-dist"
                else:
                    emp = float(summary.mean["ergodic_gap"][i])
                    err = float(summary.stderr["ergodic_gap"][i])
                    bnd = continuous_bounds("gap", t=t, sigma_star=sc.sigma_star,
                                            mu_up=sc.mu.up, L=L, mu_t=sched.mu(t),
                                            gamma_value=sc.gamma.low,
                                            dist0_sq=dist0_sq)
                    label = "sde-ergodic-gap"
                rows.append({"check": label, "at": t, "empirical": emp, "bound": bnd,
                             "allowance": 3 * err + allowance,
                             "passed": emp <= bnd + 3 * err + allowance})

    ok = all(r["passed"] for r in rows)
    return rows, (0 if ok else 1)


def format_verify_report(rows: list[dict]) -> str:
    header = f"{'check':<24}{'at':>12}{'empirical':>16}{'bound':>16}{'allowance':>14}  result"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['check']:<24}{r['at']:>12.6g}{r['empirical']:>16.6g}"
            f"{r['bound']:>16.6g}{r['allowance']:>14.6g}  "
            + ("PASS" if r["passed"] else "FAIL")
        )
    return "\n".join(lines)


def plot_ensembles(csv_paths: list, metric: str, out_path,
                   max_points: int = 2000) -> None:
    """Log-scale mean lines with min/max bands, one series per ensemble CSV."""
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "monozero"
    import matplotlib.pyplot as plt

    from monozero.metrics import read_ensemble_csv

    if not csv_paths:
        raise ValueError("no input CSVs given")
    fig, ax = plt.subplots(figsize=(8, 5))
    grid = None
    for path in csv_paths:
        summary = read_ensemble_csv(path)
        if metric not in summary.mean:
            raise ValueError(f"{path}: metric {metric!r} not present")
        if grid is None:
            grid = summary.index
        elif len(summary.index) != len(grid) or not np.array_equal(summary.index, grid):
            raise ValueError(f"{path}: recording grid differs from first input")
        label = Path(path).stem.removesuffix("_ensemble")
        keep = np.isfinite(summary.mean[metric])
        idx = np.flatnonzero(keep)
        if len(idx) > max_points:
            idx = idx[np.unique(np.linspace(0, len(idx) - 1, max_points).astype(int))]
        x = summary.index[idx]
        ax.plot(x, summary.mean[metric][idx], label=label, linewidth=1.2)
        ax.fill_between(x, summary.min[metric][idx], summary.max[metric][idx], alpha=0.25)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel(metric)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
