"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete. The heavy Monte-Carlo criteria share one serial
reference run of the benchmark noise experiment (module-scoped fixture).
"""

import time

import numpy as np
import pytest

from conftest import random_monotone_operator
from monozero.experiments import (ExperimentConfig, plot_ensembles,
                                  run_experiment, verify_experiment)
from monozero.metrics import read_ensemble_csv
from monozero.operators import (build_bilinear, resolvent, rotation_operator,
                                yosida)
from monozero.oracle import NoiseModel, SeedSpec
from monozero.sde import DiffusionSpec, ParamSchedule, simulate
from monozero.solvers import (SolverConfig, eg_bound, ogda_bound, run_eg,
                              run_ogda)

REPRODUCTION_SEED = 31415926
THREADS = 8


def _report(num, name, ok, elapsed, budget=None):
    budget_s = "" if budget is None else f", budget {budget:.0f}s"
    print(f"ACCEPTANCE {num:>2} [{name}]: {'PASS' if ok else 'FAIL'} "
          f"({elapsed:.1f}s{budget_s})")


def reproduction_config() -> ExperimentConfig:
    """Benchmark game, decaying direction noise of scale 10, 50000 x 100."""
    return ExperimentConfig.from_dict({
        "problem": "bilinear", "n": 10,
        "methods": ["ogda", "eg"],
        "iterations": 50000,
        "gamma": {},
        "x0": None, "x1": None,
        "noise": {"kind": "decaying-direction", "sigma_star": 0.0, "decay_std": 10.0},
        "replicas": 100,
        "master_seed": REPRODUCTION_SEED,
        "record_stride": 50,
        "sde": None,
        "verify_checkpoints": 10,
        "verify_solver_checks": 50,
    })


@pytest.fixture(scope="module")
def reproduction_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("repro_serial")
    manifest, code = run_experiment(reproduction_config(), out, threads=1)
    assert code == 0
    return out


def test_criterion_01_operator_algebra(rng):
    t0 = time.perf_counter()
    ok = False
    try:
        cases = 1000
        ops = [random_monotone_operator(rng, int(rng.integers(2, 8)))
               for _ in range(20)]
        # monotonicity and Lipschitz, batched per operator
        for op in ops:
            total = np.asarray(op.total_linear)
            X = rng.uniform(-10, 10, size=(cases // 20, op.dim))
            Y = rng.uniform(-10, 10, size=(cases // 20, op.dim))
            D = X - Y
            MD = D @ total.T
            assert np.all(np.einsum("ij,ij->i", MD, D)
                          >= -1e-10 * np.einsum("ij,ij->i", D, D))
            assert np.all(np.linalg.norm(MD, axis=1)
                          <= (op.lipschitz + 1e-8) * np.linalg.norm(D, axis=1))
        # resolvent nonexpansiveness, parameter identity, Yosida consistency
        for i in range(cases):
            op = ops[i % 20]
            mu = float(rng.uniform(0.05, 2.0))
            z1 = rng.uniform(-10, 10, size=op.dim)
            z2 = rng.uniform(-10, 10, size=op.dim)
            j1, j2 = resolvent(op, mu, z1), resolvent(op, mu, z2)
            assert np.linalg.norm(j1 - j2) <= np.linalg.norm(z1 - z2) + 1e-10
            lam = float(rng.uniform(0.05, 2.0))
            lhs = np.linalg.norm(resolvent(op, lam, z1) - resolvent(op, mu, z1))
            assert lhs <= abs(lam - mu) * np.linalg.norm(yosida(op, lam, z1)) + 1e-8
            assert np.linalg.norm(op.eval(j1) - yosida(op, mu, z1)) <= 1e-10
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0
        ok = True
    finally:
        _report(1, "operator algebra properties", ok, time.perf_counter() - t0, 10)


def test_criterion_02_resolvent_oracle_equivalence(rng):
    t0 = time.perf_counter()
    ok = False
    try:
        for _ in range(100):
            n = int(rng.integers(2, 8))
            op = random_monotone_operator(rng, n)
            mu = 0.9 * float(rng.uniform(0.1, 1.0)) / max(op.lipschitz, 1e-12)
            z = rng.uniform(-10, 10, size=n)
            direct = resolvent(op, mu, z, method="direct")
            fixed = resolvent(op, mu, z, method="iterative")
            assert np.linalg.norm(direct - fixed) <= 1e-10
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0
        ok = True
    finally:
        _report(2, "resolvent oracle equivalence", ok, time.perf_counter() - t0, 5)


def test_criterion_03_deterministic_optimistic_bound():
    t0 = time.perf_counter()
    ok = False
    try:
        op, cert = build_bilinear(10)
        L = op.lipschitz
        gamma = 1.0 / (8.0 * L)
        K_big = 50000
        # generic unit-scale start: a start whose residual is concentrated on
        # the slowest eigenmodes (e.g. the origin) never reaches the O(1/K)
        # regime within 100 iterations, which the decay check below presumes
        x0 = cert.x_star + np.random.default_rng(0).standard_normal(20)
        cfg = SolverConfig(method="ogda", gamma=gamma, iterations=K_big + 1,
                           x0=x0, record_stride=1)
        trace = run_ogda(op, NoiseModel(), cfg, SeedSpec(0), x_star=cert.x_star)
        erg = trace.record.ergodic_norm_M_sq
        checks = np.unique(np.round(np.geomspace(1, K_big, 50)).astype(int))
        for K in checks:
            bound = ogda_bound(int(K), gamma, L, 0.0, trace.x0, trace.x1,
                               cert.x_star, "sqnorm")
            assert erg[K + 1] <= bound * (1 + 1e-9)
        assert erg[K_big + 1] <= 0.01 * erg[101]  # decay from K=100 to K=50000
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0
        ok = True
    finally:
        _report(3, "deterministic optimistic bound", ok, time.perf_counter() - t0, 30)


def test_criterion_04_deterministic_extragradient_bound():
    t0 = time.perf_counter()
    ok = False
    try:
        op, cert = build_bilinear(10)
        L = op.lipschitz
        gamma = 1.0 / (2.0 * L)
        K_big = 50000
        x0 = cert.x_star + np.random.default_rng(0).standard_normal(20)
        cfg = SolverConfig(method="eg", gamma=gamma, iterations=K_big,
                           x0=x0, record_stride=1)
        trace = run_eg(op, NoiseModel(), cfg, SeedSpec(0), x_star=cert.x_star)
        rec = trace.record
        checks = np.unique(np.round(np.geomspace(1, K_big, 50)).astype(int))
        for K in checks:
            bound = eg_bound(int(K), gamma, L, 0.0, trace.x0, cert.x_star, "sqnorm")
            assert rec.ergodic_norm_M_sq[K] <= bound * (1 + 1e-9)
        assert rec.ergodic_norm_M_sq[K_big] <= 0.01 * rec.ergodic_norm_M_sq[100]
        # the final iterate itself converges on the bilinear game
        assert np.sqrt(rec.norm_M_sq[-1]) <= 1e-6 * np.sqrt(rec.norm_M_sq[0])
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0
        ok = True
    finally:
        _report(4, "deterministic extragradient bound", ok, time.perf_counter() - t0, 30)


def test_criterion_05_stochastic_bound_domination(tmp_path):
    t0 = time.perf_counter()
    ok = False
    try:
        config = ExperimentConfig.from_dict({
            **reproduction_config().to_dict(),
            "noise": {"kind": "iid-gaussian", "sigma_star": 0.1, "decay_std": 0.0},
            "record_stride": 1000,
            "master_seed": 271828,
        })
        manifest, code = run_experiment(config, tmp_path, threads=THREADS)
        assert code == 0
        op, cert = build_bilinear(10)
        L = op.lipschitz
        x0 = np.zeros(20)
        sigma = 0.1
        for method in ("ogda", "eg"):
            gamma = manifest["resolved"]["gamma"][method]
            summary = read_ensemble_csv(tmp_path / f"{method}_ensemble.csv")
            mean = summary.mean["ergodic_norm_M_sq"][-1]
            stderr = summary.stderr["ergodic_norm_M_sq"][-1]
            k_final = int(round(summary.index[-1]))
            if method == "ogda":
                K = k_final - 1
                bound = ogda_bound(K, gamma, L, sigma, x0, x0, cert.x_star, "sqnorm")
                a = (gamma * L) ** 2
                floor = (16 * a + 11) / (1 - 16 * a) * sigma**2
            else:
                K = k_final
                bound = eg_bound(K, gamma, L, sigma, x0, cert.x_star, "sqnorm")
                b = 3 * (gamma * L) ** 2
                floor = gamma**2 * (2 + b) / (1 - b) * sigma**2
            assert mean <= bound + 3 * stderr
            # the plateau sits within a factor 10 of the bound's constant term
            assert floor / 10 <= mean <= floor * 10
        elapsed = time.perf_counter() - t0
        assert elapsed < 600.0
        ok = True
    finally:
        _report(5, "stochastic bound domination", ok, time.perf_counter() - t0, 600)


def test_criterion_06_noise_experiment_reproduction(reproduction_run, tmp_path):
    t0 = time.perf_counter()
    ok = False
    try:
        summaries = {m: read_ensemble_csv(reproduction_run / f"{m}_ensemble.csv")
                     for m in ("ogda", "eg")}
        for method, summary in summaries.items():
            mean = summary.mean["ergodic_norm_M_sq"]
            after = summary.index >= 0.01 * 50000
            assert np.all(np.diff(mean[after]) <= 1e-9), method
            band = summary.max["ergodic_norm_M_sq"] - summary.min["ergodic_norm_M_sq"]
            assert np.any(band > 0), method
        final_ogda = summaries["ogda"].mean["ergodic_norm_M_sq"][-1]
        final_eg = summaries["eg"].mean["ergodic_norm_M_sq"][-1]
        assert final_eg <= 10.0 * final_ogda
        svg = tmp_path / "reproduction.svg"
        plot_ensembles([reproduction_run / "ogda_ensemble.csv",
                        reproduction_run / "eg_ensemble.csv"],
                       "ergodic_norm_M_sq", svg)
        assert svg.exists() and svg.read_bytes().startswith(b"<?xml")
        ok = True
    finally:
        _report(6, "noise experiment reproduction", ok, time.perf_counter() - t0)


def test_criterion_07_strongly_monotone_trajectory_bound():
    t0 = time.perf_counter()
    ok = False
    try:
        config = ExperimentConfig.from_dict({
            "problem": "identity-strong", "n": 2,
            "methods": ["sde"],
            "iterations": 1,
            "gamma": {},
            "x0": [2.0, 1.0], "x1": None,
            "noise": {"kind": "none", "sigma_star": 0.0, "decay_std": 0.0},
            "replicas": 200,
            "master_seed": 424242,
            "record_stride": 100,
            "sde": {"mu": {"kind": "constant", "up": 0.55, "low": 0.55},
                    "gamma": {"kind": "constant", "up": 0.55, "low": 0.55},
                    "sigma_star": 0.05, "envelope": "constant", "power": 1.0,
                    "horizon": 20.0, "step": 0.001},
            "verify_checkpoints": 20,
            "verify_solver_checks": 50,
        })
        rows, code = verify_experiment(config, threads=THREADS)
        assert len(rows) == 20
        assert all(r["check"] == "sde-strong-dist" for r in rows)
        assert code == 0 and all(r["passed"] for r in rows)
        elapsed = time.perf_counter() - t0
        assert elapsed < 300.0
        ok = True
    finally:
        _report(7, "strongly monotone trajectory bound", ok,
                time.perf_counter() - t0, 300)


def test_criterion_08_ergodic_trajectory_bound():
    t0 = time.perf_counter()
    ok = False
    try:
        config = ExperimentConfig.from_dict({
            "problem": "bilinear", "n": 10,
            "methods": ["sde"],
            "iterations": 1,
            "gamma": {},
            "x0": None, "x1": None,
            "noise": {"kind": "none", "sigma_star": 0.0, "decay_std": 0.0},
            "replicas": 100,
            "master_seed": 161803,
            "record_stride": 100,
            "sde": {"mu": {"kind": "constant", "up": 0.5, "low": 0.5},
                    "gamma": {"kind": "constant", "up": 0.5, "low": 0.5},
                    "sigma_star": 0.05, "envelope": "constant", "power": 1.0,
                    "horizon": 100.0, "step": 0.01},
            "verify_checkpoints": 10,
            "verify_solver_checks": 50,
        })
        rows, code = verify_experiment(config, threads=THREADS)
        assert len(rows) == 10
        assert all(r["check"] == "sde-ergodic-gap" for r in rows)
        assert code == 0 and all(r["passed"] for r in rows)
        elapsed = time.perf_counter() - t0
        assert elapsed < 600.0
        ok = True
    finally:
        _report(8, "ergodic trajectory bound", ok, time.perf_counter() - t0, 600)


def test_criterion_09_euler_order():
    t0 = time.perf_counter()
    ok = False
    try:
        op = rotation_operator()
        sched = ParamSchedule(mu_kind="rational-decay", mu_up=0.9, mu_low=0.45,
                              gamma_kind="constant", gamma_up=1.0, gamma_low=1.0)
        diff = DiffusionSpec.isotropic(2, 0.0)
        x0 = np.array([1.0, 0.0])
        T = 5.0
        hs = [0.02 / 2**j for j in range(6)]
        ref = simulate(op, sched, diff, x0, T, hs[-1] / 100, SeedSpec(0),
                       record_stride=10**7).final_x()
        errs = np.array([
            np.linalg.norm(simulate(op, sched, diff, x0, T, h, SeedSpec(0),
                                    record_stride=10**7).final_x() - ref)
            for h in hs])
        ratios = errs[:-1] / errs[1:]
        assert np.all((ratios >= 1.7) & (ratios <= 2.3)), ratios
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0
        ok = True
    finally:
        _report(9, "first-order step convergence", ok, time.perf_counter() - t0, 60)


def test_criterion_10_determinism(reproduction_run, tmp_path):
    t0 = time.perf_counter()
    ok = False
    try:
        config = reproduction_config()
        run_experiment(config, tmp_path / "again", threads=1)
        run_experiment(config, tmp_path / "parallel", threads=8)
        for name in ("ogda_ensemble.csv", "eg_ensemble.csv"):
            reference = (reproduction_run / name).read_bytes()
            assert (tmp_path / "again" / name).read_bytes() == reference
            assert (tmp_path / "parallel" / name).read_bytes() == reference
        ok = True
    finally:
        _report(10, "bitwise determinism", ok, time.perf_counter() - t0)
