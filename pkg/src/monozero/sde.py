"""Euler-Maruyama simulation of the corrected monotone flow.

The corrected stochastic flow for M(x) = 0 is integrated through the
transformed state Z(t) = X(t) + mu(t) M(X(t)), whose drift is the Yosida
approximation of M and therefore globally Lipschitz:

    dZ(t) = (mu'(t) - gamma(t)) M_{mu(t)}(Z(t)) dt + sigma(t, X(t)) dW(t),

with X(t) recovered from Z(t) by the resolvent at every step. This module
also evaluates the closed-form ergodic and strongly monotone error bounds
the trajectories are checked against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from monozero.errors import DivergenceError
from monozero.metrics import MetricRecorder, RunRecord
from monozero.operators import OperatorSpec, resolvent
from monozero.oracle import SeedSpec

SCHEDULE_KINDS = ("constant", "rational-decay")
ENVELOPE_KINDS = ("constant", "power-decay")


@dataclass(frozen=True)
class ParamSchedule:
    """Parameter functions mu(t) and gamma(t) of the corrected flow.

    Both are either constant or of the rational-decay form
    f(t) = f_low + (f_up - f_low) / (1 + t), which is nonincreasing with a
    closed-form derivative. mu must satisfy 0 < mu_low <= mu(t) <= mu_up.
    """

    mu_kind: str = "constant"
    mu_up: float = 1.0
    mu_low: float = 1.0
    gamma_kind: str = "constant"
    gamma_up: float = 1.0
    gamma_low: float = 1.0

    def __post_init__(self):
        for name, kind in (("mu", self.mu_kind), ("gamma", self.gamma_kind)):
            if kind not in SCHEDULE_KINDS:
                raise ValueError(f"unknown {name} schedule kind {kind!r}")
        if not (0 < self.mu_low <= self.mu_up):
            raise ValueError(f"need 0 < mu_low <= mu_up, got [{self.mu_low}, {self.mu_up}]")
        if not (0 < self.gamma_low <= self.gamma_up):
            raise ValueError(f"need 0 < gamma_low <= gamma_up, got [{self.gamma_low}, {self.gamma_up}]")
        if self.mu_kind == "constant" and self.mu_low != self.mu_up:
            raise ValueError("constant mu schedule requires mu_low == mu_up")
        if self.gamma_kind == "constant" and self.gamma_low != self.gamma_up:
            raise ValueError("constant gamma schedule requires gamma_low == gamma_up")

    @classmethod
    def constant(cls, mu: float, gamma: float) -> "ParamSchedule":
        return cls(mu_kind="constant", mu_up=mu, mu_low=mu,
                   gamma_kind="constant", gamma_up=gamma, gamma_low=gamma)

    def mu(self, t: float) -> float:
        if self.mu_kind == "constant":
            return self.mu_up
        return self.mu_low + (self.mu_up - self.mu_low) / (1.0 + t)

    def mu_dot(self, t: float) -> float:
        """Exact derivative; the drift coefficient must not use finite differences."""
        if self.mu_kind == "constant":
            return 0.0
        return -(self.mu_up - self.mu_low) / (1.0 + t) ** 2

    def gamma(self, t: float) -> float:
        if self.gamma_kind == "constant":
            return self.gamma_up
        return self.gamma_low + (self.gamma_up - self.gamma_low) / (1.0 + t)


@dataclass(frozen=True)
class DiffusionSpec:
    """Matrix diffusion sigma(t, x) with a uniform Frobenius bound.

    sigma(t, x) = s(t) * base + c_sigma * min(||x||, cap) * unit(coupling),
    where s(t) is 1 (constant envelope) or (1+t)^(-p) (power decay) and
    unit() normalizes in Frobenius norm. The map x -> sigma(t, x) is then
    c_sigma-Lipschitz and ||sigma(t, x)||_F <= s(t)*||base||_F + c_sigma*cap.
    """

    base_matrix: np.ndarray
    envelope: str = "constant"
    power: float = 1.0
    state_coupling: float = 0.0
    coupling_matrix: np.ndarray | None = None
    coupling_cap: float = 1.0

    def __post_init__(self):
        base = np.asarray(self.base_matrix, dtype=float)
        if base.ndim != 2:
            raise ValueError(f"base matrix must be 2-d, got shape {base.shape}")
        object.__setattr__(self, "base_matrix", base)
        if self.envelope not in ENVELOPE_KINDS:
            raise ValueError(f"unknown envelope kind {self.envelope!r}")
        if self.envelope == "power-decay" and self.power <= 0.5:
            raise ValueError(
                f"power-decay envelope needs p > 1/2 for a square-integrable bound, got {self.power}"
            )
        if self.state_coupling < 0:
            raise ValueError(f"state coupling must be nonnegative, got {self.state_coupling}")
        if self.coupling_cap <= 0:
            raise ValueError(f"coupling cap must be positive, got {self.coupling_cap}")
        if self.state_coupling > 0:
            coup = self.coupling_matrix if self.coupling_matrix is not None else base
            coup = np.asarray(coup, dtype=float)
            norm = np.linalg.norm(coup)
            if norm == 0:
                raise ValueError("state coupling requires a nonzero coupling matrix")
            object.__setattr__(self, "coupling_matrix", coup / norm)

    @classmethod
    def isotropic(cls, n: int, sigma_star: float, envelope: str = "constant",
                  power: float = 1.0) -> "DiffusionSpec":
        """base = (sigma_star / sqrt(n)) * Id, so ||base||_F = sigma_star."""
        return cls(base_matrix=(sigma_star / math.sqrt(n)) * np.eye(n),
                   envelope=envelope, power=power)

    @property
    def n(self) -> int:
        return self.base_matrix.shape[0]

    @property
    def m(self) -> int:
        return self.base_matrix.shape[1]

    @property
    def is_zero(self) -> bool:
        return self.state_coupling == 0.0 and not self.base_matrix.any()

    def envelope_factor(self, t: float) -> float:
        if self.envelope == "constant":
            return 1.0
        return (1.0 + t) ** (-self.power)

    def sigma(self, t: float, x: np.ndarray) -> np.ndarray:
        out = self.envelope_factor(t) * self.base_matrix
        if self.state_coupling > 0:
            amp = self.state_coupling * min(float(np.linalg.norm(x)), self.coupling_cap)
            out = out + amp * self.coupling_matrix
        return out

    def sigma_inf(self, t: float) -> float:
        """sup_x ||sigma(t, x)||_F at time t."""
        return (self.envelope_factor(t) * float(np.linalg.norm(self.base_matrix))
                + self.state_coupling * self.coupling_cap)

    @property
    def sigma_star(self) -> float:
        """Uniform Frobenius bound sup_t sigma_inf(t)."""
        return self.sigma_inf(0.0)

    def sigma_inf_sq_integral(self) -> float:
        """Closed-form integral of sigma_inf(t)^2 over [0, inf)."""
        if self.is_zero:
            return 0.0
        if self.envelope == "power-decay" and self.state_coupling == 0.0:
            return float(np.linalg.norm(self.base_matrix)) ** 2 / (2.0 * self.power - 1.0)
        return math.inf


@dataclass
class SdeTrajectory:
    """States and metrics of one integrated trajectory, sampled at the record stride."""

    times: np.ndarray
    x_states: np.ndarray
    z_states: np.ndarray
    record: RunRecord

    def final_x(self) -> np.ndarray:
        return self.x_states[-1]


def simulate(op: OperatorSpec, sched: ParamSchedule, diff: DiffusionSpec,
             x0: np.ndarray, horizon: float, step: float, seed: SeedSpec,
             x_star: np.ndarray | None = None, record_stride: int = 1) -> SdeTrajectory:
    """Integrate the corrected flow on [0, horizon] with uniform step size.

    The scheme is explicit Euler-Maruyama on the transformed state
    Z = X + mu(t) M(X):

        Z_{i+1} = Z_i + h (mu'(t_i) - gamma(t_i)) M_mu(Z_i)
                  + sqrt(h) sigma(t_i, X_i) g_i,

    with g_i standard normal drawn from the "brownian" substream of
    ``seed``. Raises DivergenceError at the first non-finite state.
    """
    x0 = np.asarray(x0, dtype=float)
    n = op.dim
    if x0.shape != (n,):
        raise ValueError(f"dimension mismatch: operator acts on R^{n}, x0 has shape {x0.shape}")
    if step <= 0 or horizon <= 0:
        raise ValueError(f"need step > 0 and horizon > 0, got step={step}, horizon={horizon}")
    cap = 0.01 * horizon if op.lipschitz == 0 else min(0.1 / op.lipschitz, 0.01 * horizon)
    if step > cap * (1 + 1e-12):
        raise ValueError(
            f"step {step} too large: need step <= min(0.1/L, 0.01*horizon) = {cap:.6g}"
        )
    if not diff.is_zero and diff.n != n:
        raise ValueError(f"diffusion rows {diff.n} do not match operator dimension {n}")
    num_steps = int(round(horizon / step))
    if abs(num_steps * step - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not an integer multiple of step {step}")
    if op.lipschitz * sched.mu_up >= 1:
        warnings.warn(
            f"L*mu_up = {op.lipschitz * sched.mu_up:.4g} >= 1; almost-sure convergence "
            "guarantees do not apply (simulation still well defined)",
            stacklevel=2,
        )

    noisy = not diff.is_zero
    gauss = None
    if noisy:
        gauss = seed.with_stream("brownian").generator().standard_normal(
            (num_steps, diff.m))

    recorder = MetricRecorder(index_name="t", stride=record_stride)
    times, xs, zs = [], [], []
    have_star = x_star is not None
    star = np.asarray(x_star, dtype=float) if have_star else None

    mu0 = sched.mu(0.0)
    Z = x0 + mu0 * op.eval(x0)
    sqrt_h = math.sqrt(step)
    eye = np.eye(n)

    # resolvent solves reuse a cached inverse while mu(t) is unchanged
    cached_mu = None
    cached_inv = None

    def resolve(mu_t: float, z: np.ndarray) -> np.ndarray:
        nonlocal cached_mu, cached_inv
        if mu_t != cached_mu:
            cached_inv = np.linalg.inv(eye + mu_t * op.total_linear)
            cached_mu = mu_t
        return cached_inv @ (z - mu_t * op.offset)

    # overflow is detected explicitly below, so let non-finites propagate silently
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(num_steps + 1):
            t = i * step
            mu_t = sched.mu(t)
            X = resolve(mu_t, Z)
            m_val = op.eval(X)
            norm_sq = float(m_val @ m_val)
            if have_star:
                d = X - star
                gap = float(m_val @ d)
                dist_sq = float(d @ d)
            else:
                gap = math.nan
                dist_sq = math.nan
            last = i == num_steps
            recorder.record(t, norm_sq, gap, dist_sq, weight=step, final=last)
            if i % record_stride == 0 or last:
                times.append(t)
                xs.append(X)
                zs.append(Z.copy())
            if last:
                break
            drift = (sched.mu_dot(t) - sched.gamma(t)) * ((Z - X) / mu_t)
            Z = Z + step * drift
            if noisy:
                Z = Z + sqrt_h * (diff.sigma(t, X) @ gauss[i])
            if not np.all(np.isfinite(Z)):
                raise DivergenceError(
                    f"trajectory left the finite range at step {i + 1} (t = {t + step:.6g})",
                    step=i + 1,
                )

    return SdeTrajectory(
        times=np.array(times),
        x_states=np.array(xs),
        z_states=np.array(zs),
        record=recorder.finalize(),
    )


def anchor(sched: ParamSchedule, t: float, x: np.ndarray, z_dir: np.ndarray,
           x_star: np.ndarray) -> float:
    """Half squared norm of x + mu(t) z_dir - x*.

    Expands to mu(t)<z, x-x*> + ||x-x*||^2/2 + mu(t)^2 ||z||^2 / 2; with
    z_dir = M(x) this is the Lyapunov energy the flow dissipates.
    """
    diff = x + sched.mu(t) * z_dir - x_star
    return 0.5 * float(diff @ diff)


def initial_anchor_energy(op: OperatorSpec, x0: np.ndarray, x_star: np.ndarray,
                          mu_up: float) -> float:
    """Anchor energy at the start point with the largest mu value."""
    diff = np.asarray(x0, dtype=float) + mu_up * op.eval(x0) - np.asarray(x_star, dtype=float)
    return 0.5 * float(diff @ diff)


def continuous_bounds(kind: str, *, t: float, sigma_star: float, mu_up: float,
                      L: float | None = None, mu_t: float | None = None,
                      gamma_value: float | None = None, dist0_sq: float | None = None,
                      gamma_low: float | None = None, g0: float | None = None,
                      kappa: float | None = None, lam: float = 0.5,
                      sigma_inf=None) -> float:
    """Right-hand side of the trajectory error bounds.

    kind "gap":    expected ergodic gap (1/t) int <X - x*, M(X)>;
                   ``gamma_value`` is gamma(t) for nonincreasing gamma, or
                   gamma_low when gamma is merely bounded below.
    kind "sqnorm": expected ergodic squared norm, with the extra 1/mu(t) factor.
    kind "strong": expected half squared distance under kappa-strong
                   monotonicity with kappa >= 1/(2 mu_up); pass ``sigma_inf``
                   (callable) and ``lam`` for the refined variant with a
                   decaying diffusion envelope.
    """
    if kind in ("gap", "sqnorm"):
        if t <= 0:
            raise ValueError(f"ergodic bounds need t > 0, got {t}")
        for name, v in (("L", L), ("mu_t", mu_t), ("gamma_value", gamma_value),
                        ("dist0_sq", dist0_sq)):
            if v is None:
                raise ValueError(f"{kind} bound requires parameter {name}")
        lead = (mu_up**2 * L**2 / 2.0 + mu_up * L + 0.5) * dist0_sq
        floor = sigma_star**2 / (2.0 * gamma_value * mu_t)
        if kind == "gap":
            return lead / (gamma_value * t) + floor
        return lead / (gamma_value * mu_t * t) + floor
    if kind == "strong":
        for name, v in (("g0", g0), ("gamma_low", gamma_low), ("kappa", kappa)):
            if v is None:
                raise ValueError(f"strong bound requires parameter {name}")
        if kappa < 1.0 / (2.0 * mu_up) - 1e-12:
            raise ValueError(
                f"strong bound requires kappa >= 1/(2*mu_up) = {1.0 / (2.0 * mu_up):.6g}, "
                f"got kappa = {kappa}"
            )
        rate = gamma_low / (2.0 * mu_up)
        if sigma_inf is None:
            return g0 * math.exp(-rate * t) + sigma_star**2 * mu_up / gamma_low
        if not (0.0 < lam < 1.0):
            raise ValueError(f"lambda must lie in (0, 1), got {lam}")
        return (g0 * math.exp(-rate * t)
                + (sigma_star**2 * mu_up / gamma_low) * math.exp(-rate * (1.0 - lam) * t)
                + (mu_up / gamma_low) * float(sigma_inf(lam * t)) ** 2)
    raise ValueError(f"unknown bound kind {kind!r}")
