"""Stochastic optimistic and extragradient iterations with constant step size.

Both methods damp the rotation that defeats the plain forward iteration on
merely monotone problems: the optimistic update reuses the previous oracle
value as a correction term, the extragradient update takes a trial
half-step. The module also evaluates the closed-form right-hand sides of
the ergodic error bounds the iterates are checked against.

Conventions baked into the traces:
  * metric measurements always use the exact operator; oracle noise enters
    the dynamics only,
  * the optimistic ergodic windows are k = 1..K+1 for the squared operator
    norm and k = 2..K+2 for the gap; the extragradient windows are
    k = 0..K with the gap measured on the trial iterates y^k,
  * the oracle draw with subscript k occupies block k+1 of its substream
    (the decaying noise model divides by that index, which therefore
    starts at 1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from monozero.errors import DivergenceError
from monozero.metrics import MetricRecorder, RunRecord, StreamingVectorMean
from monozero.operators import OperatorSpec
from monozero.oracle import NoiseModel, SeedSpec, draw_blocks

METHODS = ("ogda", "eg", "forward")


@dataclass
class SolverConfig:
    """Method, step size, iteration budget and start points of one run.

    ``iterations`` is the highest iterate index produced; a run yields
    x^0, ..., x^iterations. ``x1`` applies to the optimistic method only
    and defaults to one noisy forward step from ``x0``.
    """

    method: str
    gamma: float
    iterations: int
    x0: np.ndarray
    x1: np.ndarray | None = None
    record_stride: int = 1
    store_iterates: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.iterations < 1:
            raise ValueError(f"need at least 1 iteration, got {self.iterations}")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x1 is not None:
            self.x1 = np.asarray(self.x1, dtype=float)


def validate_step_size(method: str, gamma: float, L: float) -> None:
    """Enforce the step-size regime of each method.

    The optimistic iteration is only convergent for gamma < 1/(2L) (hard
    error beyond) and its ergodic bound needs gamma < 1/(4L) (warning in
    between). The extragradient bound needs gamma < 1/(sqrt(3) L)
    (warning only).
    """
    if gamma <= 0:
        raise ValueError(f"step size must be positive, got {gamma}")
    if L <= 0 or method == "forward":
        return
    if method == "ogda":
        if gamma >= 1.0 / (2.0 * L):
            raise ValueError(
                f"optimistic step size gamma = {gamma:.6g} violates gamma < 1/(2L) = "
                f"{1.0 / (2.0 * L):.6g}; the iteration need not converge"
            )
        if gamma >= 1.0 / (4.0 * L):
            warnings.warn(
                f"gamma = {gamma:.6g} is outside gamma < 1/(4L) = {1.0 / (4.0 * L):.6g}; "
                "the ergodic bound does not apply",
                stacklevel=2,
            )
    elif method == "eg":
        if gamma >= 1.0 / (math.sqrt(3.0) * L):
            warnings.warn(
                f"gamma = {gamma:.6g} is outside gamma < 1/(sqrt(3)L) = "
                f"{1.0 / (math.sqrt(3.0) * L):.6g}; the ergodic bound does not apply",
                stacklevel=2,
            )


@dataclass
class IterateTrace:
    """Metrics and (optionally) iterate snapshots of one solver run."""

    method: str
    gamma: float
    iterations: int
    x0: np.ndarray
    x1: np.ndarray | None
    seed: SeedSpec
    noise: NoiseModel
    record: RunRecord
    final_x: np.ndarray
    x_bar: np.ndarray  # streaming mean of the gap-window iterates
    iterate_indices: np.ndarray | None = None
    x_iterates: np.ndarray | None = None
    y_iterates: np.ndarray | None = None


def _noise_lookup(noise: NoiseModel, dim: int, seed: SeedSpec, count: int):
    """Per-subscript additive noise, bit-identical to ``oracle.noise_vector``.

    Returns a callable r -> W_r (vector or broadcastable scalar) for block
    rows 1..count-1.
    """
    width = noise.draw_width(dim)
    if width == 0:
        return lambda r: 0.0
    blocks = draw_blocks(seed, count, width)
    if noise.kind == "iid-gaussian":
        scaled = (noise.sigma_star / np.sqrt(dim)) * blocks
        return lambda r: scaled[r]
    divisors = np.arange(count, dtype=float) * np.sqrt(dim)
    divisors[0] = 1.0  # row 0 is never drawn; the model's index starts at 1
    coeffs = (noise.decay_std * blocks[:, 0]) / divisors
    return lambda r: coeffs[r]


def _check_finite(value: float, index: int, method: str) -> None:
    if not value < math.inf:  # catches inf and NaN
        raise DivergenceError(
            f"{method} iterate left the finite range at index {index}", step=index
        )


def run_ogda(op: OperatorSpec, noise: NoiseModel, cfg: SolverConfig,
             seed: SeedSpec, x_star: np.ndarray | None = None) -> IterateTrace:
    """Run x^{k+1} = x^k - 2 gamma M(x^k, xi_k) + gamma M(x^{k-1}, xi_{k-1}).

    The correction reuses the stored previous oracle value; each iteration
    makes exactly one fresh oracle call on the "xi" substream. When ``x1``
    is not supplied it is initialized as x^0 - gamma M(x^0, xi_0).
    """
    if cfg.method != "ogda":
        raise ValueError(f"config method is {cfg.method!r}, expected 'ogda'")
    validate_step_size("ogda", cfg.gamma, op.lipschitz)
    total, offset = op.total_linear, op.offset
    dim = op.dim
    gamma = cfg.gamma
    K = cfg.iterations
    w_at = _noise_lookup(noise, dim, seed.with_stream("xi"), K + 2)

    have_star = x_star is not None
    star = np.asarray(x_star, dtype=float) if have_star else np.zeros(dim)

    recorder = MetricRecorder(index_name="k", sqnorm_start=1, gap_start=2,
                              stride=cfg.record_stride)
    x_bar = StreamingVectorMean(dim)
    idxs: list[int] = []
    snaps: list[np.ndarray] = []

    def measure(k: int, x: np.ndarray) -> None:
        m = total @ x + offset
        norm_sq = float(m @ m)
        _check_finite(norm_sq, k, "ogda")
        if have_star:
            d = x - star
            gap = float(m @ d)
            dist_sq = float(d @ d)
        else:
            gap = math.nan
            dist_sq = math.nan
        recorder.record(k, norm_sq, gap, dist_sq, final=(k == K))
        if k >= 2:
            x_bar.add(x)
        if cfg.store_iterates and (k % cfg.record_stride == 0 or k == K):
            idxs.append(k)
            snaps.append(x.copy())

    # non-finite states are detected explicitly; keep overflow warnings quiet
    with np.errstate(over="ignore", invalid="ignore"):
        x_prev = cfg.x0
        m_prev = total @ x_prev + offset + w_at(1)  # oracle value with subscript 0
        x = cfg.x1 if cfg.x1 is not None else x_prev - gamma * m_prev
        x1_resolved = x.copy()
        measure(0, x_prev)
        measure(1, x)
        two_gamma = 2.0 * gamma
        for k in range(1, K):
            m_k = total @ x + offset + w_at(k + 1)
            x_next = x - two_gamma * m_k + gamma * m_prev
            m_prev = m_k
            x = x_next
            measure(k + 1, x)

    return IterateTrace(
        method="ogda", gamma=gamma, iterations=K, x0=cfg.x0.copy(), x1=x1_resolved,
        seed=seed, noise=noise, record=recorder.finalize(), final_x=x.copy(),
        x_bar=x_bar.mean,
        iterate_indices=np.array(idxs) if cfg.store_iterates else None,
        x_iterates=np.array(snaps) if cfg.store_iterates else None,
    )


def run_eg(op: OperatorSpec, noise: NoiseModel, cfg: SolverConfig,
           seed: SeedSpec, x_star: np.ndarray | None = None) -> IterateTrace:
    """Run y^k = x^k - gamma M(x^k, xi_k); x^{k+1} = x^k - gamma M(y^k, eta_k).

    The two oracle calls per iteration use the independent "xi" and "eta"
    substreams. Row k of the trace pairs the squared operator norm at x^k
    with the gap measured at the trial point y^k.
    """
    if cfg.method != "eg":
        raise ValueError(f"config method is {cfg.method!r}, expected 'eg'")
    if cfg.x1 is not None:
        raise ValueError("x1 applies to the optimistic method only")
    validate_step_size("eg", cfg.gamma, op.lipschitz)
    total, offset = op.total_linear, op.offset
    dim = op.dim
    gamma = cfg.gamma
    K = cfg.iterations
    w_xi = _noise_lookup(noise, dim, seed.with_stream("xi"), K + 2)
    w_eta = _noise_lookup(noise, dim, seed.with_stream("eta"), K + 2)

    have_star = x_star is not None
    star = np.asarray(x_star, dtype=float) if have_star else np.zeros(dim)

    recorder = MetricRecorder(index_name="k", sqnorm_start=0, gap_start=0,
                              stride=cfg.record_stride)
    y_bar = StreamingVectorMean(dim)
    idxs: list[int] = []
    snaps_x: list[np.ndarray] = []
    snaps_y: list[np.ndarray] = []

    def measure(k: int, x: np.ndarray, y: np.ndarray) -> None:
        m_x = total @ x + offset
        norm_sq = float(m_x @ m_x)
        _check_finite(norm_sq, k, "eg")
        if have_star:
            m_y = total @ y + offset
            dy = y - star
            gap = float(m_y @ dy)
            dx = x - star
            dist_sq = float(dx @ dx)
        else:
            gap = math.nan
            dist_sq = math.nan
        recorder.record(k, norm_sq, gap, dist_sq, final=(k == K))
        y_bar.add(y)
        if cfg.store_iterates and (k % cfg.record_stride == 0 or k == K):
            idxs.append(k)
            snaps_x.append(x.copy())
            snaps_y.append(y.copy())

    with np.errstate(over="ignore", invalid="ignore"):
        x = cfg.x0
        for k in range(K):
            y = x - gamma * (total @ x + offset + w_xi(k + 1))
            x_next = x - gamma * (total @ y + offset + w_eta(k + 1))
            measure(k, x, y)
            x = x_next
        # trial point at the final iterate completes the k = 0..K windows
        y = x - gamma * (total @ x + offset + w_xi(K + 1))
        measure(K, x, y)

    return IterateTrace(
        method="eg", gamma=gamma, iterations=K, x0=cfg.x0.copy(), x1=None,
        seed=seed, noise=noise, record=recorder.finalize(), final_x=x.copy(),
        x_bar=y_bar.mean,
        iterate_indices=np.array(idxs) if cfg.store_iterates else None,
        x_iterates=np.array(snaps_x) if cfg.store_iterates else None,
        y_iterates=np.array(snaps_y) if cfg.store_iterates else None,
    )


def run_forward(op: OperatorSpec, noise: NoiseModel, cfg: SolverConfig,
                seed: SeedSpec, x_star: np.ndarray | None = None) -> IterateTrace:
    """Plain forward iteration x^{k+1} = x^k - gamma M(x^k, xi_k).

    Included as the negative baseline: without a correction term it spirals
    outward on rotation-dominated problems.
    """
    if cfg.method != "forward":
        raise ValueError(f"config method is {cfg.method!r}, expected 'forward'")
    if cfg.x1 is not None:
        raise ValueError("x1 applies to the optimistic method only")
    validate_step_size("forward", cfg.gamma, op.lipschitz)
    total, offset = op.total_linear, op.offset
    dim = op.dim
    gamma = cfg.gamma
    K = cfg.iterations
    w_at = _noise_lookup(noise, dim, seed.with_stream("xi"), K + 2)

    have_star = x_star is not None
    star = np.asarray(x_star, dtype=float) if have_star else np.zeros(dim)

    recorder = MetricRecorder(index_name="k", sqnorm_start=0, gap_start=0,
                              stride=cfg.record_stride)
    x_bar = StreamingVectorMean(dim)
    idxs: list[int] = []
    snaps: list[np.ndarray] = []

    def measure(k: int, x: np.ndarray) -> None:
        m = total @ x + offset
        norm_sq = float(m @ m)
        _check_finite(norm_sq, k, "forward")
        if have_star:
            d = x - star
            gap = float(m @ d)
            dist_sq = float(d @ d)
        else:
            gap = math.nan
            dist_sq = math.nan
        recorder.record(k, norm_sq, gap, dist_sq, final=(k == K))
        x_bar.add(x)
        if cfg.store_iterates and (k % cfg.record_stride == 0 or k == K):
            idxs.append(k)
            snaps.append(x.copy())

    with np.errstate(over="ignore", invalid="ignore"):
        x = cfg.x0
        for k in range(K):
            measure(k, x)
            x = x - gamma * (total @ x + offset + w_at(k + 1))
        measure(K, x)

    return IterateTrace(
        method="forward", gamma=gamma, iterations=K, x0=cfg.x0.copy(), x1=None,
        seed=seed, noise=noise, record=recorder.finalize(), final_x=x.copy(),
        x_bar=x_bar.mean,
        iterate_indices=np.array(idxs) if cfg.store_iterates else None,
        x_iterates=np.array(snaps) if cfg.store_iterates else None,
    )


def ogda_bound(K: int, gamma: float, L: float, sigma_star: float,
               x0: np.ndarray, x1: np.ndarray, x_star: np.ndarray,
               which: str = "sqnorm") -> float:
    """Ergodic error bound of the optimistic method at window length K+1.

    "sqnorm" bounds the average of ||M(x^k)||^2 over k = 1..K+1; "gap"
    bounds the average of <M(x^k), x^k - x*> over k = 2..K+2. Requires
    gamma < 1/(4L).
    """
    if gamma <= 0:
        raise ValueError(f"step size must be positive, got {gamma}")
    if K < 0:
        raise ValueError(f"window index K must be nonnegative, got {K}")
    a = (gamma * L) ** 2
    if 16.0 * a >= 1.0:  # also keeps 1 - 4a and 1 - 16a positive below
        raise ValueError(
            f"bound hypothesis gamma < 1/(4L) violated: gamma = {gamma:.6g}, "
            f"1/(4L) = {1.0 / (4.0 * L):.6g}"
        )
    d1 = x1 - x_star
    dist1_sq = float(d1 @ d1)
    s = x1 - x0
    step_sq = float(s @ s)
    var = sigma_star**2
    if which == "sqnorm":
        bracket = (4.0 * dist1_sq
                   + (4.0 * a * (1.0 - a) / (1.0 - 4.0 * a)) * step_sq
                   + 8.0 * gamma**2 * var)
        lead = 2.0 * (1.0 - 4.0 * a) / (gamma**2 * (1.0 - 16.0 * a))
        return lead * bracket / (K + 1) + (16.0 * a + 11.0) / (1.0 - 16.0 * a) * var
    if which == "gap":
        bracket = (2.0 * dist1_sq / gamma
                   + (2.0 * gamma * L**2 * (1.0 - a) / (1.0 - 4.0 * a)) * step_sq
                   + 4.0 * gamma * var)
        return bracket / (K + 1) + gamma * (16.0 * a + 11.0) / (4.0 * (1.0 - 4.0 * a)) * var
    raise ValueError(f"unknown bound selector {which!r}")


def eg_bound(K: int, gamma: float, L: float, sigma_star: float,
             x0: np.ndarray, x_star: np.ndarray, which: str = "sqnorm") -> float:
    """Ergodic error bound of the extragradient method at window length K+1.

    "sqnorm" bounds the average of ||M(x^k)||^2 and "gap" the average of
    <M(y^k), y^k - x*>, both over k = 0..K. Requires gamma < 1/(sqrt(3)L).
    """
    if gamma <= 0:
        raise ValueError(f"step size must be positive, got {gamma}")
    if K < 0:
        raise ValueError(f"window index K must be nonnegative, got {K}")
    b = 3.0 * (gamma * L) ** 2
    if b >= 1.0:
        raise ValueError(
            f"bound hypothesis gamma < 1/(sqrt(3)L) violated: gamma = {gamma:.6g}, "
            f"1/(sqrt(3)L) = {1.0 / (math.sqrt(3.0) * L):.6g}"
        )
    d0 = x0 - x_star
    dist0_sq = float(d0 @ d0)
    var = sigma_star**2
    if which == "sqnorm":
        return dist0_sq / (2.0 * (1.0 - b) * (K + 1)) + gamma**2 * (2.0 + b) / (1.0 - b) * var
    if which == "gap":
        return dist0_sq / (2.0 * gamma * (K + 1)) + gamma * (2.0 + b) * var
    raise ValueError(f"unknown bound selector {which!r}")
