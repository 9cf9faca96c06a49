"""Streaming metric traces, ergodic averages and Monte-Carlo aggregation.

Running sums use Kahan compensation so that 50000-term ergodic averages
match a batch recomputation to ~1e-15 relative, well inside the 1e-12
contract the bound checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from monozero.operators import BilinearProblem

METRIC_COLUMNS = ("norm_M_sq", "gap", "dist_sq",
                  "ergodic_norm_M_sq", "ergodic_gap", "min_norm_M_sq")


class KahanSum:
    """Compensated scalar accumulator."""

    __slots__ = ("total", "_comp")

    def __init__(self):
        self.total = 0.0
        self._comp = 0.0

    def add(self, value: float) -> None:
        y = value - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t


class StreamingVectorMean:
    """Compensated running mean of a sequence of vectors."""

    def __init__(self, dim: int):
        self._sum = np.zeros(dim)
        self._comp = np.zeros(dim)
        self.count = 0

    def add(self, v: np.ndarray) -> None:
        y = v - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t
        self.count += 1

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            return np.full_like(self._sum, np.nan)
        return self._sum / self.count


@dataclass
class RunRecord:
    """Per-step metric trace of one solver run or one SDE trajectory.

    ``index`` holds the iteration counter k (discrete runs) or the time t
    (trajectories); ``index_name`` says which. Ergodic columns are running
    means of the raw columns over the window each bound is stated for.
    """

    index_name: str
    index: np.ndarray
    norm_M_sq: np.ndarray
    gap: np.ndarray
    dist_sq: np.ndarray
    ergodic_norm_M_sq: np.ndarray
    ergodic_gap: np.ndarray
    min_norm_M_sq: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    def column(self, name: str) -> np.ndarray:
        if name == self.index_name:
            return self.index
        if name not in METRIC_COLUMNS:
            raise KeyError(f"unknown metric column {name!r}")
        return getattr(self, name)


class MetricRecorder:
    """Accumulates raw metrics and windowed ergodic averages at a stride.

    Discrete mode (``weight is None`` at each step): ergodic columns are
    arithmetic means over iterations starting at ``sqnorm_start`` /
    ``gap_start``. Continuous mode (``weight=h``): ergodic columns are
    left-endpoint Riemann sums (1/t) * sum h*f over steps strictly before
    the current one.
    """

    def __init__(self, index_name: str = "k", sqnorm_start: int = 0,
                 gap_start: int = 0, stride: int = 1):
        if stride < 1:
            raise ValueError(f"record stride must be >= 1, got {stride}")
        self.index_name = index_name
        self.sqnorm_start = sqnorm_start
        self.gap_start = gap_start
        self.stride = stride
        self._sq_sum = KahanSum()
        self._gap_sum = KahanSum()
        self._sq_count = 0
        self._gap_count = 0
        self._min_sq = np.inf
        self._step = 0
        self._rows: list[tuple] = []

    def record(self, index_value: float, norm_m_sq: float, gap: float,
               dist_sq: float, weight: float | None = None,
               final: bool = False) -> None:
        step = self._step
        take_row = step % self.stride == 0 or final
        if norm_m_sq < self._min_sq:
            self._min_sq = norm_m_sq
        if weight is None:
            # discrete: the current iterate enters its window before the snapshot
            if step >= self.sqnorm_start:
                self._sq_sum.add(norm_m_sq)
                self._sq_count += 1
            if step >= self.gap_start:
                self._gap_sum.add(gap)
                self._gap_count += 1
            if take_row:
                erg_sq = self._sq_sum.total / self._sq_count if self._sq_count else np.nan
                erg_gap = self._gap_sum.total / self._gap_count if self._gap_count else np.nan
                self._rows.append((index_value, norm_m_sq, gap, dist_sq,
                                   erg_sq, erg_gap, self._min_sq))
        else:
            # continuous: snapshot first, so the ergodic value at time t is the
            # left-endpoint sum (1/t) * sum_{t_j < t} h * f_j
            if take_row:
                if index_value > 0:
                    erg_sq = self._sq_sum.total / index_value
                    erg_gap = self._gap_sum.total / index_value
                else:
                    erg_sq = np.nan
                    erg_gap = np.nan
                self._rows.append((index_value, norm_m_sq, gap, dist_sq,
                                   erg_sq, erg_gap, self._min_sq))
            self._sq_sum.add(weight * norm_m_sq)
            self._gap_sum.add(weight * gap)
        self._step += 1

    def finalize(self) -> RunRecord:
        data = np.array(self._rows, dtype=float).reshape(-1, 7)
        return RunRecord(
            index_name=self.index_name,
            index=data[:, 0],
            norm_M_sq=data[:, 1],
            gap=data[:, 2],
            dist_sq=data[:, 3],
            ergodic_norm_M_sq=data[:, 4],
            ergodic_gap=data[:, 5],
            min_norm_M_sq=data[:, 6],
        )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace_csv(record: RunRecord, path) -> None:
    """One row per recorded step; solver traces carry the running minimum."""
    include_min = record.index_name == "k"
    cols = [record.index_name, "norm_M_sq", "gap", "dist_sq",
            "ergodic_norm_M_sq", "ergodic_gap"]
    arrays = [record.index, record.norm_M_sq, record.gap, record.dist_sq,
              record.ergodic_norm_M_sq, record.ergodic_gap]
    if include_min:
        cols.append("min_norm_M_sq_so_far")
        arrays.append(record.min_norm_M_sq)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


@dataclass
class EnsembleSummary:
    """Pointwise mean / stderr / min / max of each metric across replicas."""

    replicas: int
    index_name: str
    index: np.ndarray
    mean: dict[str, np.ndarray] = field(default_factory=dict)
    stderr: dict[str, np.ndarray] = field(default_factory=dict)
    min: dict[str, np.ndarray] = field(default_factory=dict)
    max: dict[str, np.ndarray] = field(default_factory=dict)


def aggregate(records: list[RunRecord], replicas: int | None = None) -> EnsembleSummary:
    """Reduce replica traces sharing one recording grid to ensemble statistics."""
    if not records:
        raise ValueError("no traces to aggregate")
    R = len(records)
    if replicas is not None and replicas != R:
        raise ValueError(f"expected {replicas} traces, got {R}")
    grid = records[0].index
    for rec in records[1:]:
        if rec.index_name != records[0].index_name or not np.array_equal(rec.index, grid):
            raise ValueError("traces do not share a recording grid")
    summary = EnsembleSummary(replicas=R, index_name=records[0].index_name,
                              index=grid.copy())
    for name in METRIC_COLUMNS:
        stacked = np.vstack([rec.column(name) for rec in records])
        summary.mean[name] = stacked.mean(axis=0)
        if R > 1:
            summary.stderr[name] = stacked.std(axis=0, ddof=1) / np.sqrt(R)
        else:
            summary.stderr[name] = np.zeros(len(grid))
        summary.min[name] = stacked.min(axis=0)
        summary.max[name] = stacked.max(axis=0)
    return summary


def write_ensemble_csv(summary: EnsembleSummary, path) -> None:
    """Long-format CSV: one row per (step, metric)."""
    with open(path, "w", newline="") as fh:
        fh.write("step,metric,mean,stderr,min,max\n")
        for name in METRIC_COLUMNS:
            for i in range(len(summary.index)):
                fh.write(",".join([
                    _fmt(summary.index[i]), name,
                    _fmt(summary.mean[name][i]), _fmt(summary.stderr[name][i]),
                    _fmt(summary.min[name][i]), _fmt(summary.max[name][i]),
                ]) + "\n")


def read_ensemble_csv(path) -> EnsembleSummary:
    rows: dict[str, list[tuple]] = {}
    steps: list[float] = []
    seen_steps: dict[float, None] = {}
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        if header != ["step", "metric", "mean", "stderr", "min", "max"]:
            raise ValueError(f"not an ensemble CSV: unexpected header {header}")
        for line in fh:
            step_s, metric, mean_s, err_s, lo_s, hi_s = line.rstrip("\n").split(",")
            step = float(step_s)
            if step not in seen_steps:
                seen_steps[step] = None
                steps.append(step)
            rows.setdefault(metric, []).append(
                (step, float(mean_s), float(err_s), float(lo_s), float(hi_s)))
    index = np.array(steps)
    summary = EnsembleSummary(replicas=0, index_name="step", index=index)
    for metric, entries in rows.items():
        data = np.array([e[1:] for e in entries])
        if len(data) != len(index):
            raise ValueError(f"metric {metric!r} has {len(data)} rows, grid has {len(index)}")
        summary.mean[metric] = data[:, 0]
        summary.stderr[metric] = data[:, 1]
        summary.min[metric] = data[:, 2]
        summary.max[metric] = data[:, 3]
    return summary


def primal_dual_gap(problem: BilinearProblem, x_bar: np.ndarray, y_bar: np.ndarray,
                    saddle: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """phi(x_bar, y*) - phi(x*, y_bar); nonnegative at a true saddle (x*, y*)."""
    if saddle is None:
        saddle = problem.saddle
    x_star, y_star = saddle
    if x_bar.shape != x_star.shape or y_bar.shape != y_star.shape:
        raise ValueError(
            f"dimension mismatch: averages have shapes {x_bar.shape}/{y_bar.shape}, "
            f"saddle has {x_star.shape}/{y_star.shape}"
        )
    return problem.phi(x_bar, y_star) - problem.phi(x_star, y_bar)
