"""Monte-Carlo result aggregation: position errors, CDFs, residual curves.

All aggregation is over ``RunRecord`` values, one per (realization,
algorithm). The two evaluation metrics are the empirical CDF of the
per-target position error pooled over all realizations, and the average
per-iteration residual 1/(nN) * sum_m ||x^k_m - x^{k-1}_m||.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .solvers import IterationTrace

CDF_GRID_POINTS = 200
CDF_GRID_PERCENTILE = 99.9


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one algorithm on one network realization."""

    realization: int
    scenario_seed: tuple[int, ...]
    algorithm: str
    estimates: np.ndarray
    errors: np.ndarray
    trace: IterationTrace

    @property
    def n_targets(self) -> int:
        return int(self.errors.shape[0])

    def to_json_dict(self) -> dict:
        # Wall times stay in memory only: output bytes must be a pure
        # function of (config, master seed).
        t = self.trace
        return {
            "realization": self.realization,
            "scenario_seed": list(self.scenario_seed),
            "algorithm": self.algorithm,
            "estimates": [list(map(float, row)) for row in self.estimates],
            "errors": [float(e) for e in self.errors],
            "trace": {
                "f_initial": float(t.f_initial),
                "f": [float(v) for v in t.f_values],
                "residual": [float(v) for v in t.residuals],
                "max_block_grad_norm": [float(v) for v in t.max_block_grad_norms],
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RunRecord":
        tr = doc["trace"]
        k = len(tr["f"])
        max_g = np.asarray(tr["max_block_grad_norm"], dtype=float)
        trace = IterationTrace(
            f_initial=float(tr["f_initial"]),
            f_values=np.asarray(tr["f"], dtype=float),
            residuals=np.asarray(tr["residual"], dtype=float),
            block_grad_norms=max_g.reshape(k, 1),
            wall_times=np.zeros(k),
        )
        return cls(
            realization=int(doc["realization"]),
            scenario_seed=tuple(int(v) for v in doc["scenario_seed"]),
            algorithm=str(doc["algorithm"]),
            estimates=np.asarray(doc["estimates"], dtype=float),
            errors=np.asarray(doc["errors"], dtype=float),
            trace=trace,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CdfCurve:
    """Empirical CDF sampled on a grid of error abscissae (meters)."""

    alphas: np.ndarray
    values: np.ndarray

    def median(self) -> float:
        idx = np.searchsorted(self.values, 0.5, side="left")
        idx = min(idx, self.alphas.shape[0] - 1)
        return float(self.alphas[idx])


@dataclass(frozen=True)
class ResidualCurve:
    """Average residual per iteration, k = 1..K."""

    values: np.ndarray


def position_errors(records: list[RunRecord]) -> np.ndarray:
    """All per-target errors pooled over records (n*N values)."""
    if not records:
        return np.zeros(0)
    return np.concatenate([r.errors for r in records])


def errors_from_estimates(estimates: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-target Euclidean estimation errors ||x_hat_i - x_i||."""
    return np.linalg.norm(np.asarray(estimates) - np.asarray(truth), axis=1)


def default_grid(errors: np.ndarray) -> np.ndarray:
    """Evenly spaced abscissae from 0 to the 99.9th percentile of the errors."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("cannot build a grid from no errors")
    top = float(np.percentile(errors, CDF_GRID_PERCENTILE))
    return np.linspace(0.0, max(top, np.finfo(float).tiny), CDF_GRID_POINTS)


def empirical_cdf(errors, grid) -> CdfCurve:
    """Fraction of errors at or below each grid abscissa."""
    errors = np.sort(np.asarray(errors, dtype=float))
    if errors.size == 0:
        raise ValueError("empirical_cdf needs at least one error sample")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    counts = np.searchsorted(errors, grid, side="right")
    return CdfCurve(alphas=grid, values=counts / errors.size)


def sorted_step_cdf(errors) -> CdfCurve:
    """Exact step-function CDF on the sorted samples themselves."""
    errors = np.sort(np.asarray(errors, dtype=float))
    if errors.size == 0:
        raise ValueError("sorted_step_cdf needs at least one error sample")
    return CdfCurve(alphas=errors, values=np.arange(1, errors.size + 1) / errors.size)


def average_residual(traces: list[IterationTrace], n: int) -> ResidualCurve:
    """Average the residual traces of N runs over a common iteration axis.

    Runs that stopped early are padded with zeros (the estimate no
    longer moves once converged). The result at k is
    1/(n*N) * sum over runs of that run's residual at iteration k.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not traces:
        return ResidualCurve(values=np.zeros(0))
    k_max = max(t.residuals.shape[0] for t in traces)
    total = np.zeros(k_max)
    for t in traces:
        r = t.residuals
        total[: r.shape[0]] += r
    return ResidualCurve(values=total / (n * len(traces)))


def write_cdf_csv(path, grid: np.ndarray, curves: dict[str, CdfCurve]) -> None:
    """cdf.csv: one alpha column, one CDF column per algorithm (shared grid)."""
    names = list(curves)
    for name in names:
        if curves[name].alphas.shape != grid.shape or not np.array_equal(curves[name].alphas, grid):
            raise ValueError(f"curve {name!r} is not on the shared grid")
    lines = ["alpha," + ",".join(names)]
    for row in range(grid.shape[0]):
        cells = [repr(float(grid[row]))]
        cells += [repr(float(curves[name].values[row])) for name in names]
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_residual_csv(path, curves: dict[str, ResidualCurve]) -> None:
    """residual.csv: iteration index k and one averaged-residual column per algorithm."""
    names = list(curves)
    k_max = max((c.values.shape[0] for c in curves.values()), default=0)
    lines = ["k," + ",".join(names)]
    for row in range(k_max):
        cells = [str(row + 1)]
        for name in names:
            vals = curves[name].values
            cells.append(repr(float(vals[row])) if row < vals.shape[0] else repr(0.0))
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
