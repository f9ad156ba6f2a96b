"""Cooperative localization solvers built from ball projections.

Three algorithms share one sweep structure over the targets in id order
1..n, each node using the freshest available neighbor estimates
(Gauss-Seidel):

* ``solve_ppm``  - per node, average the projections onto all of the
  node's measurement balls and move to the midpoint between that average
  and the current estimate. Each node update equals a gradient step of
  length 1/L_i on the squared-distance objective, with
  L_i = 4(|A_i| + |B_i|), so the objective is provably nonincreasing;
  with diagnostics enabled the solver verifies this and the per-sweep
  descent bound at runtime.
* ``solve_pocs`` - per node, 5*D_i sequential relaxed projections
  cycling over the node's D_i balls (unit relaxation for the first
  3*D_i, then harmonically decreasing).
* ``solve_ppb``  - the boundary variant: same midpoint averaging but
  projecting onto sphere boundaries, initialized from the nearest
  connected reference. Its objective is not monotone and is not checked.

An estimate stack is an (n, d) float array; row i-1 is the estimate for
target id i.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from .geometry import project_onto_balls, project_onto_spheres
from .network import Scenario

_MONOTONE_SLACK = 1e-12  # relative, on f(x^k) <= f(x^{k-1})
_DESCENT_SLACK = 1e-9  # absolute, on the per-sweep descent bound

_INITIALIZERS = ("random", "centroid", "explicit")


class DegenerateNodeError(ValueError):
    """A target with no links cannot be updated (the rule divides by its degree)."""


class NumericalFailureError(RuntimeError):
    """Non-finite values or a violated descent guarantee during a solve."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 300
    stop_tol: float = 1e-6
    initializer: str = "random"
    diagnostics: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be >= 0")
        if self.initializer not in _INITIALIZERS:
            raise ValueError(f"initializer must be one of {_INITIALIZERS}")


@dataclass
class IterationTrace:
    """Per-sweep diagnostics of one solver run.

    Row k-1 of each array describes sweep k (the update x^{k-1} -> x^k);
    ``block_grad_norms[k-1, i-1]`` is the norm of the objective's block-i
    gradient at the stack state just before node i was updated in that
    sweep.
    """

    f_initial: float
    f_values: np.ndarray
    residuals: np.ndarray
    block_grad_norms: np.ndarray
    wall_times: np.ndarray

    @property
    def iterations(self) -> int:
        return int(self.f_values.shape[0])

    @property
    def max_block_grad_norms(self) -> np.ndarray:
        if self.block_grad_norms.size == 0:
            return np.zeros(self.iterations)
        return self.block_grad_norms.max(axis=1)

    def to_csv(self, path) -> None:
        lines = ["k,f,residual,max_block_grad_norm"]
        max_g = self.max_block_grad_norms
        for k in range(self.iterations):
            lines.append(
                f"{k + 1},{float(self.f_values[k])!r},"
                f"{float(self.residuals[k])!r},{float(max_g[k])!r}"
            )
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")


class _NodeLinks:
    """Fixed link data for one target, plus a reusable projection buffer.

    ``centers`` holds the anchor ball centers in its first rows; the
    remaining rows are refilled with the current neighbor estimates at
    every visit.
    """

    __slots__ = ("anchor_count", "centers", "radii", "nbr_idx", "degree", "lipschitz", "radii_list")

    def __init__(self, anchor_centers, anchor_radii, nbr_idx, nbr_radii, dim):
        self.anchor_count = len(anchor_radii)
        degree = self.anchor_count + len(nbr_idx)
        self.degree = degree
        self.lipschitz = 4.0 * degree
        self.centers = np.zeros((degree, dim))
        if self.anchor_count:
            self.centers[: self.anchor_count] = anchor_centers
        self.nbr_idx = np.asarray(nbr_idx, dtype=np.intp)
        self.radii = np.concatenate(
            [np.asarray(anchor_radii, dtype=float), np.asarray(nbr_radii, dtype=float)]
        )
        self.radii_list = self.radii.tolist()

    def fill(self, x: np.ndarray) -> np.ndarray:
        if self.nbr_idx.size:
            self.centers[self.anchor_count :] = x[self.nbr_idx]
        return self.centers


class _Workspace:
    """Per-scenario arrays shared by the solvers and the objective."""

    def __init__(self, s: Scenario):
        n, d = s.n_targets, s.dimension
        self.n = n
        self.dim = d
        self.links = []
        a_t, a_c, a_r = [], [], []
        b_i, b_q, b_r = [], [], []
        for i0 in range(n):
            anchors = sorted(s.anchor_links[i0].items())
            nbrs = sorted(s.target_links[i0].items())
            centers = np.array([s.reference_position(j) for j, _ in anchors], dtype=float).reshape(
                len(anchors), d
            )
            self.links.append(
                _NodeLinks(
                    centers,
                    [r for _, r in anchors],
                    [q - 1 for q, _ in nbrs],
                    [r for _, r in nbrs],
                    d,
                )
            )
            for j, r in anchors:
                a_t.append(i0)
                a_c.append(s.reference_position(j))
                a_r.append(r)
            for q, r in nbrs:
                b_i.append(i0)
                b_q.append(q - 1)
                b_r.append(r)
        self.a_t = np.asarray(a_t, dtype=np.intp)
        self.a_centers = np.array(a_c, dtype=float).reshape(len(a_t), d)
        self.a_radii = np.asarray(a_r, dtype=float)
        self.b_i = np.asarray(b_i, dtype=np.intp)
        self.b_q = np.asarray(b_q, dtype=np.intp)
        self.b_radii = np.asarray(b_r, dtype=float)
        self.max_lipschitz = max((l.lipschitz for l in self.links), default=0.0)

    def objective(self, x: np.ndarray) -> float:
        total = 0.0
        if self.a_t.size:
            delta = x[self.a_t] - self.a_centers
            excess = np.maximum(np.sqrt(np.einsum("ij,ij->i", delta, delta)) - self.a_radii, 0.0)
            total += float(excess @ excess)
        if self.b_i.size:
            delta = x[self.b_i] - x[self.b_q]
            excess = np.maximum(np.sqrt(np.einsum("ij,ij->i", delta, delta)) - self.b_radii, 0.0)
            total += 0.5 * float(excess @ excess)
        return total


def _check_stack(x, s: Scenario) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.n_targets, s.dimension):
        raise ValueError(
            f"estimate stack must have shape {(s.n_targets, s.dimension)}, got {x.shape}"
        )
    return x


def block_lipschitz(s: Scenario, i: int) -> float:
    """Lipschitz constant of the block-i gradient: 4(|A_i| + |B_i|)."""
    return 4.0 * s.degree(i)


def objective_f(x, s: Scenario) -> float:
    """Squared distance-to-ball objective of an estimate stack.

    Sum over anchor links of max(||x_i - a_j|| - r_ij, 0)^2 plus half
    the sum over ordered target links of max(||x_i - x_q|| - r_iq, 0)^2
    (each pair is stored under both endpoints, hence the half). Zero
    exactly when every estimate lies in all of its measurement balls.
    """
    x = _check_stack(x, s)
    return _Workspace(s).objective(x)


def objective_projection_form(x, s: Scenario) -> float:
    """The same objective written through projections.

    Sum of ||x_i - P(x_i)||^2 over anchor balls plus half the sum over
    ordered neighbor balls, with P the ball projection. Used as the
    independent cross-check of ``objective_f``.
    """
    x = _check_stack(x, s)
    ws = _Workspace(s)
    total = 0.0
    for i0, links in enumerate(ws.links):
        if links.degree == 0:
            continue
        p = x[i0]
        proj = project_onto_balls(p, links.fill(x), links.radii)
        sq = np.einsum("ij,ij->i", p - proj, p - proj)
        na = links.anchor_count
        total += float(sq[:na].sum()) + 0.5 * float(sq[na:].sum())
    return total


def block_gradient(x, s: Scenario, i: int) -> np.ndarray:
    """Gradient of the objective with respect to target i's block.

    Equal to the sum over the node's balls of 2(x_i - P(x_i)), the
    neighbor balls being centered at the current estimates in x.
    """
    x = _check_stack(x, s)
    links = _Workspace(s).links[i - 1]
    if links.degree == 0:
        return np.zeros(s.dimension)
    p = x[i - 1]
    proj = project_onto_balls(p, links.fill(x), links.radii)
    return 2.0 * (links.degree * p - proj.sum(axis=0))


def ppm_update_node(x, s: Scenario, i: int) -> np.ndarray:
    """One parallel-projection update of target i.

    Midpoint between the current estimate and the average of its ball
    projections; equivalently a gradient step of length 1/L_i.
    """
    x = _check_stack(x, s)
    links = _Workspace(s).links[i - 1]
    if links.degree == 0:
        raise DegenerateNodeError(f"target {i} has no links")
    p = x[i - 1]
    proj = project_onto_balls(p, links.fill(x), links.radii)
    return 0.5 * p + proj.sum(axis=0) / (2.0 * links.degree)


def _require_connected(ws: _Workspace):
    for i0, links in enumerate(ws.links):
        if links.degree == 0:
            raise DegenerateNodeError(f"target {i0 + 1} has no links")


def _initial_stack(s: Scenario, cfg: SolverConfig, rng, x0) -> np.ndarray:
    if x0 is not None:
        x = np.array(x0, dtype=float)
        if x.shape != (s.n_targets, s.dimension):
            raise ValueError("explicit initial stack has the wrong shape")
        if not np.all(np.isfinite(x)):
            raise ValueError("explicit initial stack must be finite")
        return x
    if cfg.initializer == "explicit":
        raise ValueError("initializer 'explicit' requires an x0 argument")
    if cfg.initializer == "centroid":
        x = np.zeros((s.n_targets, s.dimension))
        fallback = s.references.mean(axis=0)
        for i0 in range(s.n_targets):
            anchors = sorted(s.anchor_links[i0])
            if anchors:
                x[i0] = np.mean([s.reference_position(j) for j in anchors], axis=0)
            else:
                x[i0] = fallback
        return x
    if rng is None:
        raise ValueError("initializer 'random' requires an rng")
    lo = s.references.min(axis=0)
    hi = s.references.max(axis=0)
    return rng.uniform(lo, hi, size=(s.n_targets, s.dimension))


def _iterate(x, ws: _Workspace, cfg: SolverConfig, sweep, check_descent: bool):
    """Run sweeps until the stack moves less than stop_tol or K is hit."""
    f_prev = ws.objective(x)
    f_initial = f_prev
    f_vals, residuals, grad_rows, wall = [], [], [], []
    inv_two_tau = 1.0 / (2.0 * ws.max_lipschitz) if ws.max_lipschitz else 0.0
    for k in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        x_prev = x.copy()
        gnorms = np.zeros(ws.n)
        sweep(x, gnorms)
        residual = float(np.linalg.norm((x - x_prev).ravel()))
        f_k = ws.objective(x)
        wall.append(time.perf_counter() - t0)
        if not (np.isfinite(f_k) and np.all(np.isfinite(x))):
            raise NumericalFailureError("non-finite value encountered", k)
        if check_descent and cfg.diagnostics:
            if f_k > f_prev + _MONOTONE_SLACK * max(1.0, f_prev):
                raise NumericalFailureError(
                    f"objective increased from {f_prev!r} to {f_k!r}", k
                )
            bound = inv_two_tau * float(gnorms @ gnorms)
            if f_prev - f_k < bound - _DESCENT_SLACK:
                raise NumericalFailureError(
                    f"descent bound violated: drop {f_prev - f_k!r} < {bound!r}", k
                )
        f_vals.append(f_k)
        residuals.append(residual)
        grad_rows.append(gnorms)
        f_prev = f_k
        if residual <= cfg.stop_tol:
            break
    trace = IterationTrace(
        f_initial=f_initial,
        f_values=np.asarray(f_vals),
        residuals=np.asarray(residuals),
        block_grad_norms=np.asarray(grad_rows).reshape(len(f_vals), ws.n),
        wall_times=np.asarray(wall),
    )
    return x, trace


def _empty_result(s: Scenario):
    empty = np.zeros((0, s.dimension))
    trace = IterationTrace(0.0, np.zeros(0), np.zeros(0), np.zeros((0, 0)), np.zeros(0))
    return empty, trace


def solve_ppm(s: Scenario, cfg: SolverConfig | None = None, rng=None, x0=None):
    """Run the parallel-projection solver on a scenario.

    Returns the final (n, d) estimate stack and the iteration trace.
    With diagnostics on (default), each sweep is checked against the
    monotone-descent guarantee and the descent bound; a violation is a
    solver bug and raises ``NumericalFailureError``.
    """
    cfg = cfg or SolverConfig()
    if s.n_targets == 0:
        return _empty_result(s)
    ws = _Workspace(s)
    _require_connected(ws)
    x = _initial_stack(s, cfg, rng, x0)

    if ws.dim == 2:

        def sweep(x, gnorms):
            for i0, links in enumerate(ws.links):
                degree = links.degree
                rows = links.fill(x).tolist()
                radii = links.radii_list
                px, py = x[i0].tolist()
                sx = sy = 0.0
                for b in range(degree):
                    cx, cy = rows[b]
                    dx = px - cx
                    dy = py - cy
                    dist = math.sqrt(dx * dx + dy * dy)
                    if dist > radii[b]:
                        scale = radii[b] / dist
                        sx += cx + dx * scale
                        sy += cy + dy * scale
                    else:
                        sx += px
                        sy += py
                gx = 2.0 * (degree * px - sx)
                gy = 2.0 * (degree * py - sy)
                gnorms[i0] = math.sqrt(gx * gx + gy * gy)
                half_deg = 2.0 * degree
                x[i0, 0] = 0.5 * px + sx / half_deg
                x[i0, 1] = 0.5 * py + sy / half_deg

    else:

        def sweep(x, gnorms):
            for i0, links in enumerate(ws.links):
                p = x[i0]
                proj = project_onto_balls(p, links.fill(x), links.radii)
                proj_sum = proj.sum(axis=0)
                grad = 2.0 * (links.degree * p - proj_sum)
                gnorms[i0] = math.sqrt(float(grad @ grad))
                x[i0] = 0.5 * p + proj_sum / (2.0 * links.degree)

    return _iterate(x, ws, cfg, sweep, check_descent=True)


def solve_pocs(s: Scenario, cfg: SolverConfig | None = None, rng=None, x0=None):
    """Run the sequential relaxed-projection baseline.

    Per sweep, each node performs 5*D_i projections cycling over its D_i
    balls: unit relaxation for the first 3*D_i, then relaxation
    1/(t - 3*D_i + 1) for projection counter t.
    """
    cfg = cfg or SolverConfig()
    if s.n_targets == 0:
        return _empty_result(s)
    ws = _Workspace(s)
    _require_connected(ws)
    x = _initial_stack(s, cfg, rng, x0)
    planar = ws.dim == 2

    def sweep(x, gnorms):
        for i0, links in enumerate(ws.links):
            degree = links.degree
            centers = links.fill(x)
            p = x[i0]
            rows = centers.tolist()
            radii = links.radii_list
            unit_until = 3 * degree
            t = 0
            if planar:
                px, py = p.tolist()
                if cfg.diagnostics:
                    sx = sy = 0.0
                    for b in range(degree):
                        cx, cy = rows[b]
                        dx = px - cx
                        dy = py - cy
                        dist = math.sqrt(dx * dx + dy * dy)
                        if dist > radii[b]:
                            scale = radii[b] / dist
                            sx += cx + dx * scale
                            sy += cy + dy * scale
                        else:
                            sx += px
                            sy += py
                    gx = 2.0 * (degree * px - sx)
                    gy = 2.0 * (degree * py - sy)
                    gnorms[i0] = math.sqrt(gx * gx + gy * gy)
                for _ in range(5):
                    for b in range(degree):
                        t += 1
                        cx, cy = rows[b]
                        dx = px - cx
                        dy = py - cy
                        dist = math.sqrt(dx * dx + dy * dy)
                        if dist > radii[b]:
                            lam = 1.0 if t <= unit_until else 1.0 / (t - unit_until + 1)
                            g = lam * (radii[b] / dist - 1.0)
                            px += g * dx
                            py += g * dy
                x[i0, 0] = px
                x[i0, 1] = py
            else:
                if cfg.diagnostics:
                    proj = project_onto_balls(p, centers, links.radii)
                    grad = 2.0 * (degree * p - proj.sum(axis=0))
                    gnorms[i0] = math.sqrt(float(grad @ grad))
                pt = p.tolist()
                dims = ws.dim
                for _ in range(5):
                    for b in range(degree):
                        t += 1
                        c = rows[b]
                        delta = [pt[a] - c[a] for a in range(dims)]
                        dist = math.sqrt(sum(v * v for v in delta))
                        if dist > radii[b]:
                            lam = 1.0 if t <= unit_until else 1.0 / (t - unit_until + 1)
                            g = lam * (radii[b] / dist - 1.0)
                            for a in range(dims):
                                pt[a] += g * delta[a]
                x[i0] = pt

    return _iterate(x, ws, cfg, sweep, check_descent=False)


def _ppb_initial_stack(s: Scenario, ws: _Workspace) -> np.ndarray:
    """Nearest-connected-reference initialization of the boundary solver.

    Targets without anchors copy the initial estimate of their nearest
    already-initialized neighbor (ids ascending); a target with neither
    starts at the center of the references' bounding box.
    """
    center = 0.5 * (s.references.min(axis=0) + s.references.max(axis=0))
    x = np.zeros((s.n_targets, s.dimension))
    for i0 in range(s.n_targets):
        anchors = s.anchor_links[i0]
        if anchors:
            j = min(anchors, key=lambda j: (anchors[j], j))
            x[i0] = s.reference_position(j)
            continue
        earlier = {q: r for q, r in s.target_links[i0].items() if q - 1 < i0}
        if earlier:
            q = min(earlier, key=lambda q: (earlier[q], q))
            x[i0] = x[q - 1]
        else:
            x[i0] = center
    return x


def solve_ppb(s: Scenario, cfg: SolverConfig | None = None, x0=None):
    """Run the boundary-projection baseline.

    Same midpoint averaging as ``solve_ppm`` but every projection lands
    on the sphere boundary (interior points included), with the
    deterministic nearest-reference initialization. ``x0`` overrides
    that initialization (diagnostic hook). The objective is recorded but
    not required to decrease.
    """
    cfg = cfg or SolverConfig()
    if s.n_targets == 0:
        return _empty_result(s)
    ws = _Workspace(s)
    _require_connected(ws)
    if x0 is not None:
        x = np.array(x0, dtype=float)
        if x.shape != (s.n_targets, s.dimension):
            raise ValueError("explicit initial stack has the wrong shape")
    else:
        x = _ppb_initial_stack(s, ws)

    if ws.dim == 2:

        def sweep(x, gnorms):
            for i0, links in enumerate(ws.links):
                degree = links.degree
                rows = links.fill(x).tolist()
                radii = links.radii_list
                px, py = x[i0].tolist()
                sx = sy = 0.0  # sphere projections, for the update
                bx = by = 0.0  # ball projections, for the gradient diagnostic
                for b in range(degree):
                    cx, cy = rows[b]
                    dx = px - cx
                    dy = py - cy
                    dist = math.sqrt(dx * dx + dy * dy)
                    if dist > 0.0:
                        scale = radii[b] / dist
                        qx = cx + dx * scale
                        qy = cy + dy * scale
                        sx += qx
                        sy += qy
                        if dist > radii[b]:
                            bx += qx
                            by += qy
                        else:
                            bx += px
                            by += py
                    else:
                        sx += px
                        sy += py
                        bx += px
                        by += py
                if cfg.diagnostics:
                    gx = 2.0 * (degree * px - bx)
                    gy = 2.0 * (degree * py - by)
                    gnorms[i0] = math.sqrt(gx * gx + gy * gy)
                half_deg = 2.0 * degree
                x[i0, 0] = 0.5 * px + sx / half_deg
                x[i0, 1] = 0.5 * py + sy / half_deg

    else:

        def sweep(x, gnorms):
            for i0, links in enumerate(ws.links):
                p = x[i0]
                centers = links.fill(x)
                if cfg.diagnostics:
                    proj = project_onto_balls(p, centers, links.radii)
                    grad = 2.0 * (links.degree * p - proj.sum(axis=0))
                    gnorms[i0] = math.sqrt(float(grad @ grad))
                proj = project_onto_spheres(p, centers, links.radii)
                x[i0] = 0.5 * p + proj.sum(axis=0) / (2.0 * links.degree)

    return _iterate(x, ws, cfg, sweep, check_descent=False)
