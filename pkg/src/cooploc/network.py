"""Scenario generation: node placement, connectivity, and noisy ranging.

A scenario holds reference nodes at known positions (ids n+1..n+m), target
nodes at unknown positions (ids 1..n), and one symmetric range measurement
per connected unordered pair. Two nodes are connected when their true
distance is at most the communication range.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError

LOS = "los"
NLOS = "nlos"

_MAX_PLACEMENT_ATTEMPTS = 1000
_MAX_REJECTION_DRAWS = 100_000


class GenerationError(RuntimeError):
    """Scenario generation could not satisfy the connectivity requirement."""


@dataclass(frozen=True)
class ErrorModel:
    """Additive range-error model.

    In LOS mode the error is zero-mean Gaussian with std dev ``sigma``.
    In NLOS mode a uniform positive bias on [0, nlos_max] is added with
    probability ``p_nlos`` on top of the Gaussian term.
    """

    sigma: float = 1.0
    p_nlos: float = 0.0
    nlos_max: float = 0.0
    mode: str = LOS

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.p_nlos <= 1.0:
            raise ValueError("p_nlos must be in [0, 1]")
        if self.nlos_max < 0:
            raise ValueError("nlos_max must be >= 0")
        if self.mode not in (LOS, NLOS):
            raise ValueError(f"mode must be '{LOS}' or '{NLOS}', got {self.mode!r}")


def corner_layout(field_size: float = 100.0) -> np.ndarray:
    """Four references at the corners of the square field."""
    s = float(field_size)
    return np.array([[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]])


def corner_center_layout(field_size: float = 100.0) -> np.ndarray:
    """Four corner references plus one at the field center (the default)."""
    s = float(field_size)
    return np.vstack([corner_layout(s), [[s / 2.0, s / 2.0]]])


@dataclass(frozen=True)
class DeploymentConfig:
    """Node deployment and connectivity parameters.

    ``reference_layout`` defaults to the four corners plus the center of
    the square field. ``target_layout``, when given, pins the target
    positions instead of drawing them at random (its length must equal
    ``n_targets``).
    """

    field_size: float = 100.0
    n_targets: int = 20
    comm_range: float = 40.0
    seed: int = 0
    reference_layout: np.ndarray | None = None
    target_layout: np.ndarray | None = None

    def __post_init__(self):
        if self.field_size <= 0:
            raise ValueError("field_size must be > 0")
        if self.comm_range <= 0:
            raise ValueError("comm_range must be > 0")
        if self.n_targets < 0:
            raise ValueError("n_targets must be >= 0")
        if self.reference_layout is not None:
            refs = np.asarray(self.reference_layout, dtype=float)
            if refs.ndim != 2 or refs.shape[1] not in (2, 3) or refs.shape[0] == 0:
                raise ValueError("reference_layout must be a nonempty (m, 2|3) array")
            if not np.all(np.isfinite(refs)):
                raise ValueError("reference_layout must be finite")
            object.__setattr__(self, "reference_layout", refs)
        if self.target_layout is not None:
            tgts = np.asarray(self.target_layout, dtype=float)
            if tgts.ndim != 2 or tgts.shape[0] != self.n_targets:
                raise ValueError("target_layout must be an (n_targets, d) array")
            if not np.all(np.isfinite(tgts)):
                raise ValueError("target_layout must be finite")
            object.__setattr__(self, "target_layout", tgts)

    def references(self) -> np.ndarray:
        if self.reference_layout is not None:
            return self.reference_layout
        return corner_center_layout(self.field_size)


@dataclass(frozen=True)
class Scenario:
    """One network realization with symmetric range measurements.

    Target ids are 1..n (row i-1 of ``targets_true``); reference ids are
    n+1..n+m (row j-n-1 of ``references``). ``anchor_links[i-1]`` maps
    reference id -> measured range for target i; ``target_links[i-1]``
    maps neighbor target id -> measured range, stored under both
    endpoints with the identical value.
    """

    dimension: int
    references: np.ndarray
    targets_true: np.ndarray
    anchor_links: tuple[dict[int, float], ...]
    target_links: tuple[dict[int, float], ...]

    @property
    def n_targets(self) -> int:
        return self.targets_true.shape[0]

    @property
    def n_references(self) -> int:
        return self.references.shape[0]

    def reference_position(self, ref_id: int) -> np.ndarray:
        return self.references[ref_id - self.n_targets - 1]

    def degree(self, target_id: int) -> int:
        i0 = target_id - 1
        return len(self.anchor_links[i0]) + len(self.target_links[i0])

    def validate(self) -> None:
        n, m = self.n_targets, self.n_references
        if self.references.shape != (m, self.dimension) or self.targets_true.shape != (n, self.dimension):
            raise ValueError("position arrays inconsistent with dimension")
        if not (np.all(np.isfinite(self.references)) and np.all(np.isfinite(self.targets_true))):
            raise ValueError("positions must be finite")
        if len(self.anchor_links) != n or len(self.target_links) != n:
            raise ValueError("link tables must have one entry per target")
        ref_ids = set(range(n + 1, n + m + 1))
        for i0 in range(n):
            i = i0 + 1
            for j, r in self.anchor_links[i0].items():
                if j not in ref_ids:
                    raise ValueError(f"target {i} linked to unknown reference id {j}")
                if not (np.isfinite(r) and r >= 0):
                    raise ValueError(f"range for link ({i},{j}) must be finite and >= 0")
            for q, r in self.target_links[i0].items():
                if q == i:
                    raise ValueError(f"target {i} linked to itself")
                if not 1 <= q <= n:
                    raise ValueError(f"target {i} linked to unknown target id {q}")
                if not (np.isfinite(r) and r >= 0):
                    raise ValueError(f"range for link ({i},{q}) must be finite and >= 0")
                if self.target_links[q - 1].get(i) != r:
                    raise ValueError(f"asymmetric target link ({i},{q})")

    def to_json_dict(self) -> dict:
        n = self.n_targets
        return {
            "dimension": self.dimension,
            "references": [
                {"id": n + 1 + k, "position": list(map(float, row))}
                for k, row in enumerate(self.references)
            ],
            "targets_true": [
                {"id": i0 + 1, "position": list(map(float, row))}
                for i0, row in enumerate(self.targets_true)
            ],
            "anchor_links": {
                str(i0 + 1): {str(j): float(r) for j, r in sorted(links.items())}
                for i0, links in enumerate(self.anchor_links)
            },
            "target_links": {
                str(i0 + 1): {str(q): float(r) for q, r in sorted(links.items())}
                for i0, links in enumerate(self.target_links)
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Scenario":
        dimension = int(doc["dimension"])
        targets = sorted(doc["targets_true"], key=lambda e: int(e["id"]))
        refs = sorted(doc["references"], key=lambda e: int(e["id"]))
        n, m = len(targets), len(refs)
        if [int(e["id"]) for e in targets] != list(range(1, n + 1)):
            raise ValueError("target ids must be 1..n")
        if [int(e["id"]) for e in refs] != list(range(n + 1, n + m + 1)):
            raise ValueError("reference ids must be n+1..n+m")
        targets_true = np.array([e["position"] for e in targets], dtype=float).reshape(n, dimension)
        references = np.array([e["position"] for e in refs], dtype=float).reshape(m, dimension)
        anchor_links = tuple(
            {int(j): float(r) for j, r in doc["anchor_links"].get(str(i), {}).items()}
            for i in range(1, n + 1)
        )
        target_links = tuple(
            {int(q): float(r) for q, r in doc["target_links"].get(str(i), {}).items()}
            for i in range(1, n + 1)
        )
        scenario = cls(dimension, references, targets_true, anchor_links, target_links)
        scenario.validate()
        return scenario

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ConnectivityStats:
    anchor_degrees: np.ndarray
    target_degrees: np.ndarray

    @property
    def isolated(self) -> int:
        return int(np.sum(self.anchor_degrees + self.target_degrees == 0))


def measure_range(true_dist: float, err: ErrorModel, rng: np.random.Generator) -> float:
    """One noisy range measurement for a pair at the given true distance.

    The caller stores the same value under both endpoints of a pair: the
    four-way ranging handshake yields one shared estimate per pair, so a
    single draw is made here. The result may be negative; radii are
    clamped where balls are built.
    """
    if true_dist < 0:
        raise ValueError("true_dist must be >= 0")
    measured = true_dist + rng.normal(0.0, err.sigma)
    if err.mode == NLOS and rng.random() < err.p_nlos:
        measured += rng.uniform(0.0, err.nlos_max)
    return float(measured)


def _draw_targets(refs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points uniformly over the convex hull of the references."""
    d = refs.shape[1]
    if n == 0:
        return np.zeros((0, d))
    try:
        hull = Delaunay(refs)
    except QhullError as exc:
        raise GenerationError(f"reference layout does not span a {d}-D region: {exc}") from exc
    lo = refs.min(axis=0)
    hi = refs.max(axis=0)
    points = np.zeros((n, d))
    placed = 0
    for _ in range(_MAX_REJECTION_DRAWS):
        candidate = rng.uniform(lo, hi)
        if hull.find_simplex(candidate) >= 0:
            points[placed] = candidate
            placed += 1
            if placed == n:
                return points
    raise GenerationError("rejection sampling failed to place targets inside the reference hull")


def generate_scenario(
    cfg: DeploymentConfig, err: ErrorModel, rng: np.random.Generator | None = None
) -> Scenario:
    """Generate one scenario: placement, links, and symmetric measurements.

    Targets are redrawn (up to 1000 times) until every target is
    connected to at least one other node; a pinned target layout that
    leaves a target isolated fails immediately since redrawing cannot
    change it.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    refs = cfg.references()
    d = refs.shape[1]
    n = cfg.n_targets

    for _ in range(_MAX_PLACEMENT_ATTEMPTS):
        if cfg.target_layout is not None:
            if cfg.target_layout.shape[1] != d:
                raise ValueError("target_layout dimension differs from reference layout")
            targets = np.array(cfg.target_layout, dtype=float)
        else:
            targets = _draw_targets(refs, n, rng)

        anchor_pairs = [[] for _ in range(n)]  # (ref id, true distance)
        target_pairs = [[] for _ in range(n)]  # (target id, true distance), i < q only
        degrees = np.zeros(n, dtype=int)
        for i0 in range(n):
            dists = np.linalg.norm(refs - targets[i0], axis=1)
            for k in np.nonzero(dists <= cfg.comm_range)[0]:
                anchor_pairs[i0].append((n + 1 + int(k), float(dists[k])))
                degrees[i0] += 1
        for i0 in range(n):
            for q0 in range(i0 + 1, n):
                dist = float(np.linalg.norm(targets[i0] - targets[q0]))
                if dist <= cfg.comm_range:
                    target_pairs[i0].append((q0 + 1, dist))
                    degrees[i0] += 1
                    degrees[q0] += 1

        if n == 0 or np.all(degrees >= 1):
            break
        if cfg.target_layout is not None:
            raise GenerationError("pinned target layout leaves a target with no links")
    else:
        raise GenerationError(
            f"no fully connected placement found in {_MAX_PLACEMENT_ATTEMPTS} attempts; "
            f"comm_range={cfg.comm_range} is too small for this layout"
        )

    anchor_links = tuple(
        {j: max(measure_range(dist, err, rng), 0.0) for j, dist in anchor_pairs[i0]}
        for i0 in range(n)
    )
    target_links: tuple[dict[int, float], ...] = tuple({} for _ in range(n))
    for i0 in range(n):
        for q, dist in target_pairs[i0]:
            r = max(measure_range(dist, err, rng), 0.0)
            target_links[i0][q] = r
            target_links[q - 1][i0 + 1] = r

    scenario = Scenario(d, refs, targets, anchor_links, target_links)
    scenario.validate()
    return scenario


def connectivity_stats(s: Scenario) -> ConnectivityStats:
    """Per-target link counts |A_i| and |B_i|."""
    return ConnectivityStats(
        anchor_degrees=np.array([len(links) for links in s.anchor_links], dtype=int),
        target_degrees=np.array([len(links) for links in s.target_links], dtype=int),
    )
