"""Points, closed Euclidean balls, and least-distance projections.

Every solver in this package is built from the two projection operators
defined here: the orthogonal projection onto a closed ball and the
projection onto its boundary sphere. Points are plain numpy arrays of
length 2 or 3, in meters.
"""

from dataclasses import dataclass

import numpy as np

Point = np.ndarray


class DegenerateProjectionError(ValueError):
    """Sphere projection requested from the sphere's own center."""


def as_point(p) -> Point:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] not in (2, 3):
        raise ValueError(f"point must be a 1-D vector of length 2 or 3, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


@dataclass(frozen=True)
class Ball:
    """Closed ball {z : ||z - center|| <= radius}.

    A negative radius (possible for raw measured ranges) is clamped to
    zero at construction; the zero-radius ball is the singleton {center}.
    """

    center: Point
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        r = float(self.radius)
        if not np.isfinite(r):
            raise ValueError("radius must be finite")
        object.__setattr__(self, "radius", max(r, 0.0))

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def contains(self, p: Point, tol: float = 0.0) -> bool:
        p = _check_dims(p, self.center)
        return float(np.linalg.norm(p - self.center)) <= self.radius + tol


def _check_dims(p, center) -> Point:
    p = as_point(p)
    if p.shape != center.shape:
        raise ValueError(f"dimension mismatch: point is {p.shape[0]}-D, ball is {center.shape[0]}-D")
    return p


def project_ball(p: Point, b: Ball) -> Point:
    """Orthogonal projection of p onto the closed ball b.

    Returns p itself when p lies in the ball, else the radial point
    center + radius * (p - center) / ||p - center||.
    """
    p = _check_dims(p, b.center)
    delta = p - b.center
    dist = float(np.linalg.norm(delta))
    if dist <= b.radius:
        return p
    return b.center + delta * (b.radius / dist)


def project_sphere(p: Point, b: Ball) -> Point:
    """Projection of p onto the boundary sphere of b.

    Unlike ``project_ball`` this moves interior points out to the
    boundary. The direction is undefined when p coincides with the
    center, which raises ``DegenerateProjectionError``; callers that
    need a total map (the boundary-projection solver) substitute p
    itself for that term.
    """
    p = _check_dims(p, b.center)
    delta = p - b.center
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise DegenerateProjectionError("cannot project the center of a sphere onto its boundary")
    return b.center + delta * (b.radius / dist)


def distance_to_ball(p: Point, b: Ball) -> float:
    """Euclidean distance from p to the ball: max(||p - center|| - radius, 0)."""
    p = _check_dims(p, b.center)
    return max(float(np.linalg.norm(p - b.center)) - b.radius, 0.0)


def project_onto_balls(p: Point, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Project one point onto many balls at once.

    centers is (k, d), radii is (k,); returns the (k, d) array of ball
    projections of p. Vectorized form of ``project_ball`` for the inner
    solver loops.
    """
    delta = p[np.newaxis, :] - centers
    dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
    outside = dist > radii
    scale = np.ones_like(dist)
    np.divide(radii, dist, out=scale, where=outside)
    return np.where(outside[:, np.newaxis], centers + delta * scale[:, np.newaxis], p)


def project_onto_spheres(p: Point, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Project one point onto many boundary spheres at once.

    Rows where p coincides with the center keep p itself (the
    substitution rule used by the boundary-projection solver, since the
    direction is undefined there).
    """
    delta = p[np.newaxis, :] - centers
    dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
    proper = dist > 0.0
    scale = np.ones_like(dist)
    np.divide(radii, dist, out=scale, where=proper)
    return np.where(proper[:, np.newaxis], centers + delta * scale[:, np.newaxis], p)
