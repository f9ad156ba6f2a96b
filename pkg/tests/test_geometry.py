import numpy as np
import pytest

from cooploc.geometry import (
    Ball,
    DegenerateProjectionError,
    distance_to_ball,
    project_ball,
    project_onto_balls,
    project_onto_spheres,
    project_sphere,
)


def test_ball_clamps_negative_radius():
    b = Ball([0.0, 0.0], -3.0)
    assert b.radius == 0.0
    assert np.array_equal(project_ball(np.array([1.0, 0.0]), b), [0.0, 0.0])


def test_ball_rejects_nonfinite():
    with pytest.raises(ValueError):
        Ball([np.nan, 0.0], 1.0)
    with pytest.raises(ValueError):
        Ball([0.0, 0.0], np.inf)


def test_ball_rejects_bad_shape():
    with pytest.raises(ValueError):
        Ball([1.0], 1.0)
    with pytest.raises(ValueError):
        Ball([[1.0, 2.0]], 1.0)


def test_project_ball_inside_is_identity():
    p = np.array([0.0, 0.0])
    assert np.array_equal(project_ball(p, Ball([0.0, 0.0], 5.0)), p)


def test_project_ball_outside_on_axis():
    out = project_ball(np.array([10.0, 0.0]), Ball([0.0, 0.0], 5.0))
    np.testing.assert_allclose(out, [5.0, 0.0], atol=1e-15)


def test_project_ball_radial_scaling_matches_boundary_oracle():
    # ||p|| = 5, radius 2.5: nearest point of the disk is on the boundary
    # at p scaled by 1/2. Cross-check by minimizing over a dense boundary grid.
    p = np.array([3.0, 4.0])
    b = Ball([0.0, 0.0], 2.5)
    out = project_ball(p, b)
    np.testing.assert_allclose(out, [1.5, 2.0], atol=1e-12)

    theta = np.linspace(0.0, 2.0 * np.pi, 1_000_000, endpoint=False)
    boundary = b.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    dists = np.linalg.norm(boundary - p, axis=1)
    oracle = boundary[np.argmin(dists)]
    np.testing.assert_allclose(oracle, out, atol=1e-4)
    assert np.linalg.norm(p - out) <= dists.min() + 1e-12


def test_project_sphere_pushes_interior_to_boundary():
    out = project_sphere(np.array([1.0, 0.0]), Ball([0.0, 0.0], 5.0))
    np.testing.assert_allclose(out, [5.0, 0.0], atol=1e-15)


def test_project_sphere_agrees_with_ball_outside():
    p = np.array([10.0, 0.0])
    b = Ball([0.0, 0.0], 5.0)
    np.testing.assert_allclose(project_sphere(p, b), project_ball(p, b), atol=0)


def test_project_sphere_center_is_degenerate():
    with pytest.raises(DegenerateProjectionError):
        project_sphere(np.array([0.0, 0.0]), Ball([0.0, 0.0], 5.0))


def test_dimension_mismatch_is_an_error():
    b = Ball([0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        project_ball(np.array([1.0, 2.0, 3.0]), b)
    with pytest.raises(ValueError):
        distance_to_ball(np.array([1.0, 2.0, 3.0]), b)
    with pytest.raises(ValueError):
        project_sphere(np.array([1.0, 2.0, 3.0]), b)


def test_distance_to_ball_examples():
    assert distance_to_ball(np.array([0.0, 0.0]), Ball([0.0, 0.0], 5.0)) == 0.0
    assert distance_to_ball(np.array([8.0, 0.0]), Ball([0.0, 0.0], 5.0)) == pytest.approx(3.0)
    # ||(3,4)|| = 5 minus radius 2: cross-checked against the projection below
    p = np.array([3.0, 4.0])
    b = Ball([0.0, 0.0], 2.0)
    assert distance_to_ball(p, b) == pytest.approx(3.0, abs=1e-12)
    assert distance_to_ball(p, b) == pytest.approx(np.linalg.norm(p - project_ball(p, b)), abs=1e-12)


def _random_ball(rng, dim):
    return Ball(rng.uniform(-100.0, 100.0, dim), rng.uniform(0.0, 150.0))


@pytest.mark.parametrize("dim", [2, 3])
def test_projection_properties_random(dim):
    rng = np.random.default_rng(1234 + dim)
    for _ in range(2000):
        b = _random_ball(rng, dim)
        p = rng.uniform(-200.0, 200.0, dim)
        q = rng.uniform(-200.0, 200.0, dim)
        pp = project_ball(p, b)
        pq = project_ball(q, b)
        # nonexpansivity
        assert np.linalg.norm(pp - pq) <= np.linalg.norm(p - q) + 1e-12
        # membership
        assert np.linalg.norm(pp - b.center) <= b.radius + 1e-12
        # idempotence: bitwise for interior points, 1e-12 otherwise
        again = project_ball(pp, b)
        if np.linalg.norm(p - b.center) <= b.radius:
            assert np.array_equal(again, pp)
        else:
            assert np.linalg.norm(again - pp) <= 1e-12
        # distance consistency
        assert distance_to_ball(p, b) == pytest.approx(np.linalg.norm(p - pp), abs=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_vectorized_projections_match_scalar(dim):
    rng = np.random.default_rng(99)
    for _ in range(200):
        k = int(rng.integers(1, 8))
        centers = rng.uniform(-50.0, 50.0, (k, dim))
        radii = rng.uniform(0.0, 60.0, k)
        p = rng.uniform(-80.0, 80.0, dim)
        balls = [Ball(c, r) for c, r in zip(centers, radii)]
        many = project_onto_balls(p, centers, radii)
        for row, b in zip(many, balls):
            np.testing.assert_allclose(row, project_ball(p, b), rtol=0, atol=1e-12)
        many_s = project_onto_spheres(p, centers, radii)
        for row, b in zip(many_s, balls):
            if np.array_equal(p, b.center):
                assert np.array_equal(row, p)
            else:
                np.testing.assert_allclose(row, project_sphere(p, b), rtol=0, atol=1e-12)


def test_sphere_batch_keeps_point_at_coincident_center():
    p = np.array([2.0, 3.0])
    centers = np.array([[2.0, 3.0], [0.0, 0.0]])
    radii = np.array([5.0, 1.0])
    out = project_onto_spheres(p, centers, radii)
    assert np.array_equal(out[0], p)
    np.testing.assert_allclose(np.linalg.norm(out[1]), 1.0)


def test_zero_radius_sphere_projects_to_center():
    out = project_sphere(np.array([4.0, 0.0]), Ball([1.0, 0.0], 0.0))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=0)
