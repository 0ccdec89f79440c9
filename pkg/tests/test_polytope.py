import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from qd_model.errors import DimensionMismatchError, InputError
from qd_model.polytope import (
    Polytope,
    contains,
    convex_hull_union,
    distance,
    lower_support,
    minkowski_sum_all,
    nearest_point,
    orthogonal_complement,
    scale,
    span_basis,
    support,
    translate,
    unit_directions,
)

SQUARE = Polytope([[0, 0], [1, 0], [0, 1], [1, 1]])


def test_canonical_drops_interior_and_duplicates():
    p = Polytope([[1, 1], [0, 0], [0.5, 0.5], [1, 0], [0, 1], [1, 0], [0.2, 0.7]])
    assert_allclose(p.vertices, [[0, 0], [0, 1], [1, 0], [1, 1]])


def test_collinear_points_keep_endpoints():
    p = Polytope([[1, 1], [0, 0], [2, 2], [0.5, 0.5]])
    assert_allclose(p.vertices, [[0, 0], [2, 2]])


def test_cube_vertices_in_three_dimensions():
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=float)
    p = Polytope(np.vstack([corners, [[0.5, 0.5, 0.5], [0.2, 0.3, 0.9]]]))
    assert len(p) == 8
    assert_allclose(p.vertices, corners)


def test_flat_set_in_three_dimensions():
    p = Polytope([[0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1], [0.5, 0.5, 1]])
    assert len(p) == 4


def test_minkowski_sum_of_segments_is_square():
    a = Polytope([[-1, 0], [1, 0]])
    b = Polytope([[0, -1], [0, 1]])
    box = Polytope([[-1, -1], [-1, 1], [1, -1], [1, 1]])
    assert a + b == box


def test_support_is_additive(random_polytope, rng):
    for _ in range(20):
        a, b = random_polytope(4), random_polytope(3)
        h = rng.standard_normal(2)
        assert support(a + b, h) == pytest.approx(support(a, h) + support(b, h), abs=1e-10)
        assert lower_support(a, h) == pytest.approx(-support(a, -h), abs=1e-12)


def test_scale_translate_and_union():
    assert scale(SQUARE, -1.0) == Polytope([[0, 0], [-1, 0], [0, -1], [-1, -1]])
    assert translate(SQUARE, [1, 1]) == Polytope([[1, 1], [2, 1], [1, 2], [2, 2]])
    hull = convex_hull_union([Polytope.point([0, 0]), Polytope.point([2, 0]), Polytope.point([1, 0])])
    assert_allclose(hull.vertices, [[0, 0], [2, 0]])


def test_empty_minkowski_sum_needs_dimension():
    assert minkowski_sum_all([], dim=3) == Polytope.zeros(3)
    with pytest.raises(InputError):
        minkowski_sum_all([])


@pytest.mark.parametrize("q, point, dist", [
    ([2.0, 0.5], [1.0, 0.5], 1.0),
    ([2.0, 2.0], [1.0, 1.0], np.sqrt(2.0)),
    ([-1.0, -1.0], [0.0, 0.0], np.sqrt(2.0)),
])
def test_nearest_point_on_square(q, point, dist):
    p, d = nearest_point(SQUARE, q)
    assert_allclose(p, point, atol=1e-10)
    assert d == pytest.approx(dist, abs=1e-10)


def test_inside_point_has_zero_distance():
    assert distance(SQUARE, [0.3, 0.6]) == pytest.approx(0.0, abs=1e-10)
    assert contains(SQUARE, [1.0, 0.5])
    assert not contains(SQUARE, [1.0 + 1e-6, 0.5])


def test_nearest_point_satisfies_projection_inequality(random_polytope, rng):
    # <v - p, q - p> <= 0 для всех вершин v
    for _ in range(50):
        a = random_polytope(6, dim=3)
        q = rng.uniform(-3, 3, size=3)
        p, d = nearest_point(a, q)
        assert d == pytest.approx(np.linalg.norm(p - q), abs=1e-10)
        assert np.all((a.vertices - p) @ (q - p) <= 1e-8)


def test_span_and_complement():
    basis = span_basis([[1, 0, 0], [2, 0, 0]])
    assert basis.shape == (1, 3)
    comp = orthogonal_complement(basis, 3)
    assert comp.shape == (2, 3)
    assert_allclose(comp @ basis.T, 0.0, atol=1e-12)
    assert orthogonal_complement(np.zeros((0, 2)), 2).shape == (2, 2)


@pytest.mark.parametrize("dim, count", [(1, 5), (2, 36), (3, 100), (4, 50)])
def test_unit_directions_are_unit(dim, count):
    dirs = unit_directions(dim, count)
    assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_invalid_polytopes():
    with pytest.raises(InputError):
        Polytope([])
    with pytest.raises(InputError):
        Polytope([[0.0, np.nan]])
    with pytest.raises(DimensionMismatchError):
        SQUARE + Polytope.point([0, 0, 0])
    with pytest.raises(DimensionMismatchError):
        support(SQUARE, [1, 0, 0])


def _extreme_by_membership(points):
    """Точка крайняя, если не лежит в выпуклой оболочке остальных."""
    keep = []
    for i in range(len(points)):
        others = np.delete(points, i, axis=0)
        a_eq = np.vstack([others.T, np.ones((1, len(others)))])
        b_eq = np.append(points[i], 1.0)
        res = linprog(np.zeros(len(others)), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status != 0:
            keep.append(i)
    return points[keep]


def test_canonical_form_is_idempotent_and_order_free(rng):
    for _ in range(20):
        pts = rng.uniform(-1, 1, size=(12, 2))
        p = Polytope(pts)
        assert Polytope(p.vertices) == p
        assert_allclose(Polytope(rng.permutation(pts)).vertices, p.vertices, atol=0.0)


def test_planar_hull_matches_membership_oracle(rng):
    for _ in range(20):
        pts = rng.uniform(-1, 1, size=(15, 2))
        expected = _extreme_by_membership(pts)
        expected = expected[np.lexsort(expected.T[::-1])]
        assert_allclose(Polytope(pts).vertices, expected, atol=1e-12)
        assert len(Polytope(pts)) == len(ConvexHull(pts).vertices)


def test_minkowski_sum_is_commutative_and_associative(random_polytope):
    for _ in range(10):
        a, b, c = random_polytope(4), random_polytope(3), random_polytope(5)
        assert a + b == b + a
        assert (a + b) + c == a + (b + c)


def test_nearest_point_is_nonexpansive(random_polytope, rng):
    for _ in range(50):
        a = random_polytope(6, dim=3)
        q1, q2 = rng.uniform(-3, 3, size=(2, 3))
        p1, _ = nearest_point(a, q1)
        p2, _ = nearest_point(a, q2)
        assert np.linalg.norm(p1 - p2) <= np.linalg.norm(q1 - q2) + 1e-8


def test_distance_agrees_with_dense_boundary_sampling(random_polytope, rng):
    t = np.linspace(0.0, 1.0, 2001)[:, None]
    for _ in range(10):
        a = random_polytope(6)
        angle = rng.uniform(0, 2 * np.pi)
        q = 3.0 * np.array([np.cos(angle), np.sin(angle)])
        v = a.vertices
        samples = np.vstack([v[i] + t * (v[j] - v[i]) for i in range(len(v)) for j in range(i + 1, len(v))])
        sampled = np.min(np.linalg.norm(samples - q, axis=1))
        d = distance(a, q)
        assert sampled >= d - 1e-9
        assert sampled <= d + 2e-3


@pytest.mark.parametrize("n, k", [(3, 1), (4, 2), (5, 3), (6, 6)])
def test_span_basis_of_random_rank(rng, n, k):
    gen = rng.standard_normal((k, n))
    points = rng.standard_normal((8, k)) @ gen
    basis = span_basis(points)
    assert basis.shape == (k, n)
    assert_allclose(basis @ basis.T, np.eye(k), atol=1e-10)
    assert_allclose(points @ basis.T @ basis, points, atol=1e-9)
    assert orthogonal_complement(basis, n).shape == (n - k, n)
