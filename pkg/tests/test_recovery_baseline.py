import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oseen_cpinn.recovery_baseline import (
    build_partition,
    fit_rate,
    h1_error,
    interpolate,
    rate_study,
)
from oseen_cpinn.sampling import dyadic_grid


def sinsin(p):
    return np.sin(2 * np.pi * p[:, 0]) * np.sin(2 * np.pi * p[:, 1])


def sinsin_grad(p):
    a, b = 2 * np.pi * p[:, 0], 2 * np.pi * p[:, 1]
    return 2 * np.pi * np.column_stack([np.cos(a) * np.sin(b), np.sin(a) * np.cos(b)])


def random_polynomial(degree, seed):
    """Random polynomial of total degree ``degree`` and its gradient."""
    rng = np.random.default_rng(seed)
    terms = [(a, b, rng.normal()) for a in range(degree + 1) for b in range(degree + 1 - a)]

    def f(p):
        return sum(c * p[:, 0] ** a * p[:, 1] ** b for a, b, c in terms)

    def grad(p):
        gx = sum(c * a * p[:, 0] ** max(a - 1, 0) * p[:, 1] ** b for a, b, c in terms if a)
        gy = sum(c * b * p[:, 0] ** a * p[:, 1] ** max(b - 1, 0) for a, b, c in terms if b)
        return np.column_stack([np.zeros(len(p)) + gx, np.zeros(len(p)) + gy])

    return f, grad


# partition

@pytest.mark.parametrize("k", [0, 1, 2, 4])
def test_partition_counts_and_area(k):
    part = build_partition(k)
    assert len(part.cubes) == 4**k and len(part.simplices) == 2 * 4**k
    v = part.simplices
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    assert abs(area.sum() - 1.0) <= 1e-12
    assert np.all(area > 0)


def test_partition_tiles_without_overlap():
    part = build_partition(2)
    interp = interpolate(lambda p: p[:, 0], 2, 2)
    pts = np.random.default_rng(0).random((2000, 2))
    ids = interp.locate(pts)
    v = part.simplices[ids]
    # barycentric coordinates are all non-negative in the located simplex
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d = pts - v[:, 0]
    s = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    t = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    assert np.all(s >= -1e-12) and np.all(t >= -1e-12) and np.all(s + t <= 1 + 1e-12)


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        build_partition(-1)
    with pytest.raises(ValueError):
        interpolate(sinsin, 1, 1)


# reproduction and continuity

@pytest.mark.parametrize("k", [0, 1, 3])
def test_linear_reproduction(k):
    interp = interpolate(lambda p: p[:, 0] + p[:, 1], k, 2)
    pts = np.random.default_rng(k).random((500, 2))
    assert np.abs(interp(pts) - pts.sum(axis=1)).max() <= 1e-12


def test_zero_function():
    interp = interpolate(lambda p: np.zeros(len(p)), 2, 3)
    assert np.all(interp(np.random.default_rng(0).random((50, 2))) == 0.0)


@pytest.mark.parametrize("r", [2, 3, 4, 5])
@pytest.mark.parametrize("k", [0, 2])
def test_polynomial_reproduction(r, k):
    f, grad = random_polynomial(r - 1, seed=10 * r + k)
    interp = interpolate(f, k, r)
    pts = np.random.default_rng(r).random((1000, 2))
    assert np.abs(interp(pts) - f(pts)).max() <= 1e-10
    assert h1_error(interp, f, grad) <= 1e-10


def test_constant_has_zero_error():
    interp = interpolate(lambda p: np.full(len(p), 3.5), 2, 3)
    assert h1_error(interp, lambda p: np.full(len(p), 3.5), lambda p: np.zeros((len(p), 2))) <= 1e-12


@pytest.mark.parametrize("r", [2, 3, 4])
def test_continuity_across_edges(r):
    k = 2
    interp = interpolate(sinsin, k, r)
    part = interp.partition
    rng = np.random.default_rng(r)
    n = 2**k
    worst = 0.0
    # diagonal edges inside each cube: shared by triangles 2c and 2c + 1
    c = rng.integers(0, n * n, 400)
    lam = rng.random(400)
    pts = part.cubes[c] + lam[:, None] / n
    worst = max(worst, np.abs(interp.evaluate_in(2 * c, pts) - interp.evaluate_in(2 * c + 1, pts)).max())
    # vertical cube faces: right edge of cube (i, j) against left edge of cube (i + 1, j)
    i, j = rng.integers(0, n - 1, 300), rng.integers(0, n, 300)
    y = (j + rng.random(300)) / n
    pts = np.column_stack([(i + 1) / n, y])
    left = (j * n + i) * 2       # triangle xi >= eta touches the right face
    right = (j * n + i + 1) * 2 + 1  # triangle eta >= xi touches the left face
    worst = max(worst, np.abs(interp.evaluate_in(left, pts) - interp.evaluate_in(right, pts)).max())
    # horizontal faces
    i, j = rng.integers(0, n, 300), rng.integers(0, n - 1, 300)
    x = (i + rng.random(300)) / n
    pts = np.column_stack([x, (j + 1) / n])
    below = (j * n + i) * 2 + 1
    above = ((j + 1) * n + i) * 2
    worst = max(worst, np.abs(interp.evaluate_in(below, pts) - interp.evaluate_in(above, pts)).max())
    assert worst <= 1e-10


def test_vector_equals_componentwise():
    def vec(p):
        return np.column_stack([sinsin(p), np.exp(p[:, 0] * p[:, 1])])

    pts = np.random.default_rng(0).random((200, 2))
    iv = interpolate(vec, 2, 3)(pts)
    a = interpolate(sinsin, 2, 3)(pts)
    b = interpolate(lambda p: np.exp(p[:, 0] * p[:, 1]), 2, 3)(pts)
    # same nodal data and basis; only the einsum reduction order differs
    np.testing.assert_allclose(iv, np.column_stack([a, b]), rtol=0, atol=1e-14)


def test_interpolant_matches_nodes():
    interp = interpolate(sinsin, 2, 4)
    g = dyadic_grid(2, 4)
    assert np.abs(interp(g) - sinsin(g)).max() <= 1e-12


# errors and rates

def test_error_ratio_r2():
    e3 = h1_error(interpolate(sinsin, 3, 2), sinsin, sinsin_grad)
    e4 = h1_error(interpolate(sinsin, 4, 2), sinsin, sinsin_grad)
    assert 1.7 <= e3 / e4 <= 2.3


def test_error_ratio_r3():
    e2 = h1_error(interpolate(sinsin, 2, 3), sinsin, sinsin_grad)
    e3 = h1_error(interpolate(sinsin, 3, 3), sinsin, sinsin_grad)
    assert 2.5 <= e2 / e3 <= 5.5


def test_h1_error_against_brute_force_quadrature():
    # independent oracle: dense midpoint rule on a square grid, point location by interp.locate
    interp = interpolate(sinsin, 2, 2)
    n = 512
    t = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(t, t)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    val, grad = interp(pts, gradient=True)
    sq = (sinsin(pts) - val) ** 2 + np.sum((sinsin_grad(pts) - grad) ** 2, axis=1)
    brute = np.sqrt(sq.mean())
    assert h1_error(interp, sinsin, sinsin_grad, refine=8) == pytest.approx(brute, rel=2e-2)


@pytest.mark.parametrize("r", [2, 3])
def test_refinement_monotone(r):
    errs = [h1_error(interpolate(sinsin, k, r), sinsin, sinsin_grad) for k in range(1, 6)]
    assert all(b <= 1.05 * a for a, b in zip(errs, errs[1:]))


def test_rate_study_rows():
    rows, slope = rate_study(sinsin, sinsin_grad, 2, range(2, 6))
    assert [r["k"] for r in rows] == [2, 3, 4, 5]
    assert rows[0]["m"] == 25
    assert slope == pytest.approx(-1.0, abs=0.1)


def test_fit_rate_examples():
    assert fit_rate([1, 2, 4, 8], [1, 0.25, 1 / 16, 1 / 64]) == pytest.approx(-2.0, abs=1e-10)
    assert fit_rate([1, 2, 4], [3, 3, 3]) == pytest.approx(0.0, abs=1e-12)
    assert fit_rate([1, 2, 4], [1, 0.25, 0.0625]) == pytest.approx(-2.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), st.floats(0.1, 10))
def test_fit_rate_recovers_power_laws(alpha, c):
    m = np.array([1.0, 3.0, 9.0, 27.0])
    assert fit_rate(m, c * m**alpha) == pytest.approx(alpha, abs=1e-9)


@pytest.mark.parametrize("sizes,errors", [([1, 2], [1, 1]), ([1, 0, 2], [1, 1, 1]), ([1, 2, 3], [1, -1, 1])])
def test_fit_rate_rejects_bad_input(sizes, errors):
    with pytest.raises(ValueError):
        fit_rate(sizes, errors)
