import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import annulus_points, random_sym
from ewdecay.tensor import (EllipticityError, MatrixField, RadialDomainError, SymmetryError,
                            assumption_a_margin, constant_tensor, contract, ellipticity_bounds,
                            exponential_profile, isotropic_tensor, lame_tensor, max_delta,
                            quadratic_profile, radial_derivative, radial_profile,
                            scalar_condition_check, scan_delta, voigt_from_tensor, voigt_matrix,
                            voigt_vector)


def tensor_from_voigt(V, n):
    """Independent inverse of the weighted Voigt map (test oracle)."""
    pairs = [(i, i) for i in range(n)] + [(i, j) for i in range(n) for j in range(i + 1, n)]
    w = [1.0 if i == j else np.sqrt(2.0) for i, j in pairs]
    a = np.zeros((n,) * 4)
    for p, (i, j) in enumerate(pairs):
        for q, (k, l) in enumerate(pairs):
            val = V[p, q] / (w[p] * w[q])
            for (a1, b1), (c1, d1) in itertools.product({(i, j), (j, i)}, {(k, l), (l, k)}):
                a[a1, b1, c1, d1] = val
    return a


def sym_subspace_extremes(a):
    """Extreme eigenvalues of eps -> a:eps on symmetric matrices via the full n^2 x n^2 form."""
    n = a.shape[0]
    A = a.reshape(n * n, n * n)
    basis = []
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0
            basis.append(e.ravel() / np.linalg.norm(e))
    B = np.array(basis).T
    w = np.linalg.eigvalsh(B.T @ A @ B)
    return w[0], w[-1]


def random_valid_tensor(rng, n, spd=True):
    m = n * (n + 1) // 2
    G = rng.standard_normal((m, m))
    V = G @ G.T + (m * np.eye(m) if spd else 0.0)
    return tensor_from_voigt(V, n)


# ---------------------------------------------------------------- Voigt


def test_voigt_identity_for_half_symmetrizer():
    a = isotropic_tensor(0.0, 0.5, 3)
    assert np.allclose(voigt_from_tensor(a), np.eye(6), atol=1e-15)


def test_voigt_trace_squared_form():
    V = voigt_from_tensor(isotropic_tensor(1.0, 0.0, 3))
    w = np.linalg.eigvalsh(V)
    assert np.allclose(w, [0, 0, 0, 0, 0, 3], atol=1e-12)


def test_voigt_zero_tensor():
    assert np.array_equal(voigt_from_tensor(np.zeros((3,) * 4)), np.zeros((6, 6)))


def test_voigt_rejects_nonsymmetric():
    a = isotropic_tensor(1.0, 1.0, 2)
    a[0, 1, 0, 0] += 1e-6
    with pytest.raises(SymmetryError):
        voigt_from_tensor(a)


@pytest.mark.parametrize("n", [2, 3])
def test_voigt_quadratic_form_matches_contraction_1000(rng, n):
    a = random_valid_tensor(rng, n, spd=False)
    V = voigt_from_tensor(a)
    eps = random_sym(rng, n, 1000)
    e = voigt_vector(eps)
    lhs = np.einsum("kp,pq,kq->k", e, V, e)
    rhs = contract(a, eps)
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * (eps**2).sum((1, 2)) * max(1, np.abs(a).max()))


@given(st.integers(2, 3), st.integers(0, 2**32 - 1))
def test_voigt_norm_is_frobenius(n, seed):
    eps = random_sym(np.random.default_rng(seed), n)
    assert np.isclose(voigt_vector(eps) @ voigt_vector(eps), (eps**2).sum(), rtol=1e-14)


def test_voigt_matrix_on_field_point():
    f = lame_tensor(1.0, 1.0, 2)
    V = voigt_matrix(f, np.array([1.5, 0.0]))
    assert np.allclose(V, [[3, 1, 0], [1, 3, 0], [0, 0, 2]])


# ---------------------------------------------------------------- Lame and ellipticity


def test_lame_components():
    a = lame_tensor(1.0, 1.0, 3)(np.array([1.0, 0.0, 0.0]))
    assert a[0, 0, 0, 0] == 3.0
    assert a[0, 0, 1, 1] == 1.0
    assert a[0, 1, 0, 1] == 1.0


def test_lame_bound_violation_names_point():
    pts = annulus_points(20)
    with pytest.raises(ValueError, match="x="):
        lame_tensor(1.0, radial_profile(lambda r: 1.5 - r), 2, samples=pts)


def test_lame_quadratic_passes_invariants():
    pts = annulus_points()
    f = lame_tensor(1.0, quadratic_profile(1.0, 0.25), 2, samples=pts)
    voigt_from_tensor(f(pts))  # symmetry check inside
    assert ellipticity_bounds(f, pts).alpha > 0


def test_ellipticity_constant_lame_3d_dense_oracle():
    f = lame_tensor(1.0, 1.0, 3)
    pts = annulus_points(50, dim=3)
    b = ellipticity_bounds(f, pts)
    lo, hi = sym_subspace_extremes(f(pts[0]))
    assert abs(b.alpha - 2.0) <= 1e-9 and abs(b.beta - 5.0) <= 1e-9
    assert abs(lo - 2.0) <= 1e-9 and abs(hi - 5.0) <= 1e-9


def test_ellipticity_identity_case():
    b = ellipticity_bounds(lame_tensor(0.0, 0.5, 3), annulus_points(10, dim=3))
    assert np.isclose(b.alpha, 1.0) and np.isclose(b.beta, 1.0)


def test_ellipticity_radial_mu_extremes():
    f = lame_tensor(0.0, radial_profile(lambda r: 1 + r**2), 2)
    pts = annulus_points(500)
    b = ellipticity_bounds(f, pts)
    assert np.isclose(b.alpha, 4.0) and np.isclose(np.linalg.norm(b.argmin), 1.0)
    assert np.isclose(b.beta, 10.0) and np.isclose(np.linalg.norm(b.argmax), 2.0)


def test_ellipticity_failure_reports_point():
    f = lame_tensor(1.0, -1.0, 2)
    with pytest.raises(EllipticityError) as exc:
        ellipticity_bounds(f, annulus_points(10))
    assert exc.value.bounds.alpha < 0
    assert not ellipticity_bounds(f, annulus_points(10), raise_on_failure=False).holds


@given(st.integers(0, 2**32 - 1))
def test_ellipticity_bounds_sandwich_random_strains(seed):
    rng = np.random.default_rng(seed)
    f = lame_tensor(rng.uniform(0, 2), quadratic_profile(rng.uniform(0.5, 2), 0.25), 2)
    pts = annulus_points(60, seed=seed % 1000)
    b = ellipticity_bounds(f, pts)
    eps = random_sym(rng, 2, 60)
    q = contract(f(pts), eps)
    ee = (eps**2).sum((1, 2))
    assert np.all(b.alpha * ee - 1e-9 <= q) and np.all(q <= b.beta * ee + 1e-9)


def test_rotated_isotropic_field_unchanged(rng):
    f = lame_tensor(1.0, quadratic_profile(1.0, 0.25), 3)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    pts = annulus_points(20, dim=3)
    assert np.allclose(f.rotated(Q)(pts), f(pts), atol=1e-12)


# ---------------------------------------------------------------- radial derivative


def test_radial_derivative_constant_is_zero():
    f = constant_tensor(isotropic_tensor(1.0, 1.0, 2))
    assert np.array_equal(radial_derivative(f, np.array([1.3, 0.4])), np.zeros((2,) * 4))


def test_radial_derivative_quadratic_mu_analytic_and_fd():
    f = lame_tensor(0.0, radial_profile(lambda r: 1 + r**2, lambda r: 2 * r), 2)
    x = np.array([0.0, 2.0])
    exact = radial_derivative(f, x)
    assert np.isclose(exact[0, 1, 0, 1], 4.0)
    assert np.isclose(exact[0, 0, 0, 0], 8.0)  # 2 mu'
    assert np.allclose(radial_derivative(f, x, h=1e-3), exact, atol=1e-6)


def test_radial_derivative_fd_second_order():
    f = lame_tensor(radial_profile(lambda r: np.sin(r)), radial_profile(lambda r: 2 + np.cos(3 * r)), 2)
    exact = lame_tensor(radial_profile(lambda r: np.sin(r), np.cos),
                        radial_profile(lambda r: 2 + np.cos(3 * r), lambda r: -3 * np.sin(3 * r)), 2)
    x = np.array([1.1, 0.7])
    ref = radial_derivative(exact, x)
    e1 = np.abs(radial_derivative(f, x, h=0.02) - ref).max()
    e2 = np.abs(radial_derivative(f, x, h=0.01) - ref).max()
    assert 3.6 < e1 / e2 < 4.4


def test_radial_derivative_rejects_origin():
    f = lame_tensor(radial_profile(lambda r: r), 1.0, 2)
    with pytest.raises(RadialDomainError):
        radial_derivative(f, np.array([1e-6, 0.0]), h=1e-4)
    with pytest.raises(RadialDomainError):
        radial_derivative(lame_tensor(1.0, 1.0, 2), np.zeros(2))


# ---------------------------------------------------------------- Assumption (A)


def test_margin_constant_field():
    f = lame_tensor(1.0, 1.0, 2)
    pts = annulus_points()
    assert abs(assumption_a_margin(f, 1.0, pts)) <= 1e-14
    assert np.isclose(assumption_a_margin(f, 0.5, pts), 1.0)  # alpha / 2


def test_margin_quadratic_negative_beyond_half():
    f = lame_tensor(1.0, quadratic_profile(1.0, 0.25), 2)
    assert assumption_a_margin(f, 0.6, annulus_points()) < 0


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_margin_nonincreasing_in_delta(d1, d2):
    f = lame_tensor(1.0, quadratic_profile(1.0, 0.25), 2)
    pts = annulus_points(50)
    lo, hi = sorted((d1, d2))
    assert assumption_a_margin(f, hi, pts) <= assumption_a_margin(f, lo, pts) + 1e-14


def test_margin_at_zero_nonnegative_for_decreasing_media():
    f = lame_tensor(1.0, exponential_profile(1.0, 1.0), 3)
    assert assumption_a_margin(f, 0.0, annulus_points(50, dim=3)) >= 0


def test_max_delta_constant():
    res = max_delta(lame_tensor(1.0, 1.0, 3), annulus_points(50, dim=3))
    assert res.holds and abs(res.delta_max - 1.0) <= 1e-6


@pytest.mark.parametrize("eps", [0.1, 0.25, 0.5])
def test_max_delta_quadratic_closed_form(eps):
    res = max_delta(lame_tensor(1.0, quadratic_profile(1.0, eps), 2), annulus_points(), tol=1e-10)
    assert abs(res.delta_max - 1.0 / (1.0 + 4.0 * eps)) <= 1e-8
    assert np.isclose(np.linalg.norm(res.worst_point), 2.0)


def test_max_delta_exponential_capped_and_extended():
    f = lame_tensor(1.0, exponential_profile(1.0, 1.0), 2)
    pts = annulus_points(2000)
    res = max_delta(f, pts)
    assert res.capped and res.delta_max == 1.0
    # extended search: binding eigenvalue n lam~ + 2 mu~ >= 0 gives
    # delta <= 1 + r e^-r / (2 + 2 e^-r), smallest at r = 2
    ext = max_delta(f, pts, extend=True, tol=1e-10)
    expect = 1.0 + 2 * np.exp(-2) / (2 + 2 * np.exp(-2))
    assert abs(ext.delta_max - expect) <= 1e-8


def test_max_delta_failure_reports_zero():
    f = lame_tensor(1.0, radial_profile(lambda r: np.exp(r**3), lambda r: 3 * r**2 * np.exp(r**3)), 2)
    res = max_delta(f, annulus_points())
    assert not res.holds and res.delta_max == 0.0


@pytest.mark.parametrize("mu", [1.0, quadratic_profile(1.0, 0.25)])
def test_bisection_matches_grid_scan(mu):
    f = lame_tensor(1.0, mu, 2)
    pts = annulus_points()
    assert abs(max_delta(f, pts).delta_max - scan_delta(f, pts, step=1e-3)) <= 1e-3


# ---------------------------------------------------------------- wave analog


def test_scalar_condition_identity():
    A = MatrixField(lambda p: np.broadcast_to(np.eye(2), (len(p), 2, 2)),
                    lambda p: np.zeros((len(p), 2, 2)))
    assert scalar_condition_check(A, 1.0, annulus_points()) == 0.0


def test_scalar_condition_growing_coefficient():
    r = lambda p: np.linalg.norm(p, axis=1)
    A = MatrixField(lambda p: (1 + r(p) ** 2)[:, None, None] * np.eye(2),
                    lambda p: (2 * r(p))[:, None, None] * np.eye(2))
    assert np.isclose(scalar_condition_check(A, 0.5, annulus_points()), -1.5)
    # finite-difference path agrees
    A_fd = MatrixField(lambda p: (1 + r(p) ** 2)[:, None, None] * np.eye(2))
    assert np.isclose(scalar_condition_check(A_fd, 0.5, annulus_points()), -1.5, atol=1e-6)


def test_scalar_condition_constant_spd(rng):
    G = rng.standard_normal((3, 3))
    S = G @ G.T + np.eye(3)
    A = MatrixField(lambda p: np.broadcast_to(S, (len(p), 3, 3)))
    m = scalar_condition_check(A, 0.5, annulus_points(30, dim=3))
    assert np.isclose(m, np.linalg.eigvalsh(S)[0] / 2, atol=1e-9)


def test_scalar_condition_nonsymmetric():
    A = MatrixField(lambda p: np.broadcast_to(np.array([[1.0, 1.0], [0.0, 1.0]]), (len(p), 2, 2)))
    with pytest.raises(SymmetryError):
        scalar_condition_check(A, 0.5, annulus_points(5))
