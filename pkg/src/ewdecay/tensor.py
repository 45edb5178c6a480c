"""Inhomogeneous anisotropic elasticity tensor fields and their algebraic checks.

A tensor field maps points ``x`` (shape ``(N, n)``) to stiffness tensors
``a_ijkl(x)`` (shape ``(N, n, n, n, n)``).  Quadratic forms over symmetric
strains are reduced to Voigt matrices with a sqrt(2) weight on shear
components, so the Euclidean norm of the Voigt vector equals ``eps:eps`` and
the ellipticity constants are exactly the extreme Voigt eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

SYMMETRY_RTOL = 1e-12
DELTA_LO = 1e-6


class SymmetryError(ValueError):
    """Tensor components violate a_ijkl = a_jikl = a_klij."""


class EllipticityError(ValueError):
    """Smallest Voigt eigenvalue is not positive somewhere on the samples."""

    def __init__(self, message, bounds=None):
        super().__init__(message)
        self.bounds = bounds


class RadialDomainError(ValueError):
    """Radial derivative requested too close to the origin."""


def voigt_pairs(dim):
    """Index pairs (i, j), i <= j, diagonal first."""
    diag = [(i, i) for i in range(dim)]
    off = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
    return diag + off


def _weights(dim):
    return np.array([1.0 if i == j else np.sqrt(2.0) for i, j in voigt_pairs(dim)])


def voigt_vector(eps):
    """Weighted Voigt coordinates of symmetric strain(s) ``eps[..., n, n]``."""
    eps = np.asarray(eps, dtype=float)
    dim = eps.shape[-1]
    pairs = voigt_pairs(dim)
    ii = [p[0] for p in pairs]
    jj = [p[1] for p in pairs]
    return eps[..., ii, jj] * _weights(dim)


def from_voigt_vector(e, dim):
    e = np.asarray(e, dtype=float)
    out = np.zeros(e.shape[:-1] + (dim, dim))
    for p, (i, j) in enumerate(voigt_pairs(dim)):
        val = e[..., p] / (1.0 if i == j else np.sqrt(2.0))
        out[..., i, j] = val
        out[..., j, i] = val
    return out


def check_symmetry(a, rtol=SYMMETRY_RTOL):
    """Raise SymmetryError unless minor and major symmetries hold."""
    a = np.asarray(a, dtype=float)
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    minor = np.abs(a - np.swapaxes(a, -4, -3)).max(initial=0.0)
    major = np.abs(a - np.moveaxis(a, (-4, -3), (-2, -1))).max(initial=0.0)
    worst = max(minor, major)
    if worst > rtol * scale:
        raise SymmetryError(
            f"tensor symmetry violated by {worst:.3e} (scale {scale:.3e})")


def voigt_from_tensor(a, check=True):
    """Voigt matrix/matrices of tensor(s) ``a[..., n, n, n, n]``."""
    a = np.asarray(a, dtype=float)
    if check:
        check_symmetry(a)
    dim = a.shape[-1]
    pairs = voigt_pairs(dim)
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    w = _weights(dim)
    V = a[..., ii[:, None], jj[:, None], ii[None, :], jj[None, :]]
    return V * np.outer(w, w)


def contract(a, eps):
    """Direct four-index contraction sum a_ijkl eps_ij eps_kl."""
    return np.einsum("...ijkl,...ij,...kl->...", a, eps, eps)


# ---------------------------------------------------------------- scalar fields


@dataclass(frozen=True)
class ScalarField:
    """Scalar coefficient ``g(x)`` with an optional exact radial derivative."""

    fn: Callable[[np.ndarray], np.ndarray]
    dr: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "user"

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(np.asarray(self.fn(pts), dtype=float), (pts.shape[0],))


def _radius(points):
    return np.linalg.norm(points, axis=-1)


def radial_profile(value, derivative=None, label="radial"):
    """ScalarField from a profile ``g(r)`` and optional ``g'(r)``."""
    fn = lambda pts: value(_radius(pts))
    dr = None if derivative is None else (lambda pts: derivative(_radius(pts)))
    return ScalarField(fn, dr, label)


def constant_scalar(c):
    c = float(c)
    return ScalarField(lambda pts: np.full(pts.shape[0], c),
                       lambda pts: np.zeros(pts.shape[0]), f"const({c:g})")


def quadratic_profile(c0, eps):
    """``c0 (1 + eps r^2)``."""
    return radial_profile(lambda r: c0 * (1.0 + eps * r**2),
                          lambda r: 2.0 * c0 * eps * r,
                          f"{c0:g}(1+{eps:g}r^2)")


def exponential_profile(c0, s):
    """``c0 exp(-s r)``."""
    return radial_profile(lambda r: c0 * np.exp(-s * r),
                          lambda r: -s * c0 * np.exp(-s * r),
                          f"{c0:g}exp(-{s:g}r)")


def _as_scalar_field(v):
    if isinstance(v, ScalarField):
        return v
    if callable(v):
        return ScalarField(v)
    return constant_scalar(v)


# ---------------------------------------------------------------- tensor fields


class ElasticityTensorField:
    """Spatially varying rank-4 stiffness tensor.

    ``kind`` is one of ``"constant"``, ``"lame"``, ``"user-sampled"``.  Fields
    of the first two kinds carry an exact radial derivative; user-sampled
    fields fall back to central differences.
    """

    def __init__(self, dim, evaluate, kind="user-sampled", radial=None, lame=None):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        self.dim = dim
        self.kind = kind
        self._evaluate = evaluate
        self._radial = radial
        self.lame = lame  # (lambda ScalarField, mu ScalarField) for lame kind

    def __repr__(self):
        return f"ElasticityTensorField(dim={self.dim}, kind={self.kind!r})"

    def __call__(self, points):
        """Tensor at one point (n,n,n,n) or a batch (N,n,n,n,n)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return self._evaluate(pts[None, :])[0]
        return self._evaluate(pts)

    @property
    def has_exact_radial(self):
        return self._radial is not None

    def exact_radial_derivative(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return self._radial(pts[None, :])[0]
        return self._radial(pts)

    def scaled(self, factor):
        """Field multiplied by a constant factor."""
        ev, rad = self._evaluate, self._radial
        return ElasticityTensorField(
            self.dim, lambda p: factor * ev(p), self.kind,
            None if rad is None else (lambda p: factor * rad(p)))

    def rotated(self, R):
        """Field of the rotated medium: a'(Rx) = R.R.R.R : a(x)."""
        R = np.asarray(R, dtype=float)
        ev = self._evaluate

        def evaluate(p):
            a = ev(p @ R)  # p = R x  ->  x = R^T p
            return np.einsum("ai,bj,ck,dl,nijkl->nabcd", R, R, R, R, a)

        return ElasticityTensorField(self.dim, evaluate, "user-sampled")

    @classmethod
    def from_function(cls, fn, dim):
        """User-sampled field; ``fn`` maps (N, n) points to (N, n, n, n, n)."""
        return cls(dim, lambda p: np.asarray(fn(p), dtype=float), "user-sampled")


def isotropic_tensor(lam, mu, dim):
    """Isotropic tensor(s) from arrays of Lame parameters."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    d = np.eye(dim)
    t_ll = np.einsum("ij,kl->ijkl", d, d)
    t_mu = np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
    return lam[..., None, None, None, None] * t_ll + mu[..., None, None, None, None] * t_mu


def constant_tensor(a):
    """Homogeneous field equal to the given tensor everywhere."""
    a = np.asarray(a, dtype=float)
    check_symmetry(a)
    dim = a.shape[0]
    zero = np.zeros_like(a)
    return ElasticityTensorField(
        dim,
        lambda p: np.broadcast_to(a, (p.shape[0],) + a.shape).copy(),
        "constant",
        lambda p: np.broadcast_to(zero, (p.shape[0],) + a.shape).copy())


def lame_tensor(lambda_field, mu_field, dim, samples=None):
    """Isotropic Lame field a = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk).

    ``lambda_field``/``mu_field`` are numbers, callables of points, or
    :class:`ScalarField` objects.  When ``samples`` is given, the bounds
    ``mu > 0`` and ``lambda + 2 mu > 0`` are checked there and a ValueError
    names the first offending point.
    """
    lam_f = _as_scalar_field(lambda_field)
    mu_f = _as_scalar_field(mu_field)

    if samples is not None:
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        lam, mu = lam_f(pts), mu_f(pts)
        bad = np.flatnonzero((mu <= 0) | (lam + 2 * mu <= 0))
        if bad.size:
            k = bad[0]
            raise ValueError(
                f"Lame bounds violated at x={pts[k].tolist()}: "
                f"mu={mu[k]:.6g}, lambda+2mu={lam[k] + 2 * mu[k]:.6g}")

    def evaluate(p):
        return isotropic_tensor(lam_f(p), mu_f(p), dim)

    radial = None
    if lam_f.dr is not None and mu_f.dr is not None:
        radial = lambda p: isotropic_tensor(lam_f.dr(p), mu_f.dr(p), dim)
    return ElasticityTensorField(dim, evaluate, "lame", radial, lame=(lam_f, mu_f))


# ---------------------------------------------------------------- checks


def voigt_matrix(field, x):
    """Weighted Voigt matrix of ``field`` at a single point (or a batch)."""
    return voigt_from_tensor(field(x))


@dataclass
class EllipticityBounds:
    alpha: float
    beta: float
    argmin: np.ndarray
    argmax: np.ndarray

    @property
    def holds(self):
        return self.alpha > 0


def _eig_extremes(V):
    w = np.linalg.eigvalsh(V)
    return w[..., 0], w[..., -1]


def ellipticity_bounds(field, samples, raise_on_failure=True):
    """Smallest and largest Voigt eigenvalues over the sample points."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("no sample points")
    lo, hi = _eig_extremes(voigt_from_tensor(field(pts)))
    kmin, kmax = int(np.argmin(lo)), int(np.argmax(hi))
    bounds = EllipticityBounds(float(lo[kmin]), float(hi[kmax]), pts[kmin], pts[kmax])
    if raise_on_failure and not bounds.holds:
        raise EllipticityError(
            f"ellipticity fails: smallest eigenvalue {bounds.alpha:.6g} "
            f"at x={pts[kmin].tolist()}", bounds)
    return bounds


def radial_derivative(field, x, h=None):
    """Derivative of ``field`` along x/|x|.

    With ``h=None`` the exact derivative is used when the field supplies one,
    otherwise a central difference with step ``1e-4 * max|x|``.  An explicit
    ``h`` always forces the central difference.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    r = _radius(pts)
    if h is None and field.has_exact_radial:
        if np.any(r <= 0):
            raise RadialDomainError("radial derivative undefined at the origin")
        out = field.exact_radial_derivative(pts)
    else:
        if h is None:
            h = 1e-4 * float(r.max())
        if np.any(r <= h):
            k = int(np.argmin(r))
            raise RadialDomainError(
                f"|x|={r[k]:.3g} <= h={h:.3g} at x={pts[k].tolist()}")
        unit = pts / r[:, None]
        out = (field(pts + h * unit) - field(pts - h * unit)) / (2.0 * h)
    return out[0] if single else out


def assumption_a_matrix(field, delta, samples, h=None):
    """Tensors (1 - delta) a - (r/2) da/dr at the samples."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    r = _radius(pts)
    da = radial_derivative(field, pts, h)
    return (1.0 - delta) * field(pts) - 0.5 * r[:, None, None, None, None] * da


def _margin_profile(field, samples, h=None):
    """Per-sample Voigt matrices of a and (r/2)da/dr, for cheap delta sweeps."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    r = _radius(pts)
    A = voigt_from_tensor(field(pts))
    D = voigt_from_tensor(0.5 * r[:, None, None, None, None]
                          * radial_derivative(field, pts, h), check=False)
    return pts, A, D


def _margin_from_profile(A, D, delta):
    lo = np.linalg.eigvalsh((1.0 - delta) * A - D)[:, 0]
    k = int(np.argmin(lo))
    return float(lo[k]), k


def assumption_a_margin(field, delta, samples, h=None):
    """min over samples of the smallest Voigt eigenvalue of (1-delta)a - (r/2)da/dr."""
    _, A, D = _margin_profile(field, samples, h)
    return _margin_from_profile(A, D, delta)[0]


@dataclass
class AssumptionAResult:
    delta_max: float
    margin_at_max: float
    worst_point: np.ndarray
    holds: bool
    capped: bool
    delta_hi: float


def max_delta(field, samples, tol=1e-8, extend=False, h=None):
    """Largest delta in (0, 1] (or (0, 2] with ``extend``) where the margin is >= 0.

    The margin is nonincreasing in delta, so bisection between ``1e-6`` and
    the cap brackets the crossing.  If the margin is already negative at
    ``1e-6`` the assumption fails and ``delta_max`` is reported as 0.
    """
    pts, A, D = _margin_profile(field, samples, h)
    hi = 2.0 if extend else 1.0
    m_lo, k_lo = _margin_from_profile(A, D, DELTA_LO)
    if m_lo < 0:
        return AssumptionAResult(0.0, m_lo, pts[k_lo], False, False, hi)
    m_hi, k_hi = _margin_from_profile(A, D, hi)
    if m_hi >= 0:
        return AssumptionAResult(hi, m_hi, pts[k_hi], True, True, hi)
    lo = DELTA_LO
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _margin_from_profile(A, D, mid)[0] >= 0:
            lo = mid
        else:
            hi = mid
    m, k = _margin_from_profile(A, D, lo)
    return AssumptionAResult(lo, m, pts[k], True, False, 2.0 if extend else 1.0)


def scan_delta(field, samples, step=1e-3, extend=False, h=None):
    """Brute-force delta grid scan; largest grid delta with nonnegative margin."""
    _, A, D = _margin_profile(field, samples, h)
    grid = np.arange(step, (2.0 if extend else 1.0) + 0.5 * step, step)
    ok = [d for d in grid if _margin_from_profile(A, D, d)[0] >= 0]
    return float(ok[-1]) if ok else 0.0


# ---------------------------------------------------------------- wave-equation analog


class MatrixField:
    """Symmetric n x n coefficient field A(x) for the scalar wave analog."""

    def __init__(self, fn, dr=None):
        self._fn = fn
        self._dr = dr

    def __call__(self, points):
        return np.asarray(self._fn(np.atleast_2d(points)), dtype=float)

    def radial_derivative(self, points, h=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if h is None and self._dr is not None:
            return np.asarray(self._dr(pts), dtype=float)
        r = _radius(pts)
        if h is None:
            h = 1e-4 * float(r.max())
        if np.any(r <= h):
            raise RadialDomainError("radial derivative too close to the origin")
        unit = pts / r[:, None]
        return (self(pts + h * unit) - self(pts - h * unit)) / (2.0 * h)


def scalar_condition_check(A, delta, samples, h=None):
    """min over samples of lambda_min((1-delta) A - (r/2) dA/dr)."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    M = A(pts)
    if np.abs(M - np.swapaxes(M, -1, -2)).max() > SYMMETRY_RTOL * max(np.abs(M).max(), 1.0):
        raise SymmetryError("matrix field is not symmetric")
    r = _radius(pts)
    S = (1.0 - delta) * M - 0.5 * r[:, None, None] * A.radial_derivative(pts, h)
    return float(np.linalg.eigvalsh(S)[:, 0].min())
