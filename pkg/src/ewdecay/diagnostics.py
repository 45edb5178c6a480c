"""Post-processing verdicts on energy traces and field snapshots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fem import displacement_gradients, potential_density, sym
from .geometry import smoothstep_ramp


class DiagnosticsError(ValueError):
    pass


class SamplingError(DiagnosticsError):
    pass


def trapezoid(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def observed_orders(errors, ratio=2.0):
    """log(e_k / e_{k+1}) / log(ratio) for successive refinement levels."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(e[:-1] / e[1:]) / math.log(ratio)


# ---------------------------------------------------------------- energy traces


def dissipation_residual(trace):
    """max_k |E(t_k) - E(0) + D(t_k)| / E(0)."""
    if len(trace) == 0:
        raise DiagnosticsError("empty trace")
    E = trace.e_total
    if E[0] <= 0:
        raise DiagnosticsError("residual undefined for E(0) <= 0")
    return float(np.max(np.abs(E - E[0] + trace.d_cum)) / E[0])


def max_energy_increase(trace):
    """Largest E(t_{k+1}) - E(t_k), relative to E(0)."""
    E = trace.e_total
    if len(E) < 2:
        return 0.0
    return float(np.max(np.diff(E)) / E[0])


@dataclass
class DecayFit:
    C1_hat: float
    C2_hat: float
    r_squared: float
    t_lo: float
    t_hi: float
    n_points: int


def fit_decay(trace, t_lo, t_hi, min_points=10):
    """Least-squares line through (t, log E) for records in [t_lo, t_hi].

    Records with E <= 1e-14 E(0) are ignored; C2_hat is minus the slope and
    C1_hat = exp(intercept) / E(0).
    """
    t = np.asarray(trace.t, dtype=float)
    E = np.asarray(trace.e_total, dtype=float)
    E0 = E[0]
    sel = (t >= t_lo - 1e-12) & (t <= t_hi + 1e-12)
    if np.any(E[sel] <= 0):
        raise DiagnosticsError("nonpositive energy inside the fit window")
    sel &= E > 1e-14 * E0
    if sel.sum() < min_points:
        raise DiagnosticsError(
            f"fit window [{t_lo}, {t_hi}] holds {int(sel.sum())} usable records, need {min_points}")
    x, y = t[sel], np.log(E[sel])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return DecayFit(float(math.exp(intercept) / E0), float(-slope), r2,
                    float(t_lo), float(t_hi), int(sel.sum()))


@dataclass
class ObservabilityReport:
    ratio: float
    T: float
    energy_integral: float
    dissipation: float
    finite: bool
    ensemble: list = field(default_factory=list)

    @property
    def max_ratio(self):
        return max([self.ratio] + [r.ratio for r in self.ensemble])


def observability_ratio(trace):
    """rho = int_0^T E dt / int_0^T int a |u_t|^2 (trapezoid in time)."""
    E_int = trapezoid(trace.e_total, trace.t)
    D = float(trace.d_cum[-1])
    T = float(trace.t[-1] - trace.t[0])
    if D <= 0:
        return ObservabilityReport(math.inf, T, E_int, D, False)
    return ObservabilityReport(E_int / D, T, E_int, D, True)


def combine_observability(reports):
    """Ensemble report: the worst (largest) ratio first, all members attached."""
    worst = max(reports, key=lambda r: r.ratio)
    return ObservabilityReport(worst.ratio, worst.T, worst.energy_integral,
                               worst.dissipation, all(r.finite for r in reports),
                               list(reports))


# ---------------------------------------------------------------- multiplier check


@dataclass
class CutoffSpec:
    """Multiplier weight phi(x).

    ``kind="one"`` is phi = 1.  ``kind="cutoff"`` is 1 for |x| <= r_in, 0 for
    |x| >= r_out, and a C^1 smoothstep in between (r_in = R_d is the inner edge
    of the damping region, r_out = R1 - xi the inner edge of the collar).
    """

    kind: str = "one"
    r_in: float = 0.0
    r_out: float = 0.0

    def value(self, x):
        r = np.linalg.norm(x, axis=-1)
        if self.kind == "one":
            return np.ones_like(r)
        return 1.0 - smoothstep_ramp(0.5 * (r - self.r_in) / (self.r_out - self.r_in))

    def gradient(self, x):
        if self.kind == "one":
            return np.zeros_like(x)
        r = np.linalg.norm(x, axis=-1)
        s = np.clip((r - self.r_in) / (self.r_out - self.r_in), 0.0, 1.0)
        dphi = -6.0 * s * (1.0 - s) / (self.r_out - self.r_in)
        return (dphi / r)[..., None] * x


TERM_NAMES = ("boundary_flux", "boundary_energy", "endpoint", "delta_term",
              "grad_phi_term", "damping_cross", "div_H_term")


@dataclass
class MultiplierReport:
    lhs: float
    rhs: float
    slack: float
    components: dict
    delta: float
    C: float
    E0: float
    T: float

    @property
    def normalized_slack(self):
        scale = self.E0 * self.T
        return self.slack / scale if scale > 0 else 0.0

    def passed(self, tol=1e-2):
        return self.slack >= -tol * self.E0 * self.T


class MorawetzAccumulator:
    """Evaluates the multiplier terms with H = phi(x) x on a stream of snapshots.

    Feed ``(t, u, vbar)`` samples through :meth:`__call__` (the signature also
    accepts the integrator's ``(n, t, u, vbar)`` observer form via
    :meth:`observer`), then call :meth:`report`.
    """

    def __init__(self, system, delta, C, phi=None, p=None, max_dt=0.1):
        self.system = system
        self.mesh = system.mesh
        self.delta = float(delta)
        self.C = float(C)
        self.phi = phi or CutoffSpec()
        self.p = p
        self.max_dt = max_dt
        mesh = self.mesh
        n = mesh.dim
        xc = mesh.centroids
        self._vol = mesh.volumes
        self._xc = xc
        self._phi_c = self.phi.value(xc)
        gphi = self.phi.gradient(xc)
        self._rgphi = np.linalg.norm(xc, axis=1) * np.linalg.norm(gphi, axis=1)
        self._divH = n * self._phi_c + np.einsum("ej,ej->e", xc, gphi)
        owner = mesh.facet_owner
        self._owner = owner
        xf = mesh.facet_centroids
        self._xf = xf
        self._phi_f = self.phi.value(xf)
        self._Hnu = self._phi_f * np.einsum("fj,fj->f", xf, mesh.facet_normals)
        self._nu = mesh.facet_normals
        self._area = mesh.facet_measures
        self.t = []
        self.rows = []
        self.endpoint = []

    def observer(self, n, t, u, vbar):
        self(t, u, vbar)

    def __call__(self, t, u, vbar):
        s = self.system
        mesh = self.mesh
        el = mesh.elements
        u = np.asarray(u).reshape(mesh.n_nodes, mesh.dim)
        v = np.asarray(vbar).reshape(mesh.n_nodes, mesh.dim)
        G = displacement_gradients(s.grads, el, u)
        eps = sym(G)
        sig = np.einsum("eijkl,ekl->eij", s.element_tensors, eps)
        se = np.einsum("eij,eij->e", sig, eps)
        Hu = self._phi_c[:, None] * np.einsum("eim,em->ei", G, self._xc)
        # vertex quadrature for nodal quantities
        v2 = (v * v).sum(1)
        F = np.zeros(mesh.n_nodes) if self.p is None else potential_density(u, self.p)
        v2_e = v2[el].mean(1)
        F_e = F[el].mean(1)
        v_e = v[el].mean(1)
        av_e = (s.a[:, None] * v)[el].mean(1)
        vol = self._vol
        endpoint = float(np.sum(vol * np.einsum("ei,ei->e", v_e, Hu)))
        delta_term = self.delta * float(np.sum(vol * self._phi_c * se))
        grad_phi = self.C * float(np.sum(vol * self._rgphi * (G * G).sum((1, 2))))
        damping = float(np.sum(vol * np.einsum("ei,ei->e", av_e, Hu)))
        div_H = 0.5 * float(np.sum(vol * (v2_e - se - 2.0 * F_e) * self._divH))

        f = self._owner
        Gf = G[f]
        Hu_f = self._phi_f[:, None] * np.einsum("fim,fm->fi", Gf, self._xf)
        flux = float(np.sum(self._area * np.einsum("fi,fij,fj->f", Hu_f, sig[f], self._nu)))
        fac = mesh.facets
        bdry = 0.5 * float(np.sum(self._area * (v2[fac].mean(1) - se[f] - 2.0 * F[fac].mean(1))
                                  * self._Hnu))
        self.t.append(float(t))
        self.rows.append((flux, bdry, delta_term, grad_phi, damping, div_H))
        self.endpoint.append(endpoint)

    def report(self, E0):
        if len(self.t) < 2:
            raise SamplingError("need at least two snapshots")
        t = np.asarray(self.t)
        if np.diff(t).max() > self.max_dt + 1e-12:
            raise SamplingError(
                f"snapshot spacing {np.diff(t).max():.3g} exceeds {self.max_dt}")
        R = np.asarray(self.rows)
        ints = [trapezoid(R[:, k], t) for k in range(R.shape[1])]
        flux, bdry, delta_term, grad_phi, damping, div_H = ints
        endpoint = self.endpoint[-1] - self.endpoint[0]
        lhs = flux + bdry
        rhs = endpoint + delta_term - grad_phi + damping + div_H
        comps = dict(zip(TERM_NAMES, (flux, bdry, endpoint, delta_term, grad_phi, damping, div_H)))
        return MultiplierReport(lhs, rhs, lhs - rhs, comps, self.delta, self.C,
                                float(E0), float(t[-1] - t[0]))


def morawetz_check(system, snapshots, delta, C, E0, phi=None, p=None, max_dt=0.1):
    """Multiplier inequality on a list of ``(t, u, vbar)`` snapshots."""
    acc = MorawetzAccumulator(system, delta, C, phi, p, max_dt)
    for t, u, v in snapshots:
        acc(t, u, v)
    return acc.report(E0)
