"""Explicit leapfrog integration of the damped semilinear elastic system.

The scheme is the central-difference method on the lumped-mass P1
discretization, with displacements at integer steps and velocities at half
steps; damping is averaged across the step::

    v+ = [(1 - dt a/2) v- + dt M^-1 (-K u - M f(u) + M g)] / (1 + dt a/2)
    u' = u + dt v+

Multiplying the update by the averaged velocity vbar = (v- + v+)/2 gives a
discrete energy balance.  The energy recorded at step n is the average of the
two staggered leapfrog energies around it::

    E^n = 1/4 (v+.M.v+ + v-.M.v-) + 1/4 u^n.K.(u^{n+1} + u^{n-1}) + F(u^n)

which differs from 1/2 vbar.M.vbar + 1/2 u.K.u + F(u) by O(dt^2) and, with f
disabled, decreases by exactly the trapezoid-rule dissipation
dt/2 (vbar_{n-1}.C.vbar_{n-1} + vbar_n.C.vbar_n).
"""

from __future__ import annotations

import io
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fem import as_exponents, nonlinear_force, potential_density

log = logging.getLogger(__name__)

TRACE_HEADER = "t,e_kin,e_strain,e_pot,e_total,d_cum"


class BlowUpError(RuntimeError):
    def __init__(self, step, max_u):
        super().__init__(f"solution blew up at step {step} (max |u| = {max_u:.3e})")
        self.step = step
        self.max_u = max_u


class NonlinearityError(ValueError):
    pass


@dataclass
class NonlinearityParams:
    """Exponents p_i of f(u)_i = |u_i|^(p_i-1) u_i."""

    p: np.ndarray
    enabled: bool = True
    out_of_theory: bool = False

    @classmethod
    def make(cls, p, dim, enabled=True):
        p = as_exponents(p, dim)
        if np.any(p <= 1):
            raise NonlinearityError(f"exponents must exceed 1, got {p.tolist()}")
        out = False
        if dim >= 3:
            crit = (dim + 2) / (dim - 2)
            if enabled and np.any(p > crit):
                raise NonlinearityError(
                    f"exponents must satisfy p <= (n+2)/(n-2) = {crit:g}, got {p.tolist()}")
        else:
            out = True
        return cls(p, enabled, out)

    @property
    def active(self):
        return self.p if self.enabled else None


def critical_exponent(dim):
    return math.inf if dim <= 2 else (dim + 2) / (dim - 2)


# ---------------------------------------------------------------- time step


def stable_dt(system, safety=0.9, dt_max=np.inf, min_iter=30, max_iter=1000, rtol=1e-5):
    """safety * 2 / sqrt(lambda_max(M^-1 K)) over the free dofs, capped at dt_max.

    lambda_max comes from power iteration on the symmetric scaling
    D^-1/2 K D^-1/2; if it fails to settle, the Gershgorin row-sum bound is
    used instead (with a warning).
    """
    free = system.free_mask()
    d = 1.0 / np.sqrt(system.M)
    K = system.K
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(K.shape[0]) * free
    nx = np.linalg.norm(x)
    if nx == 0:
        return float(dt_max)
    x /= nx
    lam = 0.0
    converged = False
    for it in range(max_iter):
        y = d * (K @ (d * x)) * free
        new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0:
            lam, converged = 0.0, True
            break
        x = y / ny
        if it >= min_iter and abs(new - lam) <= rtol * abs(new):
            lam, converged = new, True
            break
        lam = new
    if not converged:
        warnings.warn("power iteration did not converge; using Gershgorin bound")
        rows = np.asarray(abs(K).sum(axis=1)).ravel()
        lam = float((rows / system.M)[free].max())
    if lam <= 0:
        return float(dt_max)
    return float(min(safety * 2.0 / math.sqrt(lam), dt_max))


# ---------------------------------------------------------------- forcing


@dataclass
class Forcing:
    """Extra data for manufactured-solution runs (off in all physical runs).

    ``body(t)`` gives nodal body force g (n_nodes, dim); ``traction(t)`` a
    nodal load vector already integrated over GAMMA1 facets; ``dirichlet(t)``
    prescribed GAMMA0 displacements at the Dirichlet nodes.
    """

    body: object = None
    traction: object = None
    dirichlet: object = None


# ---------------------------------------------------------------- state and trace


@dataclass
class SimState:
    u: np.ndarray       # u^n, shape (n_nodes, dim)
    v: np.ndarray       # v^{n-1/2}
    t: float
    step: int = 0


@dataclass
class EnergyTrace:
    t: np.ndarray
    e_kin: np.ndarray
    e_strain: np.ndarray
    e_pot: np.ndarray
    d_cum: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def e_total(self):
        return self.e_kin + self.e_strain + self.e_pot

    def __len__(self):
        return len(self.t)

    def scaled(self, s):
        """Trace with every energy multiplied by s (time axis unchanged)."""
        return EnergyTrace(self.t.copy(), s * self.e_kin, s * self.e_strain,
                           s * self.e_pot, s * self.d_cum, dict(self.meta))

    def to_csv(self):
        buf = io.StringIO()
        buf.write(TRACE_HEADER + "\n")
        for row in zip(self.t, self.e_kin, self.e_strain, self.e_pot, self.e_total, self.d_cum):
            buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
        return buf.getvalue()

    def write_csv(self, path):
        from .geometry import atomic_write_text
        atomic_write_text(path, self.to_csv())

    @classmethod
    def read_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != TRACE_HEADER:
                raise ValueError(f"unexpected trace header {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.size == 0:
            raise ValueError("empty trace")
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 5])

    @classmethod
    def from_total(cls, t, e_total, d_cum=None):
        """Synthetic trace carrying only a total energy."""
        t = np.asarray(t, dtype=float)
        e = np.asarray(e_total, dtype=float)
        z = np.zeros_like(e)
        return cls(t, e, z, z.copy(), z.copy() if d_cum is None else np.asarray(d_cum, float))


# ---------------------------------------------------------------- integrator


class LeapfrogIntegrator:
    """Owns the state of one run; call :meth:`run` or :meth:`advance` repeatedly."""

    def __init__(self, system, dt, nonlinearity=None, forcing=None):
        self.system = system
        self.dt = float(dt)
        self.p = None if nonlinearity is None else nonlinearity.active
        self.forcing = forcing
        n = system.dim
        self._m = system.node_mass[:, None]
        self._a = system.a[:, None]
        self._bc = system.dirichlet_nodes
        self._shape = (system.mesh.n_nodes, n)
        self.state = None
        self.d_cum = 0.0
        self._d_prev = None
        self.dissipation_steps = []

    # forces ---------------------------------------------------------------
    def _ku(self, u):
        return (self.system.K @ u.ravel()).reshape(self._shape)

    def _rhs(self, u, t, ku):
        """M^-1 (-K u - M f(u) + M g + traction)."""
        acc = -ku / self._m
        if self.p is not None:
            acc -= nonlinear_force(u, self.p)
        if self.forcing is not None:
            if self.forcing.body is not None:
                acc += self.forcing.body(t)
            if self.forcing.traction is not None:
                acc += self.forcing.traction(t) / self._m
        return acc

    def _apply_bc(self, w, t=None, kind="u"):
        if self.forcing is not None and self.forcing.dirichlet is not None and t is not None:
            if kind == "u":
                w[self._bc] = self.forcing.dirichlet(t)
            return w
        w[self._bc] = 0.0
        return w

    # --------------------------------------------------------------------
    def start(self, u0, v0, t0=0.0):
        """Initialise so that the averaged velocity at t0 equals v0 exactly."""
        u = np.array(u0, dtype=float).reshape(self._shape)
        v0 = np.array(v0, dtype=float).reshape(self._shape)
        self._apply_bc(u, t0, "u")
        if self.forcing is None or self.forcing.dirichlet is None:
            self._apply_bc(v0)
        h = 0.5 * self.dt * self._a
        acc = self._rhs(u, t0, self._ku(u))
        v_minus = (1.0 + h) * v0 - 0.5 * self.dt * acc
        if self.forcing is not None and self.forcing.dirichlet is not None:
            v_minus[self._bc] = (self.forcing.dirichlet(t0) - self.forcing.dirichlet(t0 - self.dt)) / self.dt
        else:
            self._apply_bc(v_minus)
        self.state = SimState(u, v_minus, float(t0), 0)
        self.d_cum = 0.0
        self._d_prev = None
        return self.state

    def advance(self):
        """One step. Returns the record at the current integer level n.

        Record is ``(t_n, u^n, vbar^n, e_kin, e_strain, e_pot, d_cum)``; the
        state then moves to level n+1.
        """
        s = self.state
        dt = self.dt
        u, v_minus = s.u, s.v
        ku = self._ku(u)
        h = 0.5 * dt * self._a
        v_plus = ((1.0 - h) * v_minus + dt * self._rhs(u, s.t, ku)) / (1.0 + h)
        if self.forcing is not None and self.forcing.dirichlet is not None:
            v_plus[self._bc] = (self.forcing.dirichlet(s.t + dt) - self.forcing.dirichlet(s.t)) / dt
        else:
            self._apply_bc(v_plus)
        if not np.isfinite(v_plus).all():
            raise BlowUpError(s.step, float(np.nanmax(np.abs(u))))

        vbar = 0.5 * (v_minus + v_plus)
        m = self.system.node_mass
        e_kin = 0.25 * float(m @ ((v_plus * v_plus).sum(1) + (v_minus * v_minus).sum(1)))
        e_strain = 0.5 * float(u.ravel() @ ku.ravel()) + 0.25 * dt * float(
            ku.ravel() @ (v_plus - v_minus).ravel())
        e_pot = 0.0 if self.p is None else float(m @ potential_density(u, self.p))
        d_now = float((m * self.system.a) @ (vbar * vbar).sum(1))
        if self._d_prev is not None:
            self.d_cum += 0.5 * dt * (self._d_prev + d_now)
        self._d_prev = d_now
        self.dissipation_steps.append(d_now)
        record = (s.t, u, vbar, e_kin, e_strain, e_pot, self.d_cum)

        u_next = u + dt * v_plus
        self._apply_bc(u_next, s.t + dt, "u")
        self.state = SimState(u_next, v_plus, s.t + dt, s.step + 1)
        return record

    def run(self, n_steps, record_every=1, observers=()):
        """Advance n_steps and return the EnergyTrace at levels 0..n_steps."""
        rows = []
        self.dissipation_steps = []
        for n in range(n_steps + 1):
            t, u, vbar, ek, es, ep, dc = self.advance()
            if n % record_every == 0 or n == n_steps:
                rows.append((t, ek, es, ep, dc))
                for obs in observers:
                    obs(n, t, u, vbar)
        arr = np.array(rows)
        return EnergyTrace(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                           {"dt": self.dt, "n_steps": n_steps})


def step(state, system, dt, nonlinearity=None, forcing=None):
    """Single functional step: returns the state at the next integer level."""
    integ = LeapfrogIntegrator(system, dt, nonlinearity, forcing)
    integ.state = SimState(state.u.copy(), state.v.copy(), state.t, state.step)
    integ.advance()
    return integ.state


def plan_steps(T, dt_stable):
    """Number of steps and uniform dt <= dt_stable landing exactly on T."""
    n = max(1, int(math.ceil(T / dt_stable - 1e-12)))
    return n, T / n


# ---------------------------------------------------------------- initial data


class InitialDataError(ValueError):
    pass


def _direction(dim):
    c = np.ones(dim)
    return c / np.linalg.norm(c)


def bump_profile(r, r_a, r_b):
    """sin^4 bump supported on (r_a, r_b)."""
    s = (np.asarray(r) - r_a) / (r_b - r_a)
    out = np.sin(np.pi * np.clip(s, 0.0, 1.0)) ** 4
    return np.where((s > 0) & (s < 1), out, 0.0)


def initial_data(mesh, kind, amplitude=0.2, seed=0, R0=None, R1=None, R_d=None):
    """Nodal (u0, v0), zero on GAMMA0.

    ``radial-bump``: amplitude * bump(|x|) * (1,..,1)/sqrt(n) supported in
    R0 + 0.1 < |x| < R_d, v0 = 0.
    ``fourier-mode``: quarter-wave sin(pi (r - R0) / (2 (R1 - R0))) times the
    same direction, v0 = 0.
    ``random-seeded``: smooth random Fourier sums (u0 and v0) damped by
    ((r - R0)/(R1 - R0))^2, from ``numpy.random.default_rng(seed)``.
    """
    X = mesh.nodes
    n = mesh.dim
    r = np.linalg.norm(X, axis=1)
    R0 = float(r.min()) if R0 is None else R0
    R1 = float(r.max()) if R1 is None else R1
    R_d = 0.5 * (R0 + R1) if R_d is None else R_d
    c = _direction(n)
    if kind == "radial-bump":
        u0 = amplitude * bump_profile(r, R0 + 0.1, R_d)[:, None] * c
        v0 = np.zeros_like(u0)
    elif kind == "fourier-mode":
        u0 = amplitude * np.sin(0.5 * np.pi * (r - R0) / (R1 - R0))[:, None] * c
        v0 = np.zeros_like(u0)
    elif kind == "random-seeded":
        rng = np.random.default_rng(seed)
        cut = (((r - R0) / (R1 - R0)) ** 2)[:, None]

        def smooth_field():
            k = rng.normal(scale=2.0, size=(4, n))
            phase = rng.uniform(0, 2 * np.pi, size=4)
            coef = rng.normal(size=(4, n))
            w = np.sin(X @ k.T + phase) @ coef
            return cut * w / max(np.abs(w).max(), 1e-300)

        u0 = amplitude * smooth_field()
        v0 = amplitude * smooth_field()
    else:
        raise InitialDataError(f"unknown initial data kind {kind!r}")
    bc = mesh.dirichlet_nodes
    u0[bc] = 0.0
    v0[bc] = 0.0
    return u0, v0
