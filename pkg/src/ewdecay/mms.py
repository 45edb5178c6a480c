"""Manufactured solutions u*(x, t) = sin(t) w(x) for convergence studies.

The forcing g = u*_tt - div sigma(u*) + a u*_t + f(u*) is derived
symbolically with sympy for isotropic Lame media with radial coefficients;
GAMMA0 carries u* as Dirichlet data and GAMMA1 the traction sigma(u*) nu.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .config import ConfigError
from .diagnostics import observed_orders, trapezoid
from .dynamics import Forcing, LeapfrogIntegrator, NonlinearityParams, stable_dt
from .fem import assemble, nonlinear_force
from .geometry import GAMMA1, bump_damping, gen_annulus_mesh, gen_shell_mesh, zero_damping
from .tensor import lame_tensor, radial_profile


@dataclass
class MMSConfig:
    case: str = "radial"          # "radial" or "linear"
    dim: int = 2
    R0: float = 1.0
    R1: float = 2.0
    n_r: int = 3
    n_theta: int = 24
    n_face: int = 2
    T: float = 1.0
    cfl_safety: float = 0.4
    lambda0: float = 1.0
    mu0: float = 1.0
    mu_eps: float = 0.25          # mu(r) = mu0 (1 + mu_eps r^2)
    damping: bool = True
    R_d: float = 1.5
    a0: float = 5.0
    xi: float = 0.2
    nonlinear: bool = True
    p: float = 3.0

    @classmethod
    def from_dict(cls, d):
        fields = {f.name: f for f in dataclasses.fields(cls)}
        bad = set(d) - set(fields)
        if bad:
            raise ConfigError(f"unknown MMS config key(s): {sorted(bad)}")
        cfg = cls(**d)
        if cfg.case not in ("radial", "linear"):
            raise ConfigError("case must be 'radial' or 'linear'")
        if cfg.dim not in (2, 3):
            raise ConfigError("dim must be 2 or 3")
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read MMS config {path}: {exc}") from exc


class ManufacturedSolution:
    """Symbolic w(x), sigma(w) and div sigma(w), lambdified for nodal evaluation."""

    def __init__(self, w_exprs, xs, lam_expr, mu_expr):
        dim = len(xs)
        self.dim = dim
        self.xs = xs
        W = sp.Matrix(w_exprs)
        grad = W.jacobian(xs)
        eps = (grad + grad.T) / 2
        sig = lam_expr * eps.trace() * sp.eye(dim) + 2 * mu_expr * eps
        div = sp.Matrix([sum(sp.diff(sig[i, j], xs[j]) for j in range(dim)) for i in range(dim)])
        self._w = sp.lambdify(xs, list(W), "numpy")
        self._sig = sp.lambdify(xs, [sig[i, j] for i in range(dim) for j in range(dim)], "numpy")
        self._div = sp.lambdify(xs, list(div), "numpy")

    def _eval(self, fn, X):
        vals = fn(*X.T)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), (X.shape[0],)) for v in vals], axis=-1)

    def w(self, X):
        return self._eval(self._w, X)

    def sigma(self, X):
        return self._eval(self._sig, X).reshape(-1, self.dim, self.dim)

    def div_sigma(self, X):
        return self._eval(self._div, X)


def _symbols(dim):
    return sp.symbols("x0:%d" % dim, real=True)


def build_solution(cfg):
    xs = _symbols(cfg.dim)
    r = sp.sqrt(sum(x**2 for x in xs))
    if cfg.case == "linear":
        lam = sp.Float(cfg.lambda0)
        mu = sp.Float(cfg.mu0)
        coeffs = [[1.0, 0.5, -0.25], [0.3, -1.0, 0.2], [-0.4, 0.1, 0.7]]
        w = [sum(sp.Float(coeffs[i][j]) * xs[j] for j in range(cfg.dim)) for i in range(cfg.dim)]
    else:
        lam = sp.Float(cfg.lambda0)
        mu = cfg.mu0 * (1 + cfg.mu_eps * r**2)
        phi = sp.sin(sp.pi * (r - cfg.R0) / (2 * (cfg.R1 - cfg.R0)))
        w = [phi * x / r for x in xs]
        # tangential part in the (x0, x1) plane
        w[0] += -0.5 * phi * xs[1] / r
        w[1] += 0.5 * phi * xs[0] / r
    return ManufacturedSolution(w, xs, lam, mu)


def build_tensor(cfg):
    if cfg.case == "linear":
        return lame_tensor(cfg.lambda0, cfg.mu0, cfg.dim)
    mu = radial_profile(lambda r: cfg.mu0 * (1 + cfg.mu_eps * r**2),
                        lambda r: 2 * cfg.mu0 * cfg.mu_eps * r)
    return lame_tensor(cfg.lambda0, mu, cfg.dim)


def build_mesh(cfg, level):
    k = 2 ** level
    if cfg.dim == 2:
        return gen_annulus_mesh(cfg.R0, cfg.R1, cfg.n_r * k, cfg.n_theta * k)
    return gen_shell_mesh(cfg.R0, cfg.R1, cfg.n_r * k, cfg.n_face * k)


def traction_load(mesh, sigma_nodes):
    """Nodal load sum_F |F|/n sigma(x_v) nu_F over GAMMA1 facets (vertex quadrature)."""
    n = mesh.dim
    load = np.zeros((mesh.n_nodes, n))
    sel = np.flatnonzero(mesh.facet_tags == GAMMA1)
    nu = mesh.facet_normals[sel]
    w = mesh.facet_measures[sel] / n
    for k in range(n):
        nodes = mesh.facets[sel, k]
        t = np.einsum("fij,fj->fi", sigma_nodes[nodes], nu)
        np.add.at(load, nodes, w[:, None] * t)
    return load


def make_forcing(mesh, sol, a_nodes, p):
    """Forcing closures for u* = sin(t) w on this mesh."""
    X = mesh.nodes
    w = sol.w(X)
    div = sol.div_sigma(X)
    load = traction_load(mesh, sol.sigma(X))
    bc = mesh.dirichlet_nodes
    a = a_nodes[:, None]

    def body(t):
        g = -math.sin(t) * (w + div) + math.cos(t) * a * w
        if p is not None:
            g = g + nonlinear_force(math.sin(t) * w, p)
        return g

    return Forcing(body=body, traction=lambda t: math.sin(t) * load,
                   dirichlet=lambda t: math.sin(t) * w[bc])


@dataclass
class ConvergenceRow:
    level: int
    h: float
    dt: float
    n_steps: int
    l2_error: float
    order: float = float("nan")


def _mesh_size(mesh):
    e = mesh.elements
    X = mesh.nodes
    edges = np.concatenate([X[e[:, i]] - X[e[:, j]]
                            for i in range(e.shape[1]) for j in range(i + 1, e.shape[1])])
    return float(np.linalg.norm(edges, axis=1).max())


def run_level(cfg, level, dt):
    mesh = build_mesh(cfg, level)
    field = build_tensor(cfg)
    damping = bump_damping(mesh, cfg.R_d, cfg.a0, cfg.xi, cfg.R0, cfg.R1) if cfg.damping \
        else zero_damping(mesh)
    system = assemble(mesh, field, damping)
    nl = NonlinearityParams.make(cfg.p, cfg.dim) if cfg.nonlinear else None
    sol = build_solution(cfg)
    forcing = make_forcing(mesh, sol, system.a, None if nl is None else nl.p)
    n_steps = int(round(cfg.T / dt))
    integ = LeapfrogIntegrator(system, dt, nl, forcing)
    w = sol.w(mesh.nodes)
    integ.start(0.0 * w, w)  # u*(0) = 0, u*_t(0) = w
    m = system.node_mass
    times, errs = [], []

    def observe(n, t, u, vbar):
        e = u - math.sin(t) * w
        times.append(t)
        errs.append(float(m @ (e * e).sum(1)))

    integ.run(n_steps, 1, [observe])
    return mesh, system, math.sqrt(trapezoid(errs, times))


def convergence_study(cfg, levels=3):
    """Simultaneous h and dt halving; returns ConvergenceRow per level.

    Errors that fail to decrease are not an exception; the table is still
    returned and callers can inspect it (see :func:`is_monotone`).
    """
    if levels < 3:
        raise ConfigError(f"convergence study needs at least 3 levels, got {levels}")
    mesh0 = build_mesh(cfg, 0)
    sys0 = assemble(mesh0, build_tensor(cfg), None)
    dt_stable0 = stable_dt(sys0, 1.0)
    n0 = int(math.ceil(cfg.T / (cfg.cfl_safety * dt_stable0)))
    rows = []
    for level in range(levels):
        n_steps = n0 * 2 ** level
        dt = cfg.T / n_steps
        mesh, system, err = run_level(cfg, level, dt)
        rows.append(ConvergenceRow(level, _mesh_size(mesh), dt, n_steps, err))
    orders = observed_orders([r.l2_error for r in rows])
    for r, o in zip(rows[1:], orders):
        r.order = float(o)
    return rows


def is_monotone(rows):
    e = [r.l2_error for r in rows]
    return all(b < a for a, b in zip(e, e[1:]))


def format_table(rows):
    out = ["level         h            dt     steps      L2_error   order"]
    for r in rows:
        out.append(f"{r.level:5d} {r.h:10.4e} {r.dt:12.4e} {r.n_steps:8d} {r.l2_error:13.6e} "
                   f"{'   -' if math.isnan(r.order) else f'{r.order:7.3f}'}")
    return "\n".join(out)
