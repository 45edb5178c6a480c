"""Annulus / spherical-shell meshes, boundary partition checks and damping fields."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from math import factorial

import numpy as np
from scipy.spatial import cKDTree

GAMMA0 = 0
GAMMA1 = 1


class MeshError(ValueError):
    """Invalid mesh parameters or inconsistent mesh data."""


class MeshFormatError(MeshError):
    """Malformed mesh text file."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DampingConfigError(ValueError):
    pass


@dataclass(eq=False)
class Mesh:
    """Simplicial mesh with tagged boundary facets.

    ``facets`` holds node indices of boundary facets (edges in 2D, triangles
    in 3D); ``facet_tags`` is GAMMA0 (Dirichlet) or GAMMA1 (traction free).
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self.facets = np.ascontiguousarray(self.facets, dtype=np.int64).reshape(-1, self.dim)
        self.facet_tags = np.ascontiguousarray(self.facet_tags, dtype=np.int64)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def signed_volumes(self):
        X = self.nodes[self.elements]
        D = X[:, 1:, :] - X[:, :1, :]
        return np.linalg.det(D) / factorial(self.dim)

    @cached_property
    def volumes(self):
        return np.abs(self.signed_volumes())

    @cached_property
    def centroids(self):
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def facet_owner(self):
        """Index of the element adjacent to each boundary facet."""
        d = self.dim
        faces = []
        for drop in range(d + 1):
            keep = [k for k in range(d + 1) if k != drop]
            faces.append(self.elements[:, keep])
        faces = np.sort(np.concatenate(faces), axis=1)
        owners = np.tile(np.arange(self.n_elements), d + 1)
        lookup = {tuple(f): e for f, e in zip(faces.tolist(), owners.tolist())}
        out = np.empty(len(self.facets), dtype=np.int64)
        for k, f in enumerate(np.sort(self.facets, axis=1).tolist()):
            try:
                out[k] = lookup[tuple(f)]
            except KeyError:
                raise MeshError(f"boundary facet {k} is not a face of any element")
        return out

    @cached_property
    def facet_measures(self):
        X = self.nodes[self.facets]
        if self.dim == 2:
            return np.linalg.norm(X[:, 1] - X[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)

    @cached_property
    def facet_centroids(self):
        return self.nodes[self.facets].mean(axis=1)

    @cached_property
    def facet_normals(self):
        """Outward unit normals (pointing away from the adjacent element)."""
        X = self.nodes[self.facets]
        if self.dim == 2:
            t = X[:, 1] - X[:, 0]
            nrm = np.stack([t[:, 1], -t[:, 0]], axis=1)
        else:
            nrm = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        out = self.facet_centroids - self.centroids[self.facet_owner]
        flip = np.einsum("ij,ij->i", nrm, out) < 0
        nrm[flip] *= -1.0
        return nrm

    def nodes_on(self, tag):
        return np.unique(self.facets[self.facet_tags == tag])

    @cached_property
    def dirichlet_nodes(self):
        return self.nodes_on(GAMMA0)

    def validate(self):
        """Raise MeshError on inconsistent indices, tags or degenerate simplices."""
        n = self.n_nodes
        if self.nodes.ndim != 2 or self.nodes.shape[1] != self.dim:
            raise MeshError("node coordinate array has wrong shape")
        if self.elements.shape[1:] != (self.dim + 1,):
            raise MeshError("element connectivity has wrong width")
        for name, arr in (("element", self.elements), ("facet", self.facets)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise MeshError(f"{name} references a node index out of range")
        if len(self.facet_tags) != len(self.facets):
            raise MeshError("facet tag count differs from facet count")
        bad = ~np.isin(self.facet_tags, (GAMMA0, GAMMA1))
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise MeshError(f"facet {k} has invalid tag {self.facet_tags[k]}")
        vol = self.signed_volumes()
        if np.any(vol <= 0):
            raise MeshError(f"{int((vol <= 0).sum())} elements are degenerate or inverted")
        self.facet_owner  # noqa: B018 - raises if a facet is not an element face
        return self

    def with_swapped_tags(self):
        return Mesh(self.dim, self.nodes, self.elements, self.facets, 1 - self.facet_tags)

    def transformed(self, R):
        """Mesh with nodes mapped by x -> R x (R orthogonal, det +1)."""
        return Mesh(self.dim, self.nodes @ np.asarray(R).T, self.elements,
                    self.facets, self.facet_tags)

    def total_volume(self):
        return float(self.signed_volumes().sum())

    def sample_points(self):
        """Element centroids (quadrature points) and mesh nodes."""
        return np.vstack([self.centroids, self.nodes])


def _orient(nodes, elements, dim):
    X = nodes[elements]
    det = np.linalg.det(X[:, 1:, :] - X[:, :1, :])
    elements = elements.copy()
    neg = det < 0
    elements[neg, 0], elements[neg, 1] = elements[neg, 1], elements[neg, 0].copy()
    return elements


def gen_annulus_mesh(R0, R1, n_r, n_theta):
    """Structured polar triangulation of R0 <= |x| <= R1.

    Ring k (radius R0 + k (R1-R0)/n_r) carries n_theta equally spaced nodes;
    each polar cell is split into two triangles.
    """
    if not (0 < R0 < R1):
        raise MeshError(f"need 0 < R0 < R1, got R0={R0}, R1={R1}")
    if n_r < 2 or n_theta < 8:
        raise MeshError(f"need n_r >= 2 and n_theta >= 8, got {n_r}, {n_theta}")
    radii = np.linspace(R0, R1, n_r + 1)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    nodes = np.array([[r * np.cos(t), r * np.sin(t)] for r in radii for t in theta])

    def idx(k, j):
        return k * n_theta + (j % n_theta)

    tris = []
    for k in range(n_r):
        for j in range(n_theta):
            a, b = idx(k, j), idx(k, j + 1)
            c, d = idx(k + 1, j), idx(k + 1, j + 1)
            if (j + k) % 2 == 0:
                tris += [(a, b, d), (a, d, c)]
            else:
                tris += [(a, b, c), (b, d, c)]
    elements = _orient(nodes, np.array(tris), 2)
    inner = [(idx(0, j), idx(0, j + 1)) for j in range(n_theta)]
    outer = [(idx(n_r, j), idx(n_r, j + 1)) for j in range(n_theta)]
    facets = np.array(inner + outer)
    tags = np.array([GAMMA0] * n_theta + [GAMMA1] * n_theta)
    return Mesh(2, nodes, elements, facets, tags)


def _cube_surface_grid(n):
    """Integer lattice points on the surface of [0, n]^3 and the face quads."""
    pts = {}
    quads = []

    def key(p):
        if p not in pts:
            pts[p] = len(pts)
        return pts[p]

    for axis in range(3):
        for side in (0, n):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            for i in range(n):
                for j in range(n):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = [0, 0, 0]
                        p[axis] = side
                        p[u_ax] = i + di
                        p[v_ax] = j + dj
                        corners.append(key(tuple(p)))
                    quads.append(corners)
    lattice = np.array(sorted(pts, key=pts.get), dtype=float)
    return lattice, np.array(quads)


def _prism_tets(v):
    """Split prism (bottom v0 v1 v2, top v3 v4 v5) conformingly by global index."""
    bottom = list(v[:3])
    k = int(np.argmin(bottom))
    order = [k, (k + 1) % 3, (k + 2) % 3]
    v0, v1, v2 = (bottom[i] for i in order)
    v3, v4, v5 = (v[3 + i] for i in order)
    if min(v1, v5) < min(v2, v4):
        return [(v0, v1, v2, v5), (v0, v1, v5, v4), (v0, v4, v5, v3)]
    return [(v0, v1, v2, v4), (v0, v4, v2, v5), (v0, v4, v5, v3)]


def gen_shell_mesh(R0, R1, n_r, n_face):
    """Tetrahedral mesh of the spherical shell R0 <= |x| <= R1.

    Cubed-sphere surface grid (six panels, equiangular gnomonic projection)
    extruded radially into n_r layers of hexahedra, each split into six
    tetrahedra (two prisms of three).
    """
    if not (0 < R0 < R1):
        raise MeshError(f"need 0 < R0 < R1, got R0={R0}, R1={R1}")
    if n_r < 1 or n_face < 1:
        raise MeshError(f"need n_r >= 1 and n_face >= 1, got {n_r}, {n_face}")
    lattice, quads = _cube_surface_grid(n_face)
    c = np.tan(0.25 * np.pi * (2.0 * lattice / n_face - 1.0))
    sphere = c / np.linalg.norm(c, axis=1)[:, None]
    ns = len(sphere)
    radii = np.linspace(R0, R1, n_r + 1)
    nodes = np.concatenate([r * sphere for r in radii])

    tris = []
    for q in quads:
        a, b, cc, d = q
        if min(a, cc) < min(b, d):
            tris += [(a, b, cc), (a, cc, d)]
        else:
            tris += [(a, b, d), (b, cc, d)]
    tris = np.array(tris)

    tets = []
    for k in range(n_r):
        lo, hi = k * ns, (k + 1) * ns
        for t in tris:
            tets += _prism_tets([lo + t[0], lo + t[1], lo + t[2],
                                 hi + t[0], hi + t[1], hi + t[2]])
    elements = _orient(nodes, np.array(tets), 3)
    facets = np.concatenate([tris, tris + n_r * ns])
    tags = np.array([GAMMA0] * len(tris) + [GAMMA1] * len(tris))
    return Mesh(3, nodes, elements, facets, tags)


# ---------------------------------------------------------------- text format


def save_mesh(mesh, path):
    """Write the ASCII mesh format (atomic temp + rename)."""
    lines = [f"{mesh.dim} {mesh.n_nodes} {mesh.n_elements} {len(mesh.facets)}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in mesh.nodes]
    lines += [" ".join(str(i) for i in row) for row in mesh.elements]
    lines += [" ".join(str(i) for i in row) + f" {t}"
              for row, t in zip(mesh.facets, mesh.facet_tags)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_mesh(path):
    """Parse and validate a mesh text file."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    rows = [(k + 1, ln.split()) for k, ln in enumerate(raw) if ln.strip()]
    if not rows:
        raise MeshFormatError("empty mesh file", 1)

    def ints(lineno, toks, count):
        if len(toks) != count:
            raise MeshFormatError(f"expected {count} fields, got {len(toks)}", lineno)
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise MeshFormatError("expected integers", lineno)

    lineno, head = rows[0]
    dim, nn, ne, nf = ints(lineno, head, 4)
    if dim not in (2, 3):
        raise MeshFormatError(f"dimension must be 2 or 3, got {dim}", lineno)
    need = 1 + nn + ne + nf
    if len(rows) < need:
        raise MeshFormatError(
            f"expected {need} non-empty lines, found {len(rows)}", rows[-1][0])
    if len(rows) > need:
        raise MeshFormatError("trailing data after boundary facets", rows[need][0])
    nodes = np.empty((nn, dim))
    for k in range(nn):
        lineno, toks = rows[1 + k]
        if len(toks) != dim:
            raise MeshFormatError(f"expected {dim} coordinates, got {len(toks)}", lineno)
        try:
            nodes[k] = [float(t) for t in toks]
        except ValueError:
            raise MeshFormatError("invalid coordinate", lineno)
    elements = np.array([ints(*rows[1 + nn + k], dim + 1) for k in range(ne)],
                        dtype=np.int64).reshape(ne, dim + 1)
    fac = np.array([ints(*rows[1 + nn + ne + k], dim + 1) for k in range(nf)],
                   dtype=np.int64).reshape(nf, dim + 1)
    mesh = Mesh(dim, nodes, elements, fac[:, :dim], fac[:, dim])
    return mesh.validate()


# ---------------------------------------------------------------- checks


@dataclass
class CheckReport:
    name: str
    passed: bool
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def lines(self):
        out = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        out += [f"  {k} = {v}" for k, v in self.details.items()]
        if self.violations:
            out.append(f"  violations = {len(self.violations)} (first: {self.violations[0]})")
        return out


def check_boundary_signs(mesh, tol=1e-8):
    """<x/|x|, nu> <= tol on GAMMA0 and >= -tol on GAMMA1 at facet centroids."""
    x = mesh.facet_centroids
    dr_dnu = np.einsum("ij,ij->i", x / np.linalg.norm(x, axis=1)[:, None], mesh.facet_normals)
    bad0 = (mesh.facet_tags == GAMMA0) & (dr_dnu > tol)
    bad1 = (mesh.facet_tags == GAMMA1) & (dr_dnu < -tol)
    bad = np.flatnonzero(bad0 | bad1)
    return CheckReport(
        "boundary_signs", bad.size == 0,
        [(int(k), int(mesh.facet_tags[k]), float(dr_dnu[k])) for k in bad],
        {"facets": len(mesh.facets), "tol": tol,
         "max_dr_dnu_gamma0": float(dr_dnu[mesh.facet_tags == GAMMA0].max(initial=-np.inf)),
         "min_dr_dnu_gamma1": float(dr_dnu[mesh.facet_tags == GAMMA1].min(initial=np.inf))})


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def _point_triangle_distance(p, a, b, c):
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1)[:, None]
    h = np.einsum("ij,ij->i", p - a, n)
    q = p - h[:, None] * n
    # barycentric inside test on the projected point
    v0, v1, v2 = b - a, c - a, q - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    edge = np.minimum.reduce([_point_segment_distance(p, a, b),
                              _point_segment_distance(p, b, c),
                              _point_segment_distance(p, c, a)])
    return np.where(inside, np.abs(h), edge)


def distance_to_boundary(mesh, points, tag, cutoff):
    """Distance from points to the union of facets with ``tag`` (inf beyond cutoff)."""
    points = np.atleast_2d(points)
    sel = np.flatnonzero(mesh.facet_tags == tag)
    out = np.full(len(points), np.inf)
    if sel.size == 0:
        return out
    X = mesh.nodes[mesh.facets[sel]]
    cent = X.mean(axis=1)
    reach = np.linalg.norm(X - cent[:, None, :], axis=2).max()
    tree = cKDTree(cent)
    for i, cand in enumerate(tree.query_ball_point(points, cutoff + reach)):
        if not cand:
            continue
        cand = np.asarray(cand)
        P = np.repeat(points[i:i + 1], len(cand), axis=0)
        F = X[cand]
        if mesh.dim == 2:
            d = _point_segment_distance(P, F[:, 0], F[:, 1])
        else:
            d = _point_triangle_distance(P, F[:, 0], F[:, 1], F[:, 2])
        out[i] = d.min()
    return out


def check_omega_cover(mesh, damping, xi, a_min):
    """Every node within distance xi of GAMMA1 must carry a >= a_min."""
    dist = distance_to_boundary(mesh, mesh.nodes, GAMMA1, xi)
    collar = np.flatnonzero(dist <= xi)
    a = damping.a if isinstance(damping, DampingField) else np.asarray(damping)
    bad = collar[a[collar] < a_min]
    return CheckReport(
        "omega_cover", bad.size == 0,
        [(int(k), float(a[k])) for k in bad],
        {"xi": xi, "a_min": a_min, "collar_nodes": int(collar.size),
         "min_a_on_collar": float(a[collar].min(initial=np.inf))})


# ---------------------------------------------------------------- damping


def smoothstep_ramp(s):
    """C^1 monotone ramp: 0 for s <= 0, 1 for s >= 1/2, cubic smoothstep between."""
    t = np.clip(2.0 * np.asarray(s, dtype=float), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def smoothstep_ramp_derivative(s):
    t = np.clip(2.0 * np.asarray(s, dtype=float), 0.0, 1.0)
    return 2.0 * 6.0 * t * (1.0 - t)


@dataclass
class DampingField:
    """Nodal damping coefficient a(x) >= 0 supported in omega = {|x| > R_d}."""

    a: np.ndarray
    R_d: float
    a0: float
    R1: float
    xi: float

    def __call__(self, points):
        r = np.linalg.norm(np.atleast_2d(points), axis=1)
        return self.a0 * smoothstep_ramp((r - self.R_d) / (self.R1 - self.R_d))

    def gradient(self, points):
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts, axis=1)
        s = (r - self.R_d) / (self.R1 - self.R_d)
        g = self.a0 * smoothstep_ramp_derivative(s) / (self.R1 - self.R_d)
        return g[:, None] * pts / r[:, None]


def bump_damping(mesh, R_d, a0, xi, R0=None, R1=None):
    """Radial damping layer a0 * psi((|x| - R_d) / (R1 - R_d)).

    R0/R1 default to the extreme node radii.  Requires R0 < R_d < R1 - xi so
    the xi-collar of GAMMA1 sits where the ramp is saturated or positive.
    """
    r = np.linalg.norm(mesh.nodes, axis=1)
    R0 = float(r.min()) if R0 is None else R0
    R1 = float(r.max()) if R1 is None else R1
    if a0 < 0:
        raise DampingConfigError(f"damping amplitude must be nonnegative, got {a0}")
    if not (R0 < R_d < R1 - xi):
        raise DampingConfigError(
            f"omega must cover the xi-collar of Gamma1: need R0 < R_d < R1 - xi, "
            f"got R0={R0}, R_d={R_d}, R1={R1}, xi={xi}")
    field_ = DampingField(np.empty(0), R_d, a0, R1, xi)
    field_.a = field_(mesh.nodes)
    return field_


def zero_damping(mesh):
    r = np.linalg.norm(mesh.nodes, axis=1)
    return DampingField(np.zeros(mesh.n_nodes), float(r.max()), 0.0, float(r.max()) + 1.0, 0.0)
