"""P1 finite elements for the damped anisotropic elastic system.

Displacements are stored node-major as arrays of shape ``(n_nodes, dim)``;
the flat degree-of-freedom index is ``node * dim + component``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import atomic_write_text
from .tensor import EllipticityError, ellipticity_bounds


class AssemblyError(ValueError):
    pass


def p1_gradients(coords):
    """Gradients of the barycentric basis on simplices ``coords[E, n+1, n]``.

    Returns ``(grads[E, n+1, n], volumes[E])``.
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[-1]
    D = np.swapaxes(coords[:, 1:, :] - coords[:, :1, :], 1, 2)  # columns X_k - X_0
    det = np.linalg.det(D)
    scale = np.abs(D).max(axis=(1, 2)) ** n
    bad = np.abs(det) <= 1e-14 * np.where(scale > 0, scale, 1.0)
    if bad.any():
        raise AssemblyError(f"degenerate simplex at element {int(np.flatnonzero(bad)[0])}")
    Dinv = np.linalg.inv(D)
    grads = np.empty(coords.shape[:1] + (n + 1, n))
    grads[:, 1:, :] = Dinv
    grads[:, 0, :] = -Dinv.sum(axis=1)
    vol = np.abs(det) / np.prod(np.arange(1, n + 1))
    return grads, vol


def displacement_gradients(grads, elements, u):
    """Per-element du_i/dx_j as ``(E, n, n)``."""
    return np.einsum("eai,eaj->eij", u[elements], grads)


def sym(G):
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def strain(coords, nodal_u):
    """Constant strain of the P1 interpolant on one simplex."""
    coords = np.asarray(coords, dtype=float)[None]
    grads, _ = p1_gradients(coords)
    G = np.einsum("ai,aj->ij", np.asarray(nodal_u, dtype=float), grads[0])
    return sym(G)


def element_strains(mesh, u, grads=None):
    if grads is None:
        grads, _ = p1_gradients(mesh.nodes[mesh.elements])
    return sym(displacement_gradients(grads, mesh.elements, np.asarray(u).reshape(mesh.n_nodes, mesh.dim)))


def stress(tensor_field, x, eps):
    """sigma_ij = a_ijkl(x) eps_kl (single point or batch)."""
    a = tensor_field(x)
    return np.einsum("...ijkl,...kl->...ij", a, eps)


@dataclass(eq=False)
class AssembledSystem:
    """Lumped mass, sparse stiffness and nodal damping of one mesh.

    ``M`` and ``C`` are diagonals over flat dofs; ``node_mass`` and ``a`` are
    per node.  ``dirichlet_dofs`` lists the constrained flat dofs on GAMMA0.
    """

    mesh: object
    tensor_field: object
    K: sp.csr_matrix
    node_mass: np.ndarray
    a: np.ndarray
    grads: np.ndarray
    element_tensors: np.ndarray

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def M(self):
        return np.repeat(self.node_mass, self.dim)

    @property
    def C(self):
        return np.repeat(self.node_mass * self.a, self.dim)

    @property
    def dirichlet_nodes(self):
        return self.mesh.dirichlet_nodes

    @property
    def dirichlet_dofs(self):
        n = self.dim
        return (self.dirichlet_nodes[:, None] * n + np.arange(n)).ravel()

    def free_mask(self):
        mask = np.ones(self.mesh.n_nodes * self.dim, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return mask

    def project(self, w):
        """Zero the GAMMA0 components (in place) and return ``w``."""
        w.reshape(-1, self.dim)[self.dirichlet_nodes] = 0.0
        return w


def assemble(mesh, tensor_field, damping=None, check_ellipticity=True):
    """Stiffness (one-point quadrature at centroids), row-sum lumped mass, nodal damping."""
    n = mesh.dim
    grads, vol = p1_gradients(mesh.nodes[mesh.elements])
    A = tensor_field(mesh.centroids)
    if check_ellipticity:
        try:
            ellipticity_bounds(tensor_field, mesh.centroids)
        except EllipticityError as exc:
            raise AssemblyError(f"assembly aborted: {exc}") from exc
    # Ke[(a,i),(b,k)] = vol * a_ijkl dphi_a/dx_j dphi_b/dx_l
    Ke = np.einsum("e,eijkl,eaj,ebl->eaibk", vol, A, grads, grads)
    nloc = (n + 1) * n
    Ke = Ke.reshape(-1, nloc, nloc)
    dofs = (mesh.elements[:, :, None] * n + np.arange(n)).reshape(-1, nloc)
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    ndof = mesh.n_nodes * n
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    node_mass = np.zeros(mesh.n_nodes)
    np.add.at(node_mass, mesh.elements, (vol / (n + 1))[:, None])
    a = np.zeros(mesh.n_nodes) if damping is None else np.asarray(
        getattr(damping, "a", damping), dtype=float)
    if np.any(a < 0):
        raise AssemblyError("damping coefficient must be nonnegative")
    return AssembledSystem(mesh, tensor_field, K, node_mass, a, grads, A)


# ---------------------------------------------------------------- nonlinearity


def as_exponents(p, dim):
    p = np.broadcast_to(np.asarray(p, dtype=float), (dim,)).copy()
    return p


def nonlinear_force(u, p):
    """Componentwise |u_i|^(p_i - 1) u_i."""
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    return np.abs(u) ** (p - 1.0) * u


def potential_density(u, p):
    """Componentwise |u_i|^(p_i + 1) / (p_i + 1), summed over components."""
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    return (np.abs(u) ** (p + 1.0) / (p + 1.0)).sum(axis=-1)


def energy_quadrature(system, u, v, p=None):
    """(E_kin, E_strain, E_pot) with lumped nodal quadrature; ``p=None`` disables F."""
    n = system.dim
    u = np.asarray(u, dtype=float).reshape(-1, n)
    v = np.asarray(v, dtype=float).reshape(-1, n)
    e_kin = 0.5 * float(np.dot(system.node_mass, (v * v).sum(axis=1)))
    uf = u.ravel()
    e_strain = 0.5 * float(uf @ (system.K @ uf))
    e_pot = 0.0 if p is None else float(np.dot(system.node_mass, potential_density(u, p)))
    return e_kin, e_strain, e_pot


def strain_energy_elementwise(mesh, tensor_field, u):
    """1/2 sum_e |e| sigma:eps, evaluated element by element."""
    grads, vol = p1_gradients(mesh.nodes[mesh.elements])
    eps = element_strains(mesh, u, grads)
    sig = stress(tensor_field, mesh.centroids, eps)
    return 0.5 * float(np.sum(vol * np.einsum("eij,eij->e", sig, eps)))


def export_coo(K, path):
    """Write ``row col value`` lines for the nonzeros of K."""
    C = sp.coo_matrix(K)
    order = np.lexsort((C.col, C.row))
    text = "".join(f"{r} {c} {v:.17g}\n" for r, c, v in
                   zip(C.row[order], C.col[order], C.data[order]))
    atomic_write_text(path, text)


# ---------------------------------------------------------------- rigid motions


def rigid_motions(nodes):
    """Translations and infinitesimal rotations as flat dof vectors."""
    nodes = np.asarray(nodes, dtype=float)
    N, n = nodes.shape
    out = []
    for i in range(n):
        t = np.zeros((N, n))
        t[:, i] = 1.0
        out.append(t.ravel())
    for i in range(n):
        for j in range(i + 1, n):
            w = np.zeros((N, n))
            w[:, i] = nodes[:, j]
            w[:, j] = -nodes[:, i]
            out.append(w.ravel())
    return out


def smallest_constrained_eigenvalue(system, iters=500, tol=1e-10, seed=0):
    """Smallest eigenvalue of K restricted to free dofs (lumped-mass scaled).

    Inverse power iteration on D^-1/2 K_ff D^-1/2 with a sparse LU solve.
    """
    from scipy.sparse.linalg import splu

    free = system.free_mask()
    Kff = system.K[free][:, free].tocsc()
    d = 1.0 / np.sqrt(system.M[free])
    S = sp.diags(d) @ Kff @ sp.diags(d)
    lu = splu(S.tocsc())
    x = np.random.default_rng(seed).standard_normal(S.shape[0])
    x /= np.linalg.norm(x)
    lam = np.inf
    for _ in range(iters):
        y = lu.solve(x)
        y /= np.linalg.norm(y)
        new = float(y @ (S @ y))
        x = y
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return lam
