"""P1 surface finite elements on flat polyhedral sphere approximations."""

from __future__ import annotations


import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import GeometryError, UsageError
from .geometry import SurfaceMesh, p1_gradients, triangle_areas

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _element_data(mesh: SurfaceMesh):
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    if np.any(areas <= 1e-14 * mesh.R**2 / max(mesh.n_triangles, 1)):
        raise GeometryError("degenerate triangle in assembly")
    return areas


def _scatter(mesh, local):
    """Assemble ``(F, 3, 3)`` element matrices into a CSR matrix."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_mass(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix, exact for products of P1 functions."""
    areas = _element_data(mesh)
    return _scatter(mesh, areas[:, None, None] * _LOCAL_MASS[None])


def assemble_stiffness(mesh: SurfaceMesh) -> sp.csr_matrix:
    """P1 stiffness matrix ``S_ij = int grad phi_i . grad phi_j``."""
    areas = _element_data(mesh)
    x = [mesh.vertices[mesh.triangles[:, k]] for k in range(3)]
    # edge opposite vertex k
    e = [x[2] - x[1], x[0] - x[2], x[1] - x[0]]
    dots = np.stack([np.stack([np.einsum("ij,ij->i", e[a], e[b]) for b in range(3)], -1) for a in range(3)], 1)
    return _scatter(mesh, dots / (4.0 * areas)[:, None, None])


def lumped_mass(M: sp.spmatrix) -> np.ndarray:
    """Row-sum lumping of a mass matrix, returned as the diagonal vector."""
    d = np.asarray(M.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise GeometryError("non-positive lumped mass")
    return d


def element_gradients(mesh: SurfaceMesh, f) -> np.ndarray:
    g, _ = p1_gradients(mesh.vertices, mesh.triangles, np.asarray(f, dtype=float))
    return g


class P1Space:
    """Cached operators for one mesh: mass, stiffness, lumped mass, normals."""

    def __init__(self, mesh: SurfaceMesh):
        self.mesh = mesh
        self.M = assemble_mass(mesh)
        self.S = assemble_stiffness(mesh)
        self.ml = lumped_mass(self.M)
        self.one = np.ones(mesh.n_vertices)
        self.area = float(self.ml.sum())
        self.nu = mesh.vertices.T / mesh.R
        self._mlu = None

    @property
    def n(self) -> int:
        return self.mesh.n_vertices

    def check(self, f, name="field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise UsageError(f"{name} has shape {f.shape}, mesh has {self.n} vertices")
        return f

    def mass_solve(self, r) -> np.ndarray:
        """Solve ``M x = r`` with a cached sparse LU of the consistent mass."""
        if self._mlu is None:
            self._mlu = splu(self.M.tocsc())
        return self._mlu.solve(np.asarray(r, dtype=float))

    def laplacian(self, u, lumped: bool = False) -> np.ndarray:
        """Discrete Laplace-Beltrami of a nodal field, ``-M^{-1} S u``."""
        r = self.S @ u
        return -(r / self.ml) if lumped else -self.mass_solve(r)

    def inner(self, f, g) -> float:
        return float(f @ (self.M @ g))

    def norm(self, f) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    def dual_norm(self, r, lumped: bool = True) -> float:
        """``sqrt(r^T M^{-1} r)`` of a weak residual vector."""
        if lumped:
            return float(np.sqrt(np.sum(r * r / self.ml)))
        return float(np.sqrt(max(r @ self.mass_solve(r), 0.0)))


def space(mesh: SurfaceMesh) -> P1Space:
    """The P1 space of a mesh, built once and kept on the mesh object.

    The space refers back to its mesh, so both are freed together once the
    mesh is dropped (a weak-keyed table would keep them alive forever).
    """
    sp_ = mesh.__dict__.get("_p1space")
    if sp_ is None:
        sp_ = P1Space(mesh)
        object.__setattr__(mesh, "_p1space", sp_)
    return sp_


def integrate(mesh: SurfaceMesh, f) -> float:
    """Integral of a P1 field over the polyhedral surface (exact)."""
    V = space(mesh)
    return float(V.ml @ V.check(f))


def mean_value(mesh: SurfaceMesh, f) -> float:
    V = space(mesh)
    return integrate(mesh, f) / V.area


def integrate_lumped(mesh: SurfaceMesh, values) -> float:
    """Vertex-quadrature integral, used for nonlinear integrands such as W(phi)."""
    V = space(mesh)
    return float(V.ml @ V.check(values))
