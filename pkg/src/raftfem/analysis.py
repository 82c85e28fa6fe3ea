"""Diagnostics: energies along a run, raft counting, stationarity residuals
and the Poincare-type inequalities of the constrained height space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .constraints import constraint_residuals
from .femcore import space
from .physics import Params, dW, energy_full, energy_reduced, multiplier_lambda0, multiplier_lambda4


def count_rafts(mesh, phi, threshold: float = 0.0) -> int:
    """Connected components of the vertex set ``{phi > threshold}`` along mesh edges."""
    V = space(mesh)
    phi = V.check(phi, "phi")
    inside = np.flatnonzero(phi > threshold)
    if inside.size == 0:
        return 0
    e = mesh.edges()
    keep = (phi[e[:, 0]] > threshold) & (phi[e[:, 1]] > threshold)
    e = e[keep]
    relabel = -np.ones(mesh.n_vertices, dtype=np.int64)
    relabel[inside] = np.arange(inside.size)
    G = sp.coo_matrix((np.ones(len(e)), (relabel[e[:, 0]], relabel[e[:, 1]])), shape=(inside.size,) * 2)
    n, _ = connected_components(G, directed=False)
    return int(n)


# ---------------------------------------------------------------------------
# stationarity residuals
# ---------------------------------------------------------------------------


@dataclass
class ELResidual:
    """Weak residuals of the stationarity conditions and their dual norms.

    Iterating gives ``(r_phi, r_u)``.
    """

    r_phi: float
    r_u: float
    lambda0: float
    lambda4: float
    lambda_normal: np.ndarray
    vec_phi: np.ndarray = field(repr=False)
    vec_u: np.ndarray = field(repr=False)

    def __iter__(self):
        yield self.r_phi
        yield self.r_u


def el_residual(mesh, phi, u, p: Params, fit_normal_multipliers: bool = False) -> ELResidual:
    """Dual norms of the weak first-variation residuals at ``(phi, u)``.

    The mass and volume multipliers take their closed forms. The three
    multipliers of the normal (translation) constraints vanish in the
    continuum; by default they are set to zero. With
    ``fit_normal_multipliers`` they are fitted by testing the height
    residual with the normal fields instead, which removes the small
    discretisation defect of those fields as Laplace-Beltrami eigenfunctions.
    """
    V = space(mesh)
    phi = V.check(phi, "phi")
    u = V.check(u, "u")
    k, L, R = p.kappa, p.Lambda, p.R
    M, S, ml = V.M, V.S, V.ml
    lam0 = multiplier_lambda0(mesh, phi, p)
    lam4 = multiplier_lambda4(p)
    Su, Mu, Sphi, Mphi = S @ u, M @ u, S @ phi, M @ phi
    r_phi = (
        p.b * p.eps * Sphi
        + (p.b / p.eps) * ml * dW(phi)
        + k * L * L * Mphi
        - k * L * Su
        + (2 * k * L / R**2) * Mu
        + lam0 * ml
    )
    r_u = (
        k * (S @ V.mass_solve(Su))
        + (p.sigma - 2 * k / R**2) * Su
        - (2 * p.sigma / R**2) * Mu
        - k * L * Sphi
        + (2 * k * L / R**2) * Mphi
        + lam4 * ml
    )
    lam_nu = np.zeros(3)
    if fit_normal_multipliers:
        Mnu = np.asarray((M @ V.nu.T).T)
        lam_nu = -np.linalg.solve(V.nu @ Mnu.T, V.nu @ r_u)
        r_u = r_u + lam_nu @ Mnu
    return ELResidual(V.dual_norm(r_phi), V.dual_norm(r_u), lam0, lam4, lam_nu, r_phi, r_u)


# ---------------------------------------------------------------------------
# inequalities and visualisation
# ---------------------------------------------------------------------------


@dataclass
class PoincareReport:
    ratio_l2_h1: float
    ratio_h1_h2: float
    bound_l2_h1: float
    bound_h1_h2: float
    slack: float

    @property
    def first_ok(self) -> bool:
        return self.ratio_l2_h1 <= self.slack * self.bound_l2_h1

    @property
    def second_ok(self) -> bool:
        return self.ratio_h1_h2 <= self.slack * self.bound_h1_h2

    @property
    def ok(self) -> bool:
        return self.first_ok and self.second_ok


def poincare_check(mesh, u, slack: float = 1.05) -> PoincareReport:
    """Ratios ``int u^2 / int |grad u|^2`` and ``int |grad u|^2 / int (Lap_h u)^2``.

    Both are bounded by ``R^2/6`` on fields orthogonal to constants and the
    normal components; ``Lap_h`` is the lumped-mass discrete Laplacian.
    """
    V = space(mesh)
    u = V.check(u, "u")
    Su = V.S @ u
    grad2 = float(u @ Su)
    l2 = float(u @ (V.M @ u))
    lap2 = float(np.sum(Su * Su / V.ml))
    r1 = l2 / grad2 if grad2 > 0 else np.inf
    r2 = grad2 / lap2 if lap2 > 0 else np.inf
    b = mesh.R**2 / 6.0
    return PoincareReport(r1, r2, b, b, slack)


def deformation_surface(mesh, u, rho_vis: float = 1.0) -> np.ndarray:
    """Vertex positions of the deformed membrane ``x + rho u(x) x / R``."""
    V = space(mesh)
    u = V.check(u, "u")
    return mesh.vertices + (rho_vis * u / mesh.R)[:, None] * mesh.vertices


# ---------------------------------------------------------------------------
# per-step record
# ---------------------------------------------------------------------------

RECORD_COLUMNS = (
    "step",
    "t",
    "tau",
    "energy",
    "bending",
    "tension_gradient",
    "tension_mass",
    "coupling_laplacian",
    "coupling_mass",
    "line_gradient",
    "line_potential",
    "curvature_phase",
    "mean_phi",
    "mass_residual",
    "int_u",
    "int_u_nu1",
    "int_u_nu2",
    "int_u_nu3",
    "u_constraint",
    "energy_mismatch",
    "rafts",
    "v_max",
    "secant_iterations",
    "gmres_iterations",
    "multiplier",
    "vertices",
)


@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    tau: float
    energy: float
    terms: dict
    mean_phi: float
    mass_residual: float
    int_u: float
    int_u_nu: tuple
    u_constraint: float  # max |<u, psi>_M| / |u|_M
    energy_mismatch: float  # |E_reduced - E_full(phi, G(P phi))|
    rafts: int
    v_max: float
    secant_iterations: int
    gmres_iterations: int
    multiplier: float
    vertices: int

    def row(self) -> dict:
        out = {
            "step": self.step,
            "t": self.t,
            "tau": self.tau,
            "energy": self.energy,
            **self.terms,
            "mean_phi": self.mean_phi,
            "mass_residual": self.mass_residual,
            "int_u": self.int_u,
            "int_u_nu1": self.int_u_nu[0],
            "int_u_nu2": self.int_u_nu[1],
            "int_u_nu3": self.int_u_nu[2],
            "u_constraint": self.u_constraint,
            "energy_mismatch": self.energy_mismatch,
            "rafts": self.rafts,
            "v_max": self.v_max,
            "secant_iterations": self.secant_iterations,
            "gmres_iterations": self.gmres_iterations,
            "multiplier": self.multiplier,
            "vertices": self.vertices,
        }
        return {k: out[k] for k in RECORD_COLUMNS}


def diagnose(state, p: Params, v_max: float = float("nan")) -> DiagnosticsRecord:
    """Energy, constraint residuals and raft count of an accepted state.

    On the reduced flow the energy is the reduced one; its agreement with the
    full energy at the relaxed height is recorded as ``energy_mismatch``.
    """
    mesh = state.mesh
    V = space(mesh)
    if p.alpha2 > 0:
        rep = energy_full(mesh, state.phi, state.u, p)
        mismatch = 0.0
    else:
        rep, g = energy_reduced(mesh, state.phi, p, return_height=True)
        mismatch = abs(rep.total - energy_full(mesh, state.phi, g, p).total)
    cr = constraint_residuals(mesh, state.u)
    unorm = V.norm(state.u)
    mean = float(V.ml @ state.phi) / V.area
    info = state.info
    return DiagnosticsRecord(
        step=state.step,
        t=state.t,
        tau=state.tau_last,
        energy=rep.total,
        terms=dict(rep.terms),
        mean_phi=mean,
        mass_residual=mean - p.alpha,
        int_u=float(cr[0]),
        int_u_nu=tuple(float(c) for c in cr[1:]),
        u_constraint=float(np.max(np.abs(cr)) / unorm) if unorm > 0 else 0.0,
        energy_mismatch=mismatch,
        rafts=count_rafts(mesh, state.phi),
        v_max=v_max,
        secant_iterations=info.secant_iterations if info else 0,
        gmres_iterations=info.gmres_iterations if info else 0,
        multiplier=state.multiplier,
        vertices=mesh.n_vertices,
    )
