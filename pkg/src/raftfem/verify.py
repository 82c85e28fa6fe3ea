"""Analytic self-checks of the discretisation on the sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .analysis import el_residual, poincare_check
from .constraints import project_V
from .dynamics import SimState, reduced_step
from .femcore import space
from .geometry import build_octasphere
from .physics import Params, check_W_properties


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{tag}] {self.name}: {self.value:.6g} (limit {self.limit:.6g}){extra}"


def normal_eigen_residuals(level: int, R: float = 1.0) -> dict:
    """Defect of the normal fields as eigenfunctions, ``S nu - (2/R^2) M nu``.

    Returns the worst component relative to ``|nu|_M`` in two dual norms:
    the lumped ``M^{-1}`` norm and the ``(S + M)^{-1}`` norm.
    """
    mesh = build_octasphere(level, R)
    V = space(mesh)
    lu = splu((V.S + V.M).tocsc())
    l2, h1 = [], []
    for nu in V.nu:
        r = V.S @ nu - (2 / R**2) * (V.M @ nu)
        scale = V.norm(nu)
        l2.append(V.dual_norm(r) / scale)
        h1.append(float(np.sqrt(max(r @ lu.solve(r), 0.0))) / scale)
    return {"l2": max(l2), "h1": max(h1), "h": float(np.sqrt(V.area / mesh.n_triangles))}


def smooth_random_field(mesh, rng, degree: int = 4) -> np.ndarray:
    """Random polynomial of the coordinates, restricted to the surface."""
    x = mesh.vertices / mesh.R
    f = np.zeros(mesh.n_vertices)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                f += rng.normal() * x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c
    return f


def run_checks(level: int = 4, R: float = 1.0, seed: int = 0, n_fields: int = 50) -> list:
    checks = []
    mesh = build_octasphere(level, R)
    V = space(mesh)
    if level == 4:
        checks.append(Check("base mesh vertex count", mesh.n_vertices == 1026, mesh.n_vertices, 1026))
    area_err = abs(V.area - 4 * np.pi * R**2) / (4 * np.pi * R**2)
    checks.append(Check("surface area vs 4 pi R^2", area_err <= 0.01, area_err, 0.01))
    G = V.nu @ (V.M @ V.nu.T)
    ref = 4 * np.pi * R**2 / 3
    g_err = float(np.abs(G - ref * np.eye(3)).max() / ref)
    checks.append(Check("normal-field Gram matrix vs (4 pi R^2/3) I", g_err <= 0.01, g_err, 0.01))

    e1 = normal_eigen_residuals(level, R)
    e2 = normal_eigen_residuals(level + 1, R)
    rate = e1["h1"] / e2["h1"]
    checks.append(
        Check(
            "normal eigen-residual, H^-1 dual norm",
            e1["h1"] <= 2e-2,
            e1["h1"],
            2e-2,
            f"lumped M^-1 norm {e1['l2']:.3g}",
        )
    )
    checks.append(Check("eigen-residual reduction per refinement (second order ~4)", rate >= 3.5, rate, 3.5))

    rng = np.random.default_rng(seed)
    worst1 = worst2 = 0.0
    for _ in range(n_fields):
        rep = poincare_check(mesh, project_V(mesh, smooth_random_field(mesh, rng)))
        worst1 = max(worst1, rep.ratio_l2_h1 / rep.bound_l2_h1)
        worst2 = max(worst2, rep.ratio_h1_h2 / rep.bound_h1_h2)
    checks.append(Check("Poincare ratio L2/H1 over projected fields", worst1 <= 1.05, worst1, 1.05, "relative to R^2/6"))
    checks.append(Check("Poincare ratio H1/H2 over projected fields", worst2 <= 1.05, worst2, 1.05, "relative to R^2/6"))
    bad = poincare_check(mesh, V.nu[0])
    checks.append(
        Check("unprojected normal field violates the L2/H1 bound", not bad.first_ok, bad.ratio_l2_h1 / bad.bound_l2_h1, 1.05)
    )

    rep = check_W_properties(np.linspace(-3, 3, 241), raise_on_failure=False)
    checks.append(Check("double-well structural properties", rep.ok, float(rep.ok), 1.0))

    p = Params()
    m3 = build_octasphere(min(level, 3), R)
    n3 = m3.n_vertices
    const = np.full(n3, p.alpha)
    s = SimState(m3, const, np.zeros(n3))
    for _ in range(20):
        s = reduced_step(s, 1e-2, p)
    drift = max(float(np.abs(s.phi - const).max()), float(np.abs(s.u).max()))
    checks.append(Check("constant state stationary over 20 steps", drift <= 1e-9, drift, 1e-9))
    r_phi, r_u = el_residual(m3, const, np.zeros(n3), p)
    checks.append(Check("stationarity residual of the constant state", max(r_phi, r_u) <= 1e-10, max(r_phi, r_u), 1e-10))
    return checks
