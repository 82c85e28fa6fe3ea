"""Model parameters, the double-well potential and the membrane energies.

The energy of a phase field ``phi`` and a normal height perturbation ``u``
on the sphere of radius ``R`` is

    E(phi, u) = int kappa/2 (Lap u)^2 + 1/2 (sigma - 2 kappa/R^2) |grad u|^2
                - sigma u^2 / R^2 + kappa Lambda phi Lap u
                + 2 kappa Lambda u phi / R^2 + b eps/2 |grad phi|^2
                + b/eps W(phi) + kappa Lambda^2 phi^2 / 2.

Discretely, ``Lap u`` is the consistent-mass mixed Laplacian
``-M^{-1} S u``, mixed products such as ``int phi Lap u`` use the weak
form ``-phi^T S u`` and the potential is integrated with vertex (lumped)
quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ModelError, UsageError
from .femcore import space


@dataclass(frozen=True)
class Params:
    """Physical constants of the model.

    ``alpha2 = 0`` selects the reduced flow in which the height is slaved to
    the phase field. ``alpha1`` only rescales time.
    """

    kappa: float = 1.0
    sigma: float = 1.0
    b: float = 1.0
    eps: float = 0.02
    Lambda: float = 5.0
    R: float = 1.0
    alpha: float = -0.5
    alpha1: float = 1.0
    alpha2: float = 0.0
    rho_vis: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "b", "eps", "R", "alpha1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("sigma", "alpha2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if not -1 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (-1, 1), got {self.alpha!r}")
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    def with_(self, **changes) -> "Params":
        return replace(self, **changes)


def W(r):
    """Quartic double well ``(r^2 - 1)^2 / 4``."""
    r = np.asarray(r, dtype=float)
    return 0.25 * (r * r - 1.0) ** 2


def dW(r):
    r = np.asarray(r, dtype=float)
    return r**3 - r


def d2W(r):
    r = np.asarray(r, dtype=float)
    return 3.0 * r * r - 1.0


# ---------------------------------------------------------------------------
# structural properties of the potential
# ---------------------------------------------------------------------------


@dataclass
class WPropertyReport:
    c0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    passed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def check_W_properties(
    samples,
    potential=W,
    derivative=dW,
    c1: float = 1.0 / 8.0,
    c2: float = 1.0,
    c3: float = 1.0,
    c5: float = 1.0,
    raise_on_failure: bool = True,
) -> WPropertyReport:
    """Check the growth and monotonicity assumptions on sample points.

    Verified properties, with ``c0`` and ``c4`` fitted from the samples and
    the other constants declared:

    * ``(W'(r) - W'(s))(r - s) >= -c0 |r - s|^2``
    * ``c1 r^4 - c2 <= W(r)``
    * ``W'(r) <= c3 W(r) + c4``
    * ``W'(r) r >= -c5 r^2``
    """
    r = np.asarray(samples, dtype=float).ravel()
    Wr, dWr = potential(r), derivative(r)
    rr, ss = np.meshgrid(r, r)
    dr = rr - ss
    off = dr != 0
    slopes = (derivative(rr) - derivative(ss))[off] / dr[off]
    c0 = max(0.0, -float(slopes.min())) if slopes.size else 0.0
    c4 = max(0.0, float(np.max(dWr - c3 * Wr)))
    nz = r != 0
    c5_fit = max(0.0, float(np.max(-dWr[nz] / r[nz]))) if nz.any() else 0.0
    tol = 1e-12
    passed = {
        "monotonicity": bool(np.isfinite(c0)),
        "quartic_lower_bound": bool(np.all(c1 * r**4 - c2 <= Wr + tol)),
        "growth": bool(np.isfinite(c4)),
        "sign": bool(c5_fit <= c5 + tol),
    }
    report = WPropertyReport(c0, c1, c2, c3, c4, c5_fit, passed)
    if raise_on_failure and not report.ok:
        bad = [k for k, v in passed.items() if not v]
        raise ModelError(f"potential violates: {', '.join(bad)}")
    return report


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

TERMS = (
    "bending",
    "tension_gradient",
    "tension_mass",
    "coupling_laplacian",
    "coupling_mass",
    "line_gradient",
    "line_potential",
    "curvature_phase",
)


@dataclass
class EnergyReport:
    total: float
    terms: dict

    def __getitem__(self, key):
        return self.terms[key]


def _phase_terms(V, phi, p):
    return {
        "line_gradient": 0.5 * p.b * p.eps * float(phi @ (V.S @ phi)),
        "line_potential": (p.b / p.eps) * float(V.ml @ W(phi)),
        "curvature_phase": 0.5 * p.kappa * p.Lambda**2 * float(phi @ (V.M @ phi)),
    }


def _height_terms(V, phi, u, lap_u, p):
    k, L, R = p.kappa, p.Lambda, p.R
    Su = V.S @ u
    Mu = V.M @ u
    return {
        "bending": 0.5 * k * float(lap_u @ (V.M @ lap_u)),
        "tension_gradient": 0.5 * (p.sigma - 2 * k / R**2) * float(u @ Su),
        "tension_mass": -(p.sigma / R**2) * float(u @ Mu),
        "coupling_laplacian": -k * L * float(phi @ Su),
        "coupling_mass": 2 * k * L / R**2 * float(phi @ Mu),
    }


def _report(terms):
    ordered = {k: terms[k] for k in TERMS}
    return EnergyReport(float(sum(ordered.values())), ordered)


def energy_full(mesh, phi, u, p: Params) -> EnergyReport:
    """Discrete energy of ``(phi, u)`` with a per-term breakdown."""
    V = space(mesh)
    phi = V.check(phi, "phi")
    u = V.check(u, "u")
    terms = _phase_terms(V, phi, p)
    terms.update(_height_terms(V, phi, u, V.laplacian(u), p))
    return _report(terms)


def energy_reduced(mesh, phi, p: Params, gsolve=None, return_height: bool = False):
    """Energy of ``phi`` with the height relaxed to ``u = G(P phi)``.

    The Laplacian of the relaxed height is taken from the defining equation
    of ``G``, ``Lap u = sigma/kappa u - Lambda P phi``, so no discrete
    Laplacian is applied to ``u``. The result equals
    ``energy_full(phi, G(P phi))`` up to the linear solver tolerance.
    """
    from .constraints import gsolve as default_gsolve
    from .constraints import project_V

    V = space(mesh)
    phi = V.check(phi, "phi")
    solve = gsolve or default_gsolve
    Pphi = project_V(mesh, phi)
    u = solve(mesh, Pphi, p)
    lap_u = (p.sigma / p.kappa) * u - p.Lambda * Pphi
    terms = _phase_terms(V, phi, p)
    terms.update(_height_terms(V, phi, u, lap_u, p))
    rep = _report(terms)
    return (rep, u) if return_height else rep


def reduced_energy_compact(mesh, phi, u, p: Params) -> float:
    """Closed reduced form ``int kappa Lambda/2 P phi (Lap + 2/R^2) u + phase terms``.

    Equal to ``energy_reduced`` in the continuum; on the polyhedral mesh the
    two differ by the (small) defect of the discrete normal fields as
    Laplace-Beltrami eigenfunctions.
    """
    from .constraints import project_V

    V = space(mesh)
    Pphi = project_V(mesh, phi)
    k, L = p.kappa, p.Lambda
    coupling = 0.5 * k * L * (-float(Pphi @ (V.S @ u)) + 2 / p.R**2 * float(Pphi @ (V.M @ u)))
    return coupling + sum(_phase_terms(V, np.asarray(phi, float), p).values())


# ---------------------------------------------------------------------------
# Lagrange multipliers
# ---------------------------------------------------------------------------


def multiplier_lambda0(mesh, phi, p: Params) -> float:
    """Multiplier of the mass constraint, ``-kappa Lambda^2 alpha - b/eps mean(W'(phi))``."""
    V = space(mesh)
    phi = V.check(phi, "phi")
    mean_dw = float(V.ml @ dW(phi)) / V.area
    return -p.kappa * p.Lambda**2 * p.alpha - (p.b / p.eps) * mean_dw


def multiplier_lambda4(p: Params) -> float:
    """Multiplier of the linearised volume constraint, ``-2 kappa Lambda alpha / R^2``."""
    return -2.0 * p.kappa * p.Lambda * p.alpha / p.R**2


def secant_multiplier_from_lambda0(lambda0: float, p: Params) -> float:
    """Converged secant multiplier implied by ``lambda0`` at a stationary state.

    The scheme writes the curvature term as ``kappa Lambda^2 (phi - alpha)``
    and the multiplier with a minus sign, so ``lam = -lambda0 - kappa Lambda^2 alpha``.
    """
    return -lambda0 - p.kappa * p.Lambda**2 * p.alpha


# ---------------------------------------------------------------------------
# coercivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoercivityConstants:
    C1: float
    C2: float
    C3: float


def coercivity_constants(p: Params, area: float, c1: float = 1.0 / 8.0, c2: float = 1.0) -> CoercivityConstants:
    """Constants with ``E >= C1 |u|_{H2}^2 + C2 |phi|_{H1}^2 - C3`` on the constraint set.

    Built from the Poincare constants ``R^2/6`` and ``R^4/36``: on the
    constrained space ``(Lap u)^2`` controls ``|grad u|^2`` and ``u^2``, the
    height quadratic keeps a third of the bending term after absorbing the
    coupling with Young's inequality, and the quartic bound on ``W`` buys
    the ``phi^2`` control lost to that absorption.
    """
    k, L, R = p.kappa, p.Lambda, p.R
    C1 = (k / 6.0) / (1.0 + R**2 / 6.0 + R**4 / 36.0)
    K = 2.0 * k * L**2 + 1.0
    C2 = min(p.b * p.eps / 2.0, k * L**2 + 1.0)
    C3 = area * (p.b * c2 / p.eps + K**2 * p.eps / (4.0 * p.b * c1))
    return CoercivityConstants(C1, C2, C3)


def check_fields(mesh, *arrays):
    V = space(mesh)
    for a in arrays:
        if np.shape(a) != (V.n,):
            raise UsageError("field does not belong to this mesh")
