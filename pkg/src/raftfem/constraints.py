"""Projection onto span{1, nu_1, nu_2, nu_3}^perp, the height solve and the secant controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CompatibilityError, GeometryError, PreconditionerError, StagnationError
from .femcore import space
from .linalg import gmres, ilu0


@dataclass(frozen=True)
class ConstraintBasis:
    """The constant field and the three normal components ``x_i / R``."""

    fields: np.ndarray  # (4, n)
    gram: np.ndarray  # (4, 4)
    mfields: np.ndarray  # M @ fields, (4, n)


def constraint_basis(mesh) -> ConstraintBasis:
    V = space(mesh)
    cached = getattr(V, "_constraint_basis", None)
    if cached is not None:
        return cached
    F = np.vstack([V.one, V.nu])
    MF = np.asarray((V.M @ F.T).T)
    G = F @ MF.T
    G = 0.5 * (G + G.T)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("constraint Gram matrix is not positive definite") from exc
    basis = ConstraintBasis(F, G, MF)
    V._constraint_basis = basis
    return basis


def project_V(mesh, f) -> np.ndarray:
    """L2(M)-orthogonal projection removing constants and normal components."""
    V = space(mesh)
    f = V.check(f)
    B = constraint_basis(mesh)
    c = np.linalg.solve(B.gram, B.mfields @ f)
    return f - c @ B.fields


def constraint_residuals(mesh, u) -> np.ndarray:
    """``<u, psi_k>_M`` for ``psi = (1, nu_1, nu_2, nu_3)``."""
    B = constraint_basis(mesh)
    return B.mfields @ np.asarray(u, dtype=float)


def _height_matrix(V, p):
    return ((p.sigma / p.kappa) * V.M + V.S).tocsr()


def gsolve(mesh, eta, p, rtol: float = 1e-10, atol: float = 1e-12, x0=None) -> np.ndarray:
    """Solve ``(sigma/kappa - Lap) v = Lambda eta`` in weak form.

    For ``sigma = 0`` the problem is singular; the load must integrate to
    zero and the mean-zero solution is returned (constant-vector deflation).
    """
    V = space(mesh)
    eta = V.check(eta, "eta")
    rhs = p.Lambda * (V.M @ eta)
    if not np.any(rhs):
        return np.zeros(V.n)
    A = _height_matrix(V, p)
    if p.sigma == 0:
        mass = abs(float(V.ml @ eta))
        if mass > 1e-8 * max(V.norm(eta), 1e-300) * np.sqrt(V.area):
            raise CompatibilityError(f"load integrates to {mass:.3e}; sigma = 0 needs a mean-zero load")
        rhs = rhs - V.one * (rhs.sum() / V.n)
        pre = ilu0(A + 1e-8 * V.M)
        v, _ = gmres(A, rhs, pre, rtol=rtol, atol=atol, x0=x0, deflate=V.one)
        return v - (V.ml @ v) / V.area
    try:
        pre = ilu0(A)
    except PreconditionerError:
        pre = None
    v, _ = gmres(A, rhs, pre, rtol=rtol, atol=atol, x0=x0)
    return v


def height_residual(mesh, v, eta, p) -> float:
    """Relative residual ``|(sigma/kappa) M v + S v - Lambda M eta| / |Lambda M eta|``."""
    V = space(mesh)
    rhs = p.Lambda * (V.M @ eta)
    r = _height_matrix(V, p) @ v - rhs
    return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))


# ---------------------------------------------------------------------------
# secant iteration on the mass multiplier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SecantState:
    lam_prev: float
    lam_curr: float
    m_prev: float
    m_curr: float
    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("secant iteration count starts at 1")
        if not (np.isfinite(self.m_prev) and np.isfinite(self.m_curr)):
            raise ValueError("masses must be finite")


def secant_seeds(p) -> tuple:
    """Initial multipliers ``(-b/eps, b/eps)``."""
    return (-p.b / p.eps, p.b / p.eps)


def secant_next(s: SecantState, target_mass: float):
    """One secant update of the multiplier toward ``m(lam) = target_mass``.

    Returns ``(lam_next, state)`` where ``state`` still lacks the mass at
    ``lam_next``; record it with :func:`secant_record`.
    """
    dm = s.m_curr - s.m_prev
    if abs(dm) < 1e-14 * (1.0 + abs(s.m_curr)):
        raise StagnationError(f"secant stagnated: masses {s.m_prev!r} and {s.m_curr!r} coincide")
    lam_next = s.lam_curr + (s.lam_curr - s.lam_prev) * (target_mass - s.m_curr) / dm
    return lam_next, s


def secant_record(s: SecantState, lam_next: float, m_next: float) -> SecantState:
    return SecantState(s.lam_curr, lam_next, s.m_curr, m_next, s.k + 1)
