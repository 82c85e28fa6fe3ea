"""Sparse Krylov solvers and the coupled phase/height block system.

Matrices are ``scipy.sparse`` CSR. GMRES is restarted, right
preconditioned and supports deflation of a known null space; ILU(0) keeps
the sparsity pattern of the input and is compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .errors import PreconditionerError, SolverError

DEFAULT_RESTART = 60
DEFAULT_MAXIT = 2000


@dataclass
class GMRESStats:
    iterations: int = 0
    residual: float = np.inf
    history: list = field(default_factory=list)
    converged: bool = False


# ---------------------------------------------------------------------------
# ILU(0)
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _ilu0_factor(indptr, indices, data, diag):
    n = len(indptr) - 1
    lu = data.copy()
    iw = -np.ones(n, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = p
        for p in range(indptr[i], diag[i]):
            k = indices[p]
            piv = lu[diag[k]]
            if piv == 0.0:
                return lu, k
            lu[p] /= piv
            lik = lu[p]
            for q in range(diag[k] + 1, indptr[k + 1]):
                w = iw[indices[q]]
                if w >= 0:
                    lu[w] -= lik * lu[q]
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = -1
        if lu[diag[i]] == 0.0:
            return lu, i
    return lu, -1


@numba.njit(cache=True)
def _ilu0_apply(indptr, indices, lu, diag, b):
    n = len(b)
    x = b.copy()
    for i in range(n):
        s = x[i]
        for p in range(indptr[i], diag[i]):
            s -= lu[p] * x[indices[p]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            s -= lu[p] * x[indices[p]]
        x[i] = s / lu[diag[i]]
    return x


class ILU0:
    """Incomplete LU factorisation restricted to the pattern of ``A``."""

    def __init__(self, A):
        A = sp.csr_matrix(A, dtype=float, copy=True)
        A.sum_duplicates()
        A.sort_indices()
        n = A.shape[0]
        if A.shape[0] != A.shape[1]:
            raise ValueError("ILU(0) needs a square matrix")
        indptr = A.indptr.astype(np.int64)
        indices = A.indices.astype(np.int64)
        diag = np.empty(n, dtype=np.int64)
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            k = lo + np.searchsorted(indices[lo:hi], i)
            if k >= hi or indices[k] != i:
                raise PreconditionerError(f"row {i} has no diagonal entry")
            diag[i] = k
        lu, bad = _ilu0_factor(indptr, indices, A.data.astype(float), diag)
        if bad >= 0 or not np.all(np.isfinite(lu)):
            raise PreconditionerError(f"zero pivot in ILU(0) at row {bad}")
        self.shape = A.shape
        self._indptr, self._indices, self._lu, self._diag = indptr, indices, lu, diag

    def solve(self, b):
        return _ilu0_apply(self._indptr, self._indices, self._lu, self._diag, np.ascontiguousarray(b, dtype=float))

    __call__ = solve

    def factors(self):
        """Dense ``(L, U)`` for inspection on small problems."""
        n = self.shape[0]
        F = sp.csr_matrix((self._lu, self._indices, self._indptr), shape=self.shape).toarray()
        L = np.tril(F, -1) + np.eye(n)
        U = np.triu(F)
        return L, U


def ilu0(A) -> ILU0:
    return ILU0(A)


# ---------------------------------------------------------------------------
# GMRES
# ---------------------------------------------------------------------------


def _deflator(vectors, n):
    if vectors is None:
        return None
    Z = np.atleast_2d(np.asarray(vectors, dtype=float))
    if Z.shape[1] != n:
        Z = Z.T
    Q, _ = np.linalg.qr(Z.T)

    def project(v):
        return v - Q @ (Q.T @ v)

    return project


def gmres(
    A,
    b,
    precond=None,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    restart: int = DEFAULT_RESTART,
    maxit: int = DEFAULT_MAXIT,
    x0=None,
    deflate=None,
    stall_cycles: int = 5,
):
    """Restarted, right-preconditioned GMRES.

    Stops when ``||b - A x|| <= max(rtol * ||b||, atol)``. ``deflate`` is an
    array of vectors spanning a null space of ``A``; the right-hand side,
    every Krylov direction and the solution are kept orthogonal to it, so a
    singular symmetric system with compatible ``b`` returns its minimum-norm
    solution. ``maxit`` counts inner iterations over all cycles. The solve
    gives up early when ``stall_cycles`` consecutive restart cycles together
    fail to halve the residual.

    Returns ``(x, GMRESStats)``; raises SolverError with the best iterate if
    the tolerance is not met.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    matvec = A.matvec if hasattr(A, "matvec") and not sp.issparse(A) else (lambda v: A @ v)
    apply_m = (lambda v: v) if precond is None else (precond.solve if hasattr(precond, "solve") else precond)
    proj = _deflator(deflate, n)
    if proj is not None:
        b = proj(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if proj is not None:
        x = proj(x)
    stats = GMRESStats()
    target = max(rtol * np.linalg.norm(b), atol)
    r = b - matvec(x)
    beta = np.linalg.norm(r)
    stats.history.append(beta)
    stats.residual = beta
    if beta <= target:
        stats.converged = True
        return x, stats
    while stats.iterations < maxit:
        m = min(restart, maxit - stats.iterations)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            z = apply_m(V[j])
            if proj is not None:
                z = proj(z)
            Z[j] = z
            w = matvec(z)
            # classical Gram-Schmidt with one reorthogonalisation pass
            h = V[: j + 1] @ w
            w = w - V[: j + 1].T @ h
            h2 = V[: j + 1] @ w
            w = w - V[: j + 1].T @ h2
            H[: j + 1, j] = h + h2
            hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if den == 0.0 else (H[j, j] / den, H[j + 1, j] / den)
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            stats.iterations += 1
            j_done = j + 1
            if abs(g[j + 1]) <= target or hnext == 0.0 or stats.iterations >= maxit:
                break
            V[j + 1] = w / hnext
        Hj = np.triu(H[:j_done, :j_done])
        if np.all(np.diag(Hj) != 0.0):
            y = solve_triangular(Hj, g[:j_done])
        else:
            y = np.linalg.lstsq(Hj, g[:j_done], rcond=None)[0]
        x = x + Z[:j_done].T @ y
        if proj is not None:
            x = proj(x)
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        stats.history.append(beta)
        stats.residual = beta
        if beta <= target:
            stats.converged = True
            return x, stats
        if j_done == 0:
            break
        h = stats.history
        if len(h) > stall_cycles and h[-1] > 0.5 * h[-1 - stall_cycles]:
            raise SolverError(
                f"GMRES stagnated: residual {beta:.3e} > {target:.3e} after {stats.iterations} iterations",
                x=x,
                residual=beta,
                iterations=stats.iterations,
            )
    raise SolverError(
        f"GMRES did not converge: residual {stats.residual:.3e} > {target:.3e} after {stats.iterations} iterations",
        x=x,
        residual=stats.residual,
        iterations=stats.iterations,
    )


def dense_solve(A, b):
    """Dense LU reference solve for small systems (test oracle)."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if A.shape[0] > 200:
        raise ValueError("dense reference solve limited to n <= 200")
    return np.linalg.solve(A, np.asarray(b, dtype=float))


# ---------------------------------------------------------------------------
# Coupled phase-field / height system
# ---------------------------------------------------------------------------


@dataclass
class BlockSystem:
    """Interleaved ``(phi_i, u_i)`` linear system for one time step.

    The multiplier enters only the load: ``rhs(lam) = load + lam * lam_load``.
    When ``bordered`` is set (zero surface tension) one extra unknown is
    appended that enforces ``int u = 0`` and absorbs the compatibility
    condition of the height equation.
    """

    matrix: sp.csr_matrix
    load: np.ndarray
    lam_load: np.ndarray
    n: int
    lam: float = 0.0
    bordered: bool = False

    @property
    def rhs(self) -> np.ndarray:
        return self.rhs_for(self.lam)

    def rhs_for(self, lam: float) -> np.ndarray:
        return self.load + lam * self.lam_load

    def split(self, x):
        """Return ``(phi, u)`` from an interleaved solution vector."""
        return x[0 : 2 * self.n : 2].copy(), x[1 : 2 * self.n : 2].copy()

    def join(self, phi, u):
        x = np.zeros(self.matrix.shape[0])
        x[0 : 2 * self.n : 2] = phi
        x[1 : 2 * self.n : 2] = u
        return x


def interleave(blocks, n, extra=None):
    """Assemble a k x k block matrix with per-vertex interleaved unknowns.

    ``blocks[a][b]`` are ``n x n`` sparse blocks (or None); unknown ``a`` of
    vertex ``i`` sits at index ``k * i + a``. ``extra`` adds one bordered
    row/column ``(column_vector, row_vector)`` acting on unknown 1; an
    explicit zero keeps the corner on the sparsity pattern.
    """
    k = len(blocks)
    rows, cols, vals = [], [], []
    for a in range(k):
        for b in range(k):
            B = blocks[a][b]
            if B is None:
                continue
            C = sp.coo_matrix(B)
            rows.append(k * C.row + a)
            cols.append(k * C.col + b)
            vals.append(C.data)
    size = k * n
    # keep every diagonal on the pattern so ILU(0) never sees a missing pivot
    rows.append(np.arange(size))
    cols.append(np.arange(size))
    vals.append(np.zeros(size))
    if extra is not None:
        col, row = extra
        idx = k * np.arange(n) + 1
        rows += [idx, np.full(n, size), [size]]
        cols += [np.full(n, size), idx, [size]]
        vals += [col, row, [0.0]]
        size += 1
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_block_system(mesh, phi_n, lam: float, tau: float, p, ops=None) -> BlockSystem:
    """Linear system of one linearised implicit step for trial multiplier ``lam``.

    Row blocks (``M`` consistent mass, ``S`` stiffness, ``D = diag(ml)``
    lumped mass for the potential terms):

    phi rows: ``(M/tau + b/eps D W''(phi_n) + b eps S + kappa Lambda^2 M) phi
    + (-kappa Lambda S + 2 kappa Lambda / R^2 M) u
    = M phi_n / tau - b/eps D W'(phi_n) + b/eps D W''(phi_n) phi_n
    + lam M 1 + kappa Lambda^2 alpha M 1``

    u rows: ``-Lambda M phi + (sigma/kappa M + S) u = -Lambda alpha M 1``
    """
    from .femcore import space
    from .physics import d2W, dW

    if tau <= 0:
        raise ValueError("time step must be positive")
    V = ops if ops is not None else space(mesh)
    phi_n = V.check(phi_n, "phi_n")
    n = V.n
    M, S, ml = V.M, V.S, V.ml
    k, L, R = p.kappa, p.Lambda, p.R
    w2 = (p.b / p.eps) * ml * d2W(phi_n)
    A_pp = M / tau + sp.diags(w2) + p.b * p.eps * S + (k * L * L) * M
    A_pu = -k * L * S + (2 * k * L / R**2) * M
    A_up = -L * M
    A_uu = (p.sigma / k) * M + S
    M1 = V.ml  # M @ 1
    load_phi = M @ phi_n / tau - (p.b / p.eps) * ml * dW(phi_n) + w2 * phi_n + k * L * L * p.alpha * M1
    load_u = -L * p.alpha * M1
    bordered = p.sigma == 0
    extra = (M1, M1) if bordered else None
    A = interleave([[A_pp, A_pu], [A_up, A_uu]], n, extra)
    size = A.shape[0]
    load = np.zeros(size)
    lam_load = np.zeros(size)
    load[0 : 2 * n : 2] = load_phi
    load[1 : 2 * n : 2] = load_u
    lam_load[0 : 2 * n : 2] = M1
    return BlockSystem(A, load, lam_load, n, lam=lam, bordered=bordered)
