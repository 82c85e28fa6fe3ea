"""Time stepping: the reduced flow with the secant mass controller, the full
coupled flow, the adaptive step controller and the simulation driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .constraints import SecantState, project_V, secant_next, secant_record, secant_seeds
from .errors import PreconditionerError, SolverError, StagnationError, UsageError
from .femcore import space
from .geometry import SurfaceMesh, build_octasphere, mark_for_adaptation, refine_elements, transfer_field
from .linalg import assemble_block_system, gmres, ilu0, interleave
from .physics import Params, d2W, dW, multiplier_lambda0, multiplier_lambda4

log = logging.getLogger(__name__)


@dataclass
class SolverSettings:
    """Tolerances of the inner solvers and the step retry policy."""

    rtol: float = 1e-10
    atol: float = 1e-10
    restart: int = 60
    maxit: int = 2000
    secant_tol: float = 1e-8
    secant_maxit: int = 30
    max_retries: int = 5


@dataclass
class StepInfo:
    tau: float
    secant_iterations: int = 0
    lambdas: list = field(default_factory=list)
    masses: list = field(default_factory=list)
    gmres_iterations: int = 0
    retries: int = 0
    preconditioned: bool = True
    response: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class SimState:
    """Accepted state of a simulation."""

    mesh: SurfaceMesh
    phi: np.ndarray
    u: np.ndarray
    t: float = 0.0
    step: int = 0
    tau_last: float = 0.0
    multiplier: float = float("nan")
    info: Optional[StepInfo] = None
    # d(phi, u)/d(lambda) of the last secant solve, reused for warm starts
    response: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n = self.mesh.n_vertices
        if np.shape(self.phi) != (n,) or np.shape(self.u) != (n,):
            raise UsageError("state fields do not match the mesh")

    def with_(self, **changes) -> "SimState":
        return replace(self, **changes)


def _solve(A, b, pre, s: SolverSettings, x0=None):
    x, st = gmres(A, b, pre, rtol=s.rtol, atol=s.atol, restart=s.restart, maxit=s.maxit, x0=x0)
    return x, st.iterations


def _preconditioner(A):
    try:
        return ilu0(A)
    except PreconditionerError as exc:
        log.warning("ILU(0) failed (%s); solving unpreconditioned", exc)
        return None


# ---------------------------------------------------------------------------
# reduced flow
# ---------------------------------------------------------------------------


def _secant_step(state: SimState, tau: float, p: Params, s: SolverSettings):
    V = space(state.mesh)
    # alpha1 only rescales time: alpha1 (phi - phi_n)/tau
    system = assemble_block_system(state.mesh, state.phi, 0.0, tau / p.alpha1, p, ops=V)
    pre = _preconditioner(system.matrix)
    info = StepInfo(tau=tau, preconditioned=pre is not None)
    target = p.alpha * V.area

    x_old = system.join(state.phi, state.u)
    z = state.response if state.response is not None and state.response.shape == x_old.shape else None

    def solve(lam, *starts):
        b = system.rhs_for(lam)
        # start from the best guess; near a stationary state that is the previous time level
        res = [np.linalg.norm(b - system.matrix @ x0) for x0 in starts]
        x, its = _solve(system.matrix, b, pre, s, starts[int(np.argmin(res))])
        info.gmres_iterations += its
        phi, _ = system.split(x)
        m = float(V.ml @ phi)
        info.lambdas.append(lam)
        info.masses.append(m)
        return x, m

    l1, l2 = secant_seeds(p)
    if z is not None and np.isfinite(state.multiplier):
        x_prev, m1 = solve(l1, x_old, x_old + (l1 - state.multiplier) * z)
        x_curr, m2 = solve(l2, x_old, x_prev + (l2 - l1) * z)
    else:
        x_prev, m1 = solve(l1, x_old)
        x_curr, m2 = solve(l2, x_old, x_prev)
    response = (x_curr - x_prev) / (l2 - l1)
    sec = SecantState(l1, l2, m1, m2, k=2)
    while True:
        lam_next, _ = secant_next(sec, target)
        # the solution is affine in lam, so extrapolation is an excellent start
        w = (lam_next - sec.lam_curr) / (sec.lam_curr - sec.lam_prev)
        x_next, m_next = solve(lam_next, x_old, x_curr + w * (x_curr - x_prev))
        info.secant_iterations += 1
        done = abs(lam_next - sec.lam_curr) < s.secant_tol
        sec = secant_record(sec, lam_next, m_next)
        x_prev, x_curr = x_curr, x_next
        if done:
            break
        if info.secant_iterations >= s.secant_maxit:
            raise StagnationError(f"secant did not converge in {s.secant_maxit} iterations")
    info.response = response
    phi, u = system.split(x_curr)
    return phi, project_V(state.mesh, u), sec.lam_curr, info


def _with_retries(step_fn, state, tau, p, s):
    last = None
    for attempt in range(s.max_retries + 1):
        try:
            phi, u, lam, info = step_fn(state, tau, p, s)
            info.retries = attempt
            return state.with_(
                phi=phi,
                u=u,
                t=state.t + tau,
                step=state.step + 1,
                tau_last=tau,
                multiplier=lam,
                info=info,
                response=info.response,
            )
        except (StagnationError, SolverError) as exc:
            last = exc
            log.warning("step %d rejected at tau=%.3e (%s); halving", state.step + 1, tau, exc)
            tau *= 0.5
    raise SolverError(f"step failed after {s.max_retries} retries: {last}")


def reduced_step(state: SimState, tau: float, p: Params, solver: Optional[SolverSettings] = None) -> SimState:
    """One step of the reduced flow with the secant mass controller.

    Every secant iterate solves the coupled phase/height system; the
    accepted height is projected onto the constraint space. Rejected steps
    (stagnating secant or failed linear solve) are retried with half the
    step, at most ``max_retries`` times.
    """
    if tau <= 0:
        raise ValueError("time step must be positive")
    if p.alpha2 > 0:
        raise UsageError("reduced_step needs alpha2 = 0; use full_step")
    return _with_retries(_secant_step, state, tau, p, solver or SolverSettings())


# ---------------------------------------------------------------------------
# full coupled flow (alpha2 > 0)
# ---------------------------------------------------------------------------


def _full_step(state: SimState, tau: float, p: Params, s: SolverSettings):
    V = space(state.mesh)
    M, S, ml, n = V.M, V.S, V.ml, V.n
    k, L, R = p.kappa, p.Lambda, p.R
    phin, un = state.phi, state.u
    w2 = (p.b / p.eps) * ml * d2W(phin)
    lam0 = multiplier_lambda0(state.mesh, phin, p)
    lam4 = multiplier_lambda4(p)
    A = interleave(
        [
            [p.alpha1 * M / tau + sp.diags(w2) + p.b * p.eps * S + k * L * L * M, -k * L * S + (2 * k * L / R**2) * M, None],
            [-k * L * S + (2 * k * L / R**2) * M, p.alpha2 * M / tau + (p.sigma - 2 * k / R**2) * S - (2 * p.sigma / R**2) * M, -k * S],
            [None, S, M],
        ],
        n,
    )
    rhs = np.zeros(3 * n)
    rhs[0::3] = p.alpha1 * (M @ phin) / tau - (p.b / p.eps) * ml * dW(phin) + w2 * phin - lam0 * ml
    rhs[1::3] = p.alpha2 * (M @ un) / tau - lam4 * ml
    x0 = np.zeros(3 * n)
    x0[0::3], x0[1::3], x0[2::3] = phin, un, V.laplacian(un)
    pre = _preconditioner(A)
    x, its = _solve(A, rhs, pre, s, x0)
    phi, u = x[0::3], x[1::3]
    phi = phi + (p.alpha - float(ml @ phi) / V.area)
    info = StepInfo(tau=tau, gmres_iterations=its, preconditioned=pre is not None)
    return phi, project_V(state.mesh, u), lam0, info


def full_step(state: SimState, tau: float, p: Params, solver: Optional[SolverSettings] = None) -> SimState:
    """One semi-implicit step of the coupled flow of phase field and height.

    The bending term is split with the auxiliary field ``w = Lap_h u`` so
    only first-order operators are assembled. The multipliers of the mass
    and linearised volume constraints use their closed forms at the old
    state; the constraints are re-imposed on acceptance.
    """
    if p.alpha2 <= 0:
        raise UsageError("full_step needs alpha2 > 0")
    if tau <= 0:
        raise ValueError("time step must be positive")
    return _with_retries(_full_step, state, tau, p, solver or SolverSettings())


# ---------------------------------------------------------------------------
# step size control
# ---------------------------------------------------------------------------


@dataclass
class TimeControl:
    tau: float = 1e-2  # uniform step during phase separation
    t_sep: float = 1.0
    tau_min: float = 1e-4
    tau_max: float = 1e-1
    c_tau: float = 0.1  # largest phase change per step once adaptive
    adaptive: bool = True

    def __post_init__(self):
        if not 0 < self.tau_min <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.tau <= 0 or self.c_tau <= 0:
            raise ValueError("tau and c_tau must be positive")


def interface_speed(prev: SimState, curr: SimState) -> float:
    """``max |phi^n - phi^{n-1}| / tau^n``, the fastest normal interface speed."""
    if prev.mesh is not curr.mesh or curr.tau_last <= 0:
        raise UsageError("need two consecutive accepted states on one mesh")
    return float(np.max(np.abs(curr.phi - prev.phi))) / curr.tau_last


def adaptive_tau(state_prev: SimState, state_curr: SimState, tau_curr: float, bounds: TimeControl) -> float:
    """Next step, inversely proportional to the interface speed and clamped."""
    if not bounds.adaptive or state_curr.t < bounds.t_sep:
        return bounds.tau
    v = interface_speed(state_prev, state_curr)
    if v == 0:
        return bounds.tau_max
    return float(np.clip(bounds.c_tau / v, bounds.tau_min, bounds.tau_max))


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


_GOLD = (1 + 5**0.5) / 2
CAP_CENTERS = {
    1: _unit([[0, 0, 1]]),
    2: _unit([[0, 0, 1], [0, 0, -1]]),
    3: _unit([[np.cos(a), np.sin(a), 0] for a in 2 * np.pi * np.arange(3) / 3]),
    4: _unit([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]),
    6: _unit([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]),
    12: _unit([[0, s1, s2 * _GOLD] for s1 in (1, -1) for s2 in (1, -1)]
              + [[s1, s2 * _GOLD, 0] for s1 in (1, -1) for s2 in (1, -1)]
              + [[s2 * _GOLD, 0, s1] for s1 in (1, -1) for s2 in (1, -1)]),
}


def _cap_profile(mesh, centers, radius, eps):
    x = _unit(mesh.vertices)
    ang = np.arccos(np.clip(x @ centers.T, -1, 1)).min(axis=1)
    return np.tanh((radius - ang) * mesh.R / (np.sqrt(2) * eps))


def cap_initial(mesh: SurfaceMesh, n_caps: int, p: Params) -> np.ndarray:
    """``n_caps`` raft discs with tanh profiles, radius chosen so the mean is ``alpha``.

    The icosahedral pattern (12 caps) is the symmetric start used for the
    interface-width study.
    """
    if n_caps not in CAP_CENTERS:
        raise UsageError(f"cap count must be one of {sorted(CAP_CENTERS)}")
    V = space(mesh)
    c = CAP_CENTERS[n_caps]
    # cap radius must stay below half the nearest centre separation
    if n_caps > 1:
        sep = np.arccos(np.clip(c @ c.T, -1, 1))
        rmax = 0.5 * sep[~np.eye(n_caps, dtype=bool)].min()
    else:
        rmax = np.pi

    def mean_minus_alpha(r):
        return float(V.ml @ _cap_profile(mesh, c, r, p.eps)) / V.area - p.alpha

    lo, hi = 1e-6, rmax
    if mean_minus_alpha(lo) * mean_minus_alpha(hi) > 0:
        raise UsageError(f"{n_caps} caps cannot reach mean {p.alpha} at eps={p.eps}")
    r = brentq(mean_minus_alpha, lo, hi, xtol=1e-14)
    return _cap_profile(mesh, c, r, p.eps)


def random_initial(mesh: SurfaceMesh, p: Params, amplitude: float = 0.05, seed: int = 0) -> np.ndarray:
    """``alpha`` plus seeded mean-zero uniform noise of the given amplitude."""
    V = space(mesh)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-1.0, 1.0, V.n)
    noise -= float(V.ml @ noise) / V.area
    return p.alpha + amplitude * noise


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass
class AdaptSettings:
    enabled: bool = False
    extra_levels: int = 2
    mu: float = 0.05
    every: int = 10
    coarsen: bool = False
    theta: float = 0.1


@dataclass
class RunSettings:
    """Everything needed for one simulation."""

    params: Params = field(default_factory=Params)
    level: int = 4
    initial: str = "random"  # random | caps | constant
    n_caps: int = 2
    amplitude: float = 0.05
    seed: int = 0
    t_end: float = 10.0
    max_steps: int = 100000
    still_threshold: float = 1e-4
    still_steps: int = 50
    time: TimeControl = field(default_factory=TimeControl)
    adapt: AdaptSettings = field(default_factory=AdaptSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    diagnostics_every: int = 1
    keep_states: int = 0  # keep every k-th state in memory (0: only the last)


@dataclass
class RunResult:
    states: list
    records: list
    status: str = "ok"  # ok | stationary | failed
    error: Optional[str] = None

    @property
    def final(self) -> SimState:
        return self.states[-1]


def _initial_field(rs: RunSettings, mesh, base_phi=None, base_mesh=None):
    p = rs.params
    if rs.initial == "caps":
        return cap_initial(mesh, rs.n_caps, p)
    if rs.initial == "constant":
        return np.full(mesh.n_vertices, p.alpha)
    if rs.initial == "random":
        if base_phi is None:
            return random_initial(mesh, p, rs.amplitude, rs.seed)
        return transfer_field(base_mesh, mesh, base_phi)
    raise UsageError(f"unknown initial condition {rs.initial!r}")


def _max_level(rs: RunSettings) -> int:
    return rs.level + rs.adapt.extra_levels


def adapt_state(state: SimState, rs: RunSettings) -> SimState:
    """One refinement pass around the interface; fields follow by interpolation."""
    a = rs.adapt
    marks = mark_for_adaptation(
        state.mesh, state.phi, rs.params.eps, mu=a.mu, max_level=_max_level(rs),
        coarsen=a.coarsen, theta=a.theta, min_level=rs.level,
    )
    if not marks.refine and not marks.coarsen:
        return state
    mesh = refine_elements(state.mesh, marks, min_level=rs.level)
    phi = transfer_field(state.mesh, mesh, state.phi)
    u = project_V(mesh, transfer_field(state.mesh, mesh, state.u))
    return state.with_(mesh=mesh, phi=phi, u=u, response=None)


def initial_state(rs: RunSettings) -> SimState:
    base = build_octasphere(rs.level, rs.params.R)
    phi0 = _initial_field(rs, base)
    state = SimState(base, phi0, np.zeros(base.n_vertices))
    if rs.adapt.enabled:
        for _ in range(rs.adapt.extra_levels):
            refined = adapt_state(state, rs)
            if refined.mesh is state.mesh:
                break
            phi = _initial_field(rs, refined.mesh, phi0, base) if rs.initial != "random" else refined.phi
            state = refined.with_(phi=phi)
    return state


def run(rs: RunSettings, callback: Optional[Callable] = None) -> RunResult:
    """Integrate until ``t_end``, near-stationarity or failure.

    ``callback(state, record)`` is called after every diagnosed step, for
    example to stream output. The loop adapts the mesh every
    ``adapt.every`` steps, takes one (reduced or full) step, records
    diagnostics and picks the next step size.
    """
    from .analysis import diagnose

    p = rs.params
    stepper = full_step if p.alpha2 > 0 else reduced_step
    state = initial_state(rs)
    states = [state]
    records = [diagnose(state, p)]
    if callback:
        callback(state, records[-1])
    tau = rs.time.tau
    still = 0
    status, error = "ok", None
    while state.t < rs.t_end - 1e-12 and state.step < rs.max_steps:
        if rs.adapt.enabled and state.step > 0 and state.step % rs.adapt.every == 0:
            state = adapt_state(state, rs)
        step_tau = min(tau, rs.t_end - state.t)
        try:
            new = stepper(state, step_tau, p, rs.solver)
        except (SolverError, StagnationError) as exc:
            status, error = "failed", str(exc)
            log.error("run stopped at t=%.4g: %s", state.t, exc)
            break
        v = float(np.max(np.abs(new.phi - state.phi))) / new.tau_last
        if rs.diagnostics_every and new.step % rs.diagnostics_every == 0:
            rec = diagnose(new, p, v_max=v)
            records.append(rec)
            if callback:
                callback(new, rec)
        tau = adaptive_tau(state, new, new.tau_last, rs.time)
        if rs.keep_states and new.step % rs.keep_states == 0:
            states.append(new)
        state = new
        still = still + 1 if v < rs.still_threshold else 0
        if still >= rs.still_steps:
            status = "stationary"
            break
    if states[-1] is not state:
        states.append(state)
    return RunResult(states, records, status, error)
