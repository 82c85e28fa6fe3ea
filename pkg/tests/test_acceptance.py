"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Criteria 8 and 9 are long runs and only execute with ``pytest --extended``.
"""

import time

import numpy as np
import pytest

from raftfem.analysis import el_residual, poincare_check
from raftfem.cli import main
from raftfem.config import default_config
from raftfem.constraints import project_V
from raftfem.dynamics import AdaptSettings, RunSettings, SimState, TimeControl, reduced_step, run
from raftfem.femcore import space
from raftfem.geometry import build_octasphere
from raftfem.physics import Params, multiplier_lambda0, secant_multiplier_from_lambda0
from raftfem.verify import normal_eigen_residuals, smooth_random_field

FOUR_PI = 4 * np.pi


def fixed_step_run(params, level, steps, tau, seed=0, callback=None, keep_states=0):
    rs = RunSettings(
        params=params,
        level=level,
        seed=seed,
        t_end=1e9,
        max_steps=steps,
        still_steps=10**9,
        time=TimeControl(tau=tau, adaptive=False),
        adapt=AdaptSettings(enabled=False),
        keep_states=keep_states,
    )
    return run(rs, callback)


def test_criterion_01_mesh_identity(report, capsys):
    t0 = time.perf_counter()
    mesh = build_octasphere(4, 1.0)
    elapsed = time.perf_counter() - t0
    assert main(["mesh-info", "--levels", "4"]) == 0
    out = capsys.readouterr().out
    ok = mesh.n_vertices == 1026 and "vertices         1026" in out and elapsed < 1.0
    with capsys.disabled():
        report(1, "base mesh identity", ok, f"vertices={mesh.n_vertices} build={elapsed:.3f}s")
    assert ok


def test_criterion_02_sphere_identities(report, capsys):
    t0 = time.perf_counter()
    mesh = build_octasphere(4, 1.0)
    V = space(mesh)
    area_err = abs(V.area - FOUR_PI) / FOUR_PI
    G = V.nu @ (V.M @ V.nu.T)
    gram_err = float(np.abs(G - FOUR_PI / 3 * np.eye(3)).max() / (FOUR_PI / 3))
    e4 = normal_eigen_residuals(4)
    e5 = normal_eigen_residuals(5)
    elapsed = time.perf_counter() - t0
    rate = e4["l2"] / e5["l2"]
    # x4 per refinement is second order; 3.5 leaves room for pre-asymptotic deviation
    parts = {
        "area": area_err <= 0.01,
        "gram": gram_err <= 0.01,
        "eigen": e4["l2"] <= 2e-2,
        "rate": rate >= 3.5,
        "time": elapsed < 10,
    }
    ok = all(parts.values())
    detail = (
        f"area={area_err:.2e} gram={gram_err:.2e} eigen(M^-1)={e4['l2']:.3g} rate={rate:.2f} "
        f"[H^-1 norm: {e4['h1']:.3g}, rate {e4['h1'] / e5['h1']:.2f}] failing={[k for k, v in parts.items() if not v]}"
    )
    with capsys.disabled():
        report(2, "analytic sphere identities", ok, detail)
    assert ok, detail


def test_criterion_03_constant_state(report, capsys):
    p = Params()
    mesh = build_octasphere(3)
    c = np.full(mesh.n_vertices, p.alpha)
    s = SimState(mesh, c, np.zeros(mesh.n_vertices))
    t0 = time.perf_counter()
    for _ in range(100):
        s = reduced_step(s, 1e-2, p)
    elapsed = time.perf_counter() - t0
    dphi = abs(np.abs(s.phi).max() - np.abs(c).max())
    du = float(np.abs(s.u).max())
    ok = dphi <= 1e-9 and du <= 1e-9 and elapsed < 30
    with capsys.disabled():
        report(3, "constant-state stationarity", ok, f"d|phi|inf={dphi:.1e} |u|inf={du:.1e} time={elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def random_run():
    """200 steps from random data at level 3, eps = 0.08, tau = 1e-3."""
    p = Params(eps=0.08)
    poincare_bad = []

    def check(state, rec):
        if np.any(state.u):
            rep = poincare_check(state.mesh, state.u)
            if not rep.ok:
                poincare_bad.append(state.step)

    t0 = time.perf_counter()
    res = fixed_step_run(p, 3, 200, 1e-3, callback=check, keep_states=1)
    return res, p, poincare_bad, time.perf_counter() - t0


def test_criterion_04_constraint_conservation(random_run, report, capsys):
    res, p, poincare_bad, elapsed = random_run
    recs = res.records[1:]
    mass = max(abs(r.mass_residual) for r in recs)
    ucon = max(r.u_constraint for r in recs)
    ok = res.status == "ok" and len(recs) == 200 and mass <= 1e-8 and ucon <= 1e-8 and not poincare_bad and elapsed < 180
    detail = f"steps={len(recs)} max|mean-alpha|={mass:.1e} max|<u,psi>|/|u|={ucon:.1e} poincare_fail={len(poincare_bad)} time={elapsed:.1f}s"
    with capsys.disabled():
        report(4, "constraint conservation", ok, detail)
    assert ok, detail


def test_criterion_05_secant_affinity(random_run, report, capsys):
    res, p, _, _ = random_run
    worst_iters, worst_dlam, worst_affine = 0, 0.0, 0.0
    for s in res.states[1:]:
        info = s.info
        worst_iters = max(worst_iters, info.secant_iterations)
        lam = np.asarray(info.lambdas)
        m = np.asarray(info.masses)
        worst_dlam = max(worst_dlam, abs(lam[-1] - lam[-2]))
        # the mass response is affine in lambda: a line through all iterates
        A = np.column_stack([lam, np.ones_like(lam)])
        coef, *_ = np.linalg.lstsq(A, m, rcond=None)
        worst_affine = max(worst_affine, float(np.abs(A @ coef - m).max()) / (1 + np.abs(m).max()))
    ok = len(res.states) == 201 and worst_iters <= 5 and worst_dlam < 1e-8 and worst_affine < 1e-8
    detail = f"max secant iterations={worst_iters} max|dlambda|={worst_dlam:.1e} affine defect={worst_affine:.1e}"
    with capsys.disabled():
        report(5, "secant affinity", ok, detail)
    assert ok, detail


def test_criterion_06_energy_dissipation(random_run, report, capsys):
    res, p, _, _ = random_run
    E = np.array([r.energy for r in res.records])
    rise = np.diff(E) - 1e-8 * (1 + np.abs(E[:-1]))
    worst_rise = float(np.max(np.diff(E)))
    mismatch = max(r.energy_mismatch / (1 + abs(r.energy)) for r in res.records)
    ok = bool(np.all(rise <= 0)) and mismatch <= 1e-8
    detail = f"max dE={worst_rise:.2e} E: {E[0]:.6f} -> {E[-1]:.6f} max rel |E_red-E_full|={mismatch:.1e}"
    with capsys.disabled():
        report(6, "energy dissipation", ok, detail)
    assert ok, detail


def test_criterion_07_lambda_sign_symmetry(report, capsys):
    p = Params()
    t0 = time.perf_counter()
    plus = fixed_step_run(p, 3, 100, 1e-2, seed=3, keep_states=1)
    minus = fixed_step_run(p.with_(Lambda=-p.Lambda), 3, 100, 1e-2, seed=3, keep_states=1)
    elapsed = time.perf_counter() - t0
    Ep = np.array([r.energy for r in plus.records])
    Em = np.array([r.energy for r in minus.records])
    e_rel = float(np.max(np.abs(Ep - Em) / np.abs(Ep)))
    u_dev = max(float(np.abs(a.u + b.u).max() / max(np.abs(a.u).max(), 1e-300)) for a, b in zip(plus.states[1:], minus.states[1:]))
    ok = len(Ep) == len(Em) == 101 and e_rel <= 1e-6 and u_dev <= 1e-6 and elapsed < 300
    detail = f"max rel energy diff={e_rel:.1e} max |u+ + u-|/|u+|={u_dev:.1e} rafts={plus.records[-1].rafts} time={elapsed:.1f}s"
    with capsys.disabled():
        report(7, "Lambda sign symmetry", ok, detail)
    assert ok, detail


def trend_run(**changes):
    p = Params(eps=0.04).with_(**changes)
    rs = RunSettings(
        params=p,
        level=4,
        t_end=1000.0,
        adapt=AdaptSettings(enabled=True, extra_levels=2),
        time=TimeControl(),
    )
    res = run(rs)
    return res.records[-1].rafts, res


@pytest.mark.extended
def test_criterion_08_trends(report, capsys):
    sweeps = {
        "Lambda": ((0.0, 0.5, 5.0), +1),
        "b": ((0.2, 1.0, 2.5), -1),
        "sigma": ((0.0, 1.0, 10.0), +1),
        "kappa": ((0.1, 1.0, 10.0), +1),
    }
    base = Params()
    cache = {}
    counts, bad = {}, []
    for name, (values, direction) in sweeps.items():
        row = []
        for v in values:
            key = tuple(sorted({"Lambda": base.Lambda, "b": base.b, "sigma": base.sigma, "kappa": base.kappa, name: v}.items()))
            if key not in cache:
                cache[key] = trend_run(**{name: v})
            rafts, res = cache[key]
            row.append(rafts)
            if res.status == "failed":
                bad.append(f"{name}={v} failed")
        counts[name] = row
        steps = np.diff(row) * direction
        if np.any(steps < 0):
            bad.append(f"{name} not monotone")
    ok = not bad
    detail = " ".join(f"{k}:{v}" for k, v in counts.items()) + (f" problems={bad}" if bad else "")
    with capsys.disabled():
        report(8, "parameter trends", ok, detail)
    assert ok, detail


@pytest.mark.extended
def test_criterion_09_full_scale_base_case(report, capsys):
    cfg = default_config()
    rs = cfg.run
    rs.t_end = 1000.0
    prev = {}
    violations = []

    def check(state, rec):
        if abs(rec.mass_residual) > 1e-8 or rec.u_constraint > 1e-8:
            violations.append(f"constraint at step {rec.step}")
        # energy may only rise across a remesh, which changes the discrete space
        if prev.get("mesh") is state.mesh and rec.energy > prev["E"] + 1e-8 * (1 + abs(prev["E"])):
            violations.append(f"energy rise at step {rec.step}")
        prev.update(mesh=state.mesh, E=rec.energy)

    res = run(rs, check)
    rec = res.records[-1]
    count_ok = abs(rec.rafts - 12) <= 2
    energy_ok = abs(rec.energy - 66.9928) <= 0.05 * 66.9928
    hard_ok = res.status != "failed" and not violations
    detail = (
        f"status={res.status} t={rec.t:.1f} vertices={rec.vertices} rafts={rec.rafts} (12+-2: {count_ok}) "
        f"energy={rec.energy:.4f} (66.9928+-5%: {energy_ok}) violations={violations[:3]}"
    )
    with capsys.disabled():
        report(9, "full-scale base case", hard_ok and count_ok and energy_ok, detail)
    # the raft count and energy are a soft regression target; only the run's
    # internal consistency fails the suite
    assert hard_ok, detail


def test_criterion_10_poincare(report, capsys):
    mesh = build_octasphere(4)
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst1 = worst2 = 0.0
    for _ in range(50):
        rep = poincare_check(mesh, project_V(mesh, smooth_random_field(mesh, rng)))
        worst1 = max(worst1, rep.ratio_l2_h1 / rep.bound_l2_h1)
        worst2 = max(worst2, rep.ratio_h1_h2 / rep.bound_h1_h2)
    nu_rep = poincare_check(mesh, space(mesh).nu[0])
    elapsed = time.perf_counter() - t0
    ok = worst1 <= 1.05 and worst2 <= 1.05 and not nu_rep.ok and elapsed < 10
    detail = (
        f"worst ratios/bound={worst1:.3f},{worst2:.3f} nu1 ratio/bound={nu_rep.ratio_l2_h1 / nu_rep.bound_l2_h1:.2f} "
        f"(rejected={not nu_rep.ok}) time={elapsed:.1f}s"
    )
    with capsys.disabled():
        report(10, "Poincare property", ok, detail)
    assert ok, detail


def test_criterion_11_stationarity_certificate(report, capsys):
    # antipodal rafts with strong coupling to tension, run until the phase is still
    p = Params(eps=0.08, Lambda=2.0, sigma=10.0)
    rs = RunSettings(
        params=p,
        level=3,
        initial="caps",
        n_caps=2,
        t_end=1e4,
        still_threshold=1e-6,
        still_steps=20,
        time=TimeControl(t_sep=0.0),
        adapt=AdaptSettings(enabled=False),
    )
    t0 = time.perf_counter()
    res = run(rs)
    elapsed = time.perf_counter() - t0
    s = res.final
    el = el_residual(s.mesh, s.phi, s.u, p)
    lam0 = multiplier_lambda0(s.mesh, s.phi, p)
    sign_dev = abs(s.multiplier - secant_multiplier_from_lambda0(lam0, p))
    ok = res.status == "stationary" and el.r_phi <= 1e-4 and el.r_u <= 1e-4 and sign_dev <= 1e-6
    detail = (
        f"status={res.status} t={s.t:.1f} steps={s.step} r_phi={el.r_phi:.1e} r_u={el.r_u:.1e} "
        f"lambda={s.multiplier:.6f} |lambda-(-lambda0-kappa Lambda^2 alpha)|={sign_dev:.1e} time={elapsed:.1f}s"
    )
    with capsys.disabled():
        report(11, "stationarity certificate", ok, detail)
    assert ok, detail
