import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raftfem.constraints import gsolve, project_V
from raftfem.errors import ModelError
from raftfem.femcore import space
from raftfem.geometry import build_octasphere
from raftfem.physics import (
    TERMS,
    Params,
    W,
    check_W_properties,
    coercivity_constants,
    d2W,
    dW,
    energy_full,
    energy_reduced,
    multiplier_lambda0,
    multiplier_lambda4,
    reduced_energy_compact,
    secant_multiplier_from_lambda0,
)


@pytest.fixture(scope="module")
def mesh():
    return build_octasphere(4)


@pytest.mark.parametrize("field,value", [("eps", -1.0), ("kappa", 0.0), ("alpha", 1.0), ("sigma", -1.0), ("R", np.nan)])
def test_params_validation_names_field(field, value):
    with pytest.raises(ValueError, match=field):
        Params(**{field: value})


def test_potential_values():
    assert W(1.0) == 0 and W(-1.0) == 0
    assert W(0.0) == 0.25
    assert dW(-0.5) == pytest.approx(0.375)
    assert d2W(-0.5) == pytest.approx(-0.25)


@given(st.floats(-3, 3))
def test_potential_derivatives_match_finite_differences(r):
    h = 1e-6
    assert dW(r) == pytest.approx((W(r + h) - W(r - h)) / (2 * h), abs=1e-6)
    assert d2W(r) == pytest.approx((dW(r + h) - dW(r - h)) / (2 * h), abs=1e-6)


def test_quartic_satisfies_structural_properties():
    rep = check_W_properties(np.linspace(-4, 4, 161))
    assert rep.ok
    # W'' >= -1, so the monotonicity constant is 1
    assert rep.c0 == pytest.approx(1.0, abs=0.02)


def test_non_coercive_potential_is_rejected():
    with pytest.raises(ModelError, match="quartic_lower_bound"):
        check_W_properties(np.linspace(-4, 4, 81), potential=lambda r: -np.asarray(r) ** 2, derivative=lambda r: -2 * np.asarray(r))


def test_constant_state_energy(mesh):
    p = Params()
    V = space(mesh)
    rep = energy_full(mesh, np.full(V.n, p.alpha), np.zeros(V.n), p)
    per_area = (p.b / p.eps) * W(p.alpha) + 0.5 * p.kappa * p.Lambda**2 * p.alpha**2
    assert rep.total == pytest.approx(V.area * per_area, rel=1e-13)
    # on the exact sphere this density gives 127.63
    assert 4 * np.pi * per_area == pytest.approx(127.627, abs=1e-3)
    assert list(rep.terms) == list(TERMS)
    for k in ("bending", "tension_gradient", "tension_mass", "coupling_laplacian", "coupling_mass", "line_gradient"):
        assert abs(rep[k]) < 1e-12


def test_reduced_energy_equals_full_energy_at_relaxed_height(mesh):
    p = Params()
    phi = np.tanh(np.random.default_rng(0).normal(size=mesh.n_vertices))
    rep, u = energy_reduced(mesh, phi, p, return_height=True)
    full = energy_full(mesh, phi, u, p)
    assert rep.total == pytest.approx(full.total, rel=1e-10)
    for k in TERMS:
        assert rep[k] == pytest.approx(full[k], rel=1e-7, abs=1e-9)


def test_compact_reduced_energy_is_close(mesh):
    p = Params()
    phi = np.tanh(4 * mesh.vertices[:, 2] ** 2 - 1)
    rep, u = energy_reduced(mesh, phi, p, return_height=True)
    assert reduced_energy_compact(mesh, phi, u, p) == pytest.approx(rep.total, rel=1e-3)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_energy_is_invariant_under_coupling_sign_flip(seed):
    mesh = build_octasphere(2)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(-1, 1, mesh.n_vertices)
    u = project_V(mesh, rng.normal(size=mesh.n_vertices))
    p = Params()
    e1 = energy_full(mesh, phi, u, p).total
    e2 = energy_full(mesh, phi, -u, p.with_(Lambda=-p.Lambda)).total
    assert e1 == pytest.approx(e2, rel=1e-13)


def test_multiplier_closed_forms():
    p = Params()
    mesh = build_octasphere(2)
    c = np.full(mesh.n_vertices, p.alpha)
    lam0 = multiplier_lambda0(mesh, c, p)
    assert lam0 == pytest.approx(-p.kappa * p.Lambda**2 * p.alpha - (p.b / p.eps) * dW(p.alpha))
    assert lam0 == pytest.approx(-6.25)
    assert multiplier_lambda4(p) == pytest.approx(5.0)
    assert secant_multiplier_from_lambda0(lam0, p) == pytest.approx(18.75)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 1000))
def test_coercivity_bound_on_constrained_fields(log_a, log_b, seed):
    mesh = build_octasphere(3)
    V = space(mesh)
    p = Params()
    C = coercivity_constants(p, V.area)
    rng = np.random.default_rng(seed)
    u = 10**log_a * project_V(mesh, rng.normal(size=V.n))
    phi = 10**log_b * rng.normal(size=V.n)
    lap = V.laplacian(u)
    h2 = V.inner(u, u) + u @ (V.S @ u) + V.inner(lap, lap)
    h1 = V.inner(phi, phi) + phi @ (V.S @ phi)
    assert energy_full(mesh, phi, u, p).total >= C.C1 * h2 + C.C2 * h1 - C.C3


def test_custom_height_solver_is_used(mesh):
    calls = []

    def solver(m, eta, p):
        calls.append(1)
        return gsolve(m, eta, p)

    energy_reduced(mesh, np.tanh(mesh.vertices[:, 0]), Params(), gsolve=solver)
    assert calls
