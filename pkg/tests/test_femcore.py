import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raftfem.errors import UsageError
from raftfem.femcore import assemble_mass, assemble_stiffness, integrate, lumped_mass, mean_value, space
from raftfem.geometry import build_octasphere


@pytest.fixture(scope="module")
def mesh():
    return build_octasphere(3)


def test_single_triangle_local_matrices():
    # an octahedron face: equilateral, side sqrt(2), area sqrt(3)/2
    mesh = build_octasphere(0)
    M = assemble_mass(mesh).toarray()
    S = assemble_stiffness(mesh).toarray()
    area = np.sqrt(3) / 2
    # every vertex touches four faces
    assert M[0, 0] == pytest.approx(4 * area / 6)
    # cot(60 deg)/2 per shared triangle, each edge shared by two faces
    cot = 1 / np.sqrt(3)
    i, j = mesh.triangles[0][:2]
    assert S[i, j] == pytest.approx(-2 * cot / 2)
    assert M[i, j] == pytest.approx(2 * area / 12)


def test_matrices_are_symmetric(mesh):
    M, S = assemble_mass(mesh), assemble_stiffness(mesh)
    assert abs(M - M.T).max() < 1e-15
    assert abs(S - S.T).max() < 1e-14


def test_stiffness_annihilates_constants(mesh):
    S = assemble_stiffness(mesh)
    assert np.abs(S @ np.ones(mesh.n_vertices)).max() < 1e-12


def test_mass_total_is_area(mesh):
    M = assemble_mass(mesh)
    one = np.ones(mesh.n_vertices)
    assert one @ M @ one == pytest.approx(mesh.areas().sum(), rel=1e-14)


def test_lumped_mass_row_sums(mesh):
    M = assemble_mass(mesh)
    ml = lumped_mass(M)
    assert ml.sum() == pytest.approx(M.sum(), rel=1e-14)
    # single face: each vertex gets a third of the area
    m0 = build_octasphere(0)
    assert lumped_mass(assemble_mass(m0))[0] == pytest.approx(4 * (np.sqrt(3) / 2) / 3)


def test_lumped_and_consistent_integrals_agree_for_p1_fields(mesh):
    V = space(mesh)
    f = 1.0 + mesh.vertices @ np.array([0.3, -0.2, 0.7])
    assert V.ml @ f == pytest.approx(V.one @ (V.M @ f), rel=1e-14)
    assert mean_value(mesh, f) == pytest.approx(integrate(mesh, f) / V.area)


def test_space_is_cached(mesh):
    assert space(mesh) is space(mesh)


def test_shape_is_checked(mesh):
    with pytest.raises(UsageError):
        integrate(mesh, np.ones(3))


def test_gram_of_normals_is_near_a_third_of_the_area():
    mesh = build_octasphere(4)
    V = space(mesh)
    G = V.nu @ (V.M @ V.nu.T)
    assert np.abs(G - 4 * np.pi / 3 * np.eye(3)).max() < 0.01 * 4 * np.pi / 3


def test_discrete_laplacian_of_constant_vanishes(mesh):
    V = space(mesh)
    assert np.abs(V.laplacian(np.ones(V.n))).max() < 1e-10
    assert np.abs(V.laplacian(np.ones(V.n), lumped=True)).max() < 1e-10


def test_dual_norms():
    V = space(build_octasphere(2))
    r = V.M @ np.ones(V.n)
    # M^-1-weighted norm of M 1 is |1|_M = sqrt(area)
    assert V.dual_norm(r, lumped=False) == pytest.approx(np.sqrt(V.area), rel=1e-12)
    assert V.dual_norm(r, lumped=True) == pytest.approx(np.sqrt(V.area), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-3, 3))
def test_stiffness_is_positive_semidefinite_on_linear_fields(coef, shift):
    mesh = build_octasphere(2)
    V = space(mesh)
    f = shift + mesh.vertices @ np.array(coef)
    assert f @ (V.S @ f) >= -1e-12


def test_dropped_meshes_release_their_spaces():
    import gc
    import weakref

    m = build_octasphere(2)
    ref = weakref.ref(space(m))
    del m
    gc.collect()
    assert ref() is None
