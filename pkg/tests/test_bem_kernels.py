"""
Unit tests for bem_kernels module
"""

import pytest
import numpy as np
import scipy.linalg
from pathlib import Path
import sys

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from bem_kernels import (assemble_boundary_operator, assemble_boundary_operators, assemble_identity,
                         evaluate_potentials, green, near_surface_mask, project_samples, surface_quadrature)
from errors import GeometryError, SpacePairingError
from mesh import build_cube_mesh, build_icosphere
from oracles import point_source_field
from spaces import SpaceKind, p0, p1, volume


@pytest.fixture(scope="module")
def sphere():
    """Unit icosphere surface, 2 refinements"""
    return build_icosphere(2).surface(1)


@pytest.fixture(scope="module")
def laplace_ops(sphere):
    """Laplace V, K, T, D on P1 x P1"""
    return assemble_boundary_operators(("V", "K", "T", "D"), sphere, 0.0, p1(1), p1(1))


def test_green_function_value():
    """Test G(x, y) = exp(ikr) / (4 pi r)"""
    value = green(np.array([0.0, 0.0, 0.0]), np.array([0.0, 0.0, 2.0]), 1.5)
    assert value == pytest.approx(np.exp(3j) / (8 * np.pi))


def test_green_coincident_points_raise():
    """Test coincident points raise GeometryError"""
    with pytest.raises(GeometryError):
        green(np.zeros(3), np.zeros(3), 1.0)


def test_block_shapes(sphere):
    """Test rows follow the test space and columns the trial space"""
    ops = assemble_boundary_operators(("V", "K"), sphere, 1.0, p1(1), p0(1))
    assert ops["V"].shape == (sphere.n_triangles, sphere.n_nodes)
    assert ops["K"].domain == p1(1)
    assert ops["K"].range == p0(1)


def test_single_layer_symmetric(laplace_ops):
    """Test V on matching spaces is symmetric"""
    V = laplace_ops["V"].matrix
    np.testing.assert_allclose(V, V.T, atol=1e-14)


def test_laplace_single_layer_of_constant(sphere):
    """Test <1, V 1> is close to the surface area on the unit sphere"""
    V = assemble_boundary_operator("V", sphere, 0.0, p0(1), p0(1)).matrix
    assert (np.ones(sphere.n_triangles) @ V @ np.ones(sphere.n_triangles)).real / sphere.total_area == \
        pytest.approx(1.0, rel=0.05)


def test_gauss_double_layer_identity(sphere, laplace_ops):
    """Test the Laplace double layer of 1 equals -1/2 on a closed surface"""
    ones = np.ones(sphere.n_nodes)
    total = (ones @ laplace_ops["K"].matrix @ ones).real
    assert total / sphere.total_area == pytest.approx(-0.5, rel=0.02)


def test_adjoint_double_layer_is_transpose(laplace_ops):
    """Test T approximates the transpose of K"""
    K, T = laplace_ops["K"].matrix, laplace_ops["T"].matrix
    assert np.linalg.norm(T - K.T) / np.linalg.norm(K) < 1e-2


def test_hypersingular_annihilates_constants(laplace_ops):
    """Test the Laplace hypersingular operator maps constants to zero"""
    D = laplace_ops["D"].matrix
    np.testing.assert_allclose(D @ np.ones(len(D)), 0.0, atol=1e-10)
    np.testing.assert_allclose(D, D.T, atol=1e-12)


def test_hypersingular_needs_p1(sphere):
    """Test D on a P0 space raises SpacePairingError"""
    with pytest.raises(SpacePairingError):
        assemble_boundary_operator("D", sphere, 1.0, p0(1), p1(1))


def test_volume_space_rejected(sphere):
    """Test boundary operators reject volume spaces"""
    with pytest.raises(SpacePairingError):
        assemble_boundary_operator("V", sphere, 1.0, volume(1), p1(1))


def test_unknown_operator_rejected(sphere):
    """Test an unknown operator name raises SpacePairingError"""
    with pytest.raises(SpacePairingError):
        assemble_boundary_operators(("W",), sphere, 1.0, p1(1), p1(1))


def test_identity_pairings(sphere):
    """Test mass matrices of every pairing integrate to the surface area"""
    for trial, test in ((p1(1), p1(1)), (p0(1), p0(1)), (p1(1), p0(1)), (p0(1), p1(1))):
        block = assemble_identity(sphere, trial, test)
        ones_test = np.ones(block.shape[0])
        ones_trial = np.ones(block.shape[1])
        assert ones_test @ block.matrix @ ones_trial == pytest.approx(sphere.total_area)
    assert assemble_identity(sphere, p0(1), p1(1)).shape == (sphere.n_nodes, sphere.n_triangles)


def test_project_samples_of_constant(sphere):
    """Test the weak projection of 1 sums to the area"""
    quad = surface_quadrature(sphere, 3)
    weak = project_samples(sphere, p1(1), np.ones(len(quad.points)), quad)
    assert weak.sum() == pytest.approx(sphere.total_area)


def test_exterior_potentials_of_constants(sphere):
    """Test K(1) vanishes and V(1) acts like a point charge outside the sphere"""
    points = np.array([[0.0, 0.0, 2.0], [2.5, 0.0, 0.0]])
    ones = np.ones(sphere.n_nodes)
    double = evaluate_potentials(ones, None, sphere, 0.0, points)
    np.testing.assert_allclose(double, 0.0, atol=2e-3)
    single = evaluate_potentials(None, ones, sphere, 0.0, points)
    expected = -sphere.total_area / (4 * np.pi * np.linalg.norm(points, axis=1))
    np.testing.assert_allclose(single.real, expected, rtol=1e-2)


def test_interior_double_layer_of_constant(sphere):
    """Test K(1) = -1 inside the surface"""
    value = evaluate_potentials(np.ones(sphere.n_nodes), None, sphere, 0.0, np.zeros((1, 3)), check_distance=False)
    assert value[0].real == pytest.approx(-1.0, rel=1e-2)


def test_potentials_reject_near_points(sphere):
    """Test points within one element diameter of the surface raise GeometryError"""
    with pytest.raises(GeometryError):
        evaluate_potentials(None, np.ones(sphere.n_nodes), sphere, 1.0, np.array([[0.0, 0.0, 1.01]]))


def test_near_surface_mask():
    """Test points close to the cube surface are flagged and far ones are not"""
    surface = build_cube_mesh(3).surface(1)
    points = np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 1.02], [3.0, 3.0, 3.0]])
    np.testing.assert_array_equal(near_surface_mask([surface], points, 0.1), [False, True, False])


def test_p0_potential_space(sphere):
    """Test P0 densities give the same far field as equal P1 densities"""
    points = np.array([[0.0, 3.0, 0.0]])
    p1_value = evaluate_potentials(None, np.ones(sphere.n_nodes), sphere, 1.0, points)
    p0_value = evaluate_potentials(None, np.ones(sphere.n_triangles), sphere, 1.0, points,
                                   psi_space=SpaceKind.SURFACE_P0)
    np.testing.assert_allclose(p0_value, p1_value, rtol=1e-10)


SOURCE = np.array([0.2, -0.1, 0.25])


def _point_source_traces(points, normals, k=2.0):
    """Dirichlet and Neumann data of a source inside the unit sphere"""
    g, grad = point_source_field(SOURCE, k, points)
    return g, np.einsum('nd,nd->n', grad, normals)


def _plane_wave_traces(points, normals, k=2.0):
    """Dirichlet and Neumann data of exp(ik z)"""
    u = np.exp(1j * k * points[:, 2])
    return u, 1j * k * normals[:, 2] * u


def _projected_traces(surface, traces):
    """L2 projections onto P1 of both traces, sampled with the face normals"""
    quad = surface_quadrature(surface, 4)
    mass = assemble_identity(surface, p1(1), p1(1)).matrix.toarray()
    dirichlet, neumann = traces(quad.points, quad.normals)
    return tuple(np.linalg.solve(mass, project_samples(surface, p1(1), values, quad))
                 for values in (dirichlet, neumann))


def _exterior_calderon(surface, k=2.0):
    """M^-1 [[M/2 + K, -V], [-D, M/2 - T]] on P1 x P1"""
    ops = assemble_boundary_operators(("V", "K", "T", "D"), surface, k, p1(1), p1(1))
    V, Kd, T, D = (ops[kind].matrix for kind in ("V", "K", "T", "D"))
    mass = assemble_identity(surface, p1(1), p1(1)).matrix.toarray()
    galerkin = np.block([[0.5 * mass + Kd, -V], [-D, 0.5 * mass - T]])
    return np.linalg.solve(scipy.linalg.block_diag(mass, mass), galerkin)


@pytest.fixture(scope="module")
def calderon(sphere):
    """Exterior Calderon projector at k = 2 on the 2-refinement icosphere"""
    return _exterior_calderon(sphere)


def test_calderon_projector_idempotent_under_refinement():
    """Test ||P^2 x - P x|| / ||P x|| shrinks from 1 to 2 refinements at k = 2"""
    defects = []
    for refinements in (1, 2):
        surface = build_icosphere(refinements).surface(1)
        projector = _exterior_calderon(surface)
        x = surface.points
        data = np.concatenate([x[:, 2] + 0.5 * x[:, 0] * x[:, 1], 1.0 + x[:, 0]])
        once = projector @ data
        defects.append(np.linalg.norm(projector @ once - once) / np.linalg.norm(once))
    assert defects[1] < defects[0]
    assert defects[1] < 0.5


def test_calderon_projector_splits_cauchy_data(sphere, calderon):
    """Test radiating data is kept and interior data is annihilated at k = 2"""
    radiating = np.concatenate(_projected_traces(sphere, _point_source_traces))
    interior = np.concatenate(_projected_traces(sphere, _plane_wave_traces))
    assert np.linalg.norm(calderon @ radiating - radiating) < 0.2 * np.linalg.norm(radiating)
    assert np.linalg.norm(calderon @ interior) < 0.2 * np.linalg.norm(interior)


def test_dirichlet_to_neumann_expressions_agree(sphere, calderon):
    """Test the single-layer and symmetric Dirichlet-to-Neumann maps recover the Neumann trace at k = 2"""
    dirichlet, neumann = _projected_traces(sphere, _point_source_traces)
    n = sphere.n_nodes
    single_layer = np.linalg.solve(calderon[:n, n:], dirichlet - calderon[:n, :n] @ dirichlet)
    symmetric = calderon[n:, :n] @ dirichlet + calderon[n:, n:] @ single_layer
    for estimate in (single_layer, symmetric):
        assert np.linalg.norm(estimate - neumann) < 0.2 * np.linalg.norm(neumann)


def test_green_representation_jumps_across_surface(sphere):
    """Test K(u) - V(du/dn) is the radiating field outside and vanishes inside at k = 2"""
    outside = np.array([[0.0, 0.0, 1.8], [1.5, -0.9, 0.3], [-1.2, 1.2, -1.0]])
    inside = np.array([[-0.3, 0.25, -0.2], [0.0, 0.0, -0.45]])
    dirichlet, neumann = _projected_traces(sphere, _point_source_traces)
    exact_out, _ = point_source_field(SOURCE, 2.0, outside)
    exact_in, _ = point_source_field(SOURCE, 2.0, inside)

    value_out = evaluate_potentials(dirichlet, neumann, sphere, 2.0, outside)
    value_in = evaluate_potentials(dirichlet, neumann, sphere, 2.0, inside)
    np.testing.assert_allclose(value_out, exact_out, rtol=0.1)
    assert np.abs(value_in).max() < 0.15 * np.abs(exact_in).min()


def test_green_representation_of_interior_field(sphere):
    """Test a plane wave is represented as minus itself inside and zero outside"""
    outside = np.array([[0.0, 0.0, 1.8], [1.6, 0.2, -0.4]])
    inside = np.array([[0.1, 0.2, -0.3], [0.0, -0.4, 0.2]])
    dirichlet, neumann = _projected_traces(sphere, _plane_wave_traces)
    value_in = evaluate_potentials(dirichlet, neumann, sphere, 2.0, inside)
    value_out = evaluate_potentials(dirichlet, neumann, sphere, 2.0, outside)
    np.testing.assert_allclose(value_in, -np.exp(2j * inside[:, 2]), atol=0.05)
    assert np.abs(value_out).max() < 0.05
