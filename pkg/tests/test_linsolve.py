"""
Unit tests for linsolve module
"""

import pytest
import numpy as np
import scipy.sparse as sp
from pathlib import Path
import sys

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from errors import ScaleGuardError, SingularMatrixError, SpacePairingError
from formulations import build_stabilised, build_symmetric
from linsolve import (SolveReport, build_block_preconditioner, build_ilu, condition_number, default_recipe,
                      direct_solve, gmres, solve_system)
from mesh import build_cube_mesh
from problem_setup import IncidentWave, benchmark_materials


@pytest.fixture(scope="module")
def system():
    """Stabilised benchmark system on a 3-subdivision cube"""
    return build_stabilised(build_cube_mesh(3), benchmark_materials(3.0), IncidentWave.along((1, 1, 1), 3.0))


@pytest.fixture
def rng():
    """Seeded random generator"""
    return np.random.default_rng(7)


def test_gmres_diagonal_exact_termination():
    """Test GMRES on a diagonal system with m distinct eigenvalues stops after m iterations"""
    A = np.diag([1.0, 2.0, 2.0, 3.0])
    x, report = gmres(A, np.ones(4), tol=1e-12)
    assert report.iterations == 3
    assert report.converged
    np.testing.assert_allclose(x, [1.0, 0.5, 0.5, 1.0 / 3.0])


def test_gmres_residual_history_monotone(rng):
    """Test the residual history never increases and ends below tol"""
    A = np.eye(30) * 4 + rng.standard_normal((30, 30))
    b = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    x, report = gmres(A, b, tol=1e-10)
    residuals = np.array(report.residuals)
    assert (np.diff(residuals) <= 1e-12).all()
    assert report.relative_residual <= 1e-10
    np.testing.assert_allclose(A @ x, b, atol=1e-8)


def test_gmres_zero_rhs():
    """Test a zero right-hand side returns zero after no iterations"""
    x, report = gmres(np.eye(3), np.zeros(3))
    assert report.iterations == 0
    assert report.converged
    np.testing.assert_array_equal(x, 0.0)


def test_gmres_iteration_cap():
    """Test max_iter stops the iteration and flags non-convergence"""
    A = np.diag(np.arange(1.0, 51.0))
    x, report = gmres(A, np.ones(50), tol=1e-12, max_iter=5)
    assert report.iterations == 5
    assert not report.converged
    assert len(report.residuals) == 5


def test_gmres_rejects_non_positive_tol():
    """Test tol <= 0 raises ValueError"""
    with pytest.raises(ValueError):
        gmres(np.eye(2), np.ones(2), tol=0.0)


def test_gmres_callback():
    """Test the callback sees every iteration"""
    seen = []
    gmres(np.diag([1.0, 2.0, 3.0]), np.ones(3), tol=1e-12, callback=lambda it, res: seen.append(it))
    assert seen == [1, 2, 3]


def test_gmres_breakdown_on_singular_matrix():
    """Test a singular Hessenberg entry is reported as a breakdown"""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    _, report = gmres(A, np.array([1.0, 0.0]), tol=1e-12)
    assert report.breakdown_at == 1
    assert not report.converged


def test_direct_solve(rng):
    """Test the dense LU solve"""
    A = np.eye(5) * 3 + rng.standard_normal((5, 5))
    b = rng.standard_normal(5)
    np.testing.assert_allclose(A @ direct_solve(A, b), b, atol=1e-12)


def test_direct_solve_singular():
    """Test a singular matrix raises SingularMatrixError"""
    with pytest.raises(SingularMatrixError):
        direct_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_direct_solve_needs_rhs():
    """Test a bare matrix without rhs is rejected"""
    with pytest.raises(ValueError):
        direct_solve(np.eye(2))


def test_ilu_with_zero_drop_tolerance_is_exact(rng):
    """Test drop_tol = 0 gives an exact factorisation"""
    A = sp.random(40, 40, density=0.1, random_state=3, format="csr") + 5 * sp.eye(40)
    ilu = build_ilu(A, drop_tol=0.0)
    b = rng.standard_normal(40)
    np.testing.assert_allclose(A @ ilu.solve(b), b, atol=1e-10)


def test_ilu_rejects_rectangular():
    """Test ILU needs a square matrix"""
    with pytest.raises(ValueError):
        build_ilu(sp.random(3, 4, density=0.5, format="csr"))


def test_condition_number_guard():
    """Test the dense SVD guard"""
    assert condition_number(np.diag([1.0, 10.0])) == pytest.approx(10.0)
    with pytest.raises(ScaleGuardError):
        condition_number(np.eye(5), guard=4)


def test_default_recipes():
    """Test operator-order matched defaults for base and permuted variants"""
    assert default_recipe("base") == {"p": "ilu_inner+osrc_surface", "theta": "osrc_dtn", "sigma": "osrc_ntd"}
    assert default_recipe("permuted")["sigma"] == "osrc_dtn"
    assert default_recipe("permuted_alt_reg")["theta"] == "mass"


def test_preconditioner_layout(system):
    """Test the block preconditioner covers every unknown block"""
    prec = build_block_preconditioner(default_recipe("base"), system)
    assert prec.shape == (system.n_unknowns, system.n_unknowns)
    assert prec.label == "ilu_inner+osrc_surface/osrc_dtn/osrc_ntd"
    r = np.ones(system.n_unknowns, dtype=complex)
    assert np.isfinite(prec.apply(r)).all()


def test_all_none_is_identity(system):
    """Test a recipe of only 'none' gives the identity"""
    prec = build_block_preconditioner({"p": "none"}, system)
    r = np.arange(system.n_unknowns, dtype=complex)
    np.testing.assert_array_equal(prec.apply(r), r)
    assert prec.label == "none"


def test_mass_preconditioner_inverts_mass(system):
    """Test the 'mass' choice applies the inverse surface mass matrix"""
    prec = build_block_preconditioner({"sigma": "mass"}, system)
    ctx = system.contexts[1]
    u = np.linspace(0.0, 1.0, ctx.surface.n_nodes)
    r = np.zeros(system.n_unknowns, dtype=complex)
    r[system.unknown_slice("sigma", 1)] = ctx.m_gamma.matrix @ u
    np.testing.assert_allclose(prec.apply(r)[system.unknown_slice("sigma", 1)], u, atol=1e-10)


def test_lu_all_inverts_interior_form(system):
    """Test 'lu_all' solves with the interior form F"""
    prec = build_block_preconditioner({"p": "lu_all"}, system)
    ctx = system.contexts[1]
    p = np.linspace(0.0, 1.0, len(ctx.maps.volume_nodes)) + 0j
    r = np.zeros(system.n_unknowns, dtype=complex)
    r[system.unknown_slice("p", 1)] = ctx.fem.matrix @ p
    np.testing.assert_allclose(prec.apply(r)[system.unknown_slice("p", 1)], p, atol=1e-10)


@pytest.mark.parametrize("recipe", [{"p": "mass"}, {"theta": "ilu_all"}, {"q": "none"}, {"p": "magic"}])
def test_invalid_recipes(system, recipe):
    """Test misplaced or unknown choices raise SpacePairingError"""
    with pytest.raises(SpacePairingError):
        build_block_preconditioner(recipe, system)


def test_osrc_on_p0_theta_rejected():
    """Test OSRC/mass on a P0 theta row raises SpacePairingError"""
    system = build_symmetric(build_cube_mesh(2), benchmark_materials(2.0), IncidentWave.along((1, 0, 0), 2.0),
                             theta_space="P0")
    with pytest.raises(SpacePairingError):
        build_block_preconditioner({"theta": "osrc_dtn"}, system)


def test_preconditioned_gmres_matches_direct_solve(system):
    """Test preconditioned GMRES reaches the direct solution and needs fewer iterations"""
    x_direct = direct_solve(system)
    x, report = solve_system(system, recipe=default_recipe("base"), tol=1e-8)
    assert report.converged
    assert np.linalg.norm(x - x_direct) / np.linalg.norm(x_direct) < 1e-4
    _, plain = solve_system(system, recipe=None, tol=1e-8)
    assert report.iterations < plain.iterations


def test_solve_system_metadata(system):
    """Test the report carries the run metadata"""
    _, report = solve_system(system, method="direct", with_condition=True)
    assert isinstance(report, SolveReport)
    assert report.solver == "direct"
    assert report.condition_number > 1
    assert report.metadata["formulation"] == "stabilised"
    assert report.metadata["variant"] == "base"
    assert report.metadata["n_unknowns"] == system.n_unknowns
    assert report.metadata["k"] == pytest.approx(3.0)
    assert report.to_dict()["metadata"]["theta_space"] == "P1"


def test_solve_system_unknown_method(system):
    """Test an unknown method raises ValueError"""
    with pytest.raises(ValueError):
        solve_system(system, method="cg")
