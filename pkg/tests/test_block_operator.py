"""
Unit tests for block_operator and spaces modules
"""

import pytest
import numpy as np
import scipy.sparse as sp
from pathlib import Path
import sys

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from block_operator import BlockOperator, MatrixBlock, OsrcBlock, ProductChain, ScaledSum, as_block
from mesh import build_cube_mesh
from osrc import OsrcConfig, apply_osrc, build_osrc
from spaces import DenseOperatorBlock, SpaceKind, SparseOperatorBlock, p0, p1, volume


@pytest.fixture
def rng():
    """Seeded random generator"""
    return np.random.default_rng(42)


@pytest.fixture
def grid(rng):
    """2x2 block operator with a dense, a sparse and a composite block"""
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    b = sp.random(4, 3, density=0.5, random_state=1, format="csr")
    c = rng.standard_normal((3, 4))
    d = rng.standard_normal((3, 3))
    op = BlockOperator([volume(1), p1(1)], [volume(1), p1(1)], [4, 3], [4, 3])
    op.set_block(0, 0, a, "A")
    op.set_block(0, 1, b, "B")
    op.set_block(1, 0, ScaledSum([(2.0, MatrixBlock(c)), (-1j, MatrixBlock(c))], "C"))
    op.set_block(1, 1, ProductChain([MatrixBlock(d), MatrixBlock(d)], "DD"))
    dense = np.block([[a, b.toarray()], [(2.0 - 1j) * c, d @ d]])
    return op, dense


def test_space_tags():
    """Test tag helpers, surface flags and sizes"""
    mesh = build_cube_mesh(2)
    assert p1(1).kind == SpaceKind.SURFACE_P1
    assert p0(2).domain == 2
    assert not volume(1).on_surface
    assert p0(1).on_surface
    assert volume(1).size(mesh) == 27
    assert p1(1).size(mesh) == 26
    assert p0(1).size(mesh) == 48
    assert str(p1(3)) == "SurfaceP1[3]"


def test_sparse_block_prunes_zeros():
    """Test explicit zeros are removed from sparse operator blocks"""
    matrix = sp.csr_matrix((np.array([1.0, 0.0]), (np.array([0, 1]), np.array([0, 1]))), shape=(2, 2))
    block = SparseOperatorBlock(matrix, p1(1), p1(1), "I")
    assert block.matrix.nnz == 1
    assert block.shape == (2, 2)


def test_shapes_and_offsets(grid):
    """Test the operator shape, grid shape and offsets"""
    op, _ = grid
    assert op.shape == (7, 7)
    assert op.grid_shape == (2, 2)
    np.testing.assert_array_equal(op.col_offsets, [0, 4, 7])


def test_matvec_equals_dense_action(grid, rng):
    """Test the matrix-free action agrees with the densified operator"""
    op, dense = grid
    x = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    np.testing.assert_allclose(op.matvec(x), dense @ x, atol=1e-12)
    np.testing.assert_allclose(op.to_dense(), dense, atol=1e-12)


def test_matmat_on_columns(grid, rng):
    """Test the action on a block of columns"""
    op, dense = grid
    x = rng.standard_normal((7, 3))
    np.testing.assert_allclose(op.matmat(x), dense @ x, atol=1e-12)
    np.testing.assert_allclose(op.as_linear_operator() @ x[:, 0], dense @ x[:, 0], atol=1e-12)


def test_missing_blocks_are_zero():
    """Test an empty grid acts as zero"""
    op = BlockOperator([p1(1)], [p1(1)], [3], [3])
    np.testing.assert_array_equal(op.matvec(np.ones(3)), 0.0)
    assert op.get_block(0, 0) is None


def test_set_block_shape_mismatch():
    """Test a block of the wrong shape is rejected"""
    op = BlockOperator([p1(1)], [p1(1)], [3], [3])
    with pytest.raises(ValueError):
        op.set_block(0, 0, np.eye(2))


def test_set_none_removes_block(grid):
    """Test setting None removes a block"""
    op, _ = grid
    op.set_block(0, 1, None)
    assert op.get_block(0, 1) is None


def test_permute_rows_with_signs(grid):
    """Test permuted rows match the permuted and negated dense matrix"""
    op, dense = grid
    permuted = op.permute_rows([1, 0], [-1.0, 1.0])
    expected = np.vstack([-dense[4:], dense[:4]])
    np.testing.assert_allclose(permuted.to_dense(), expected, atol=1e-12)
    assert permuted.row_spaces == [p1(1), volume(1)]


def test_permute_rows_rejects_non_permutation(grid):
    """Test a repeated row index is rejected"""
    op, _ = grid
    with pytest.raises(ValueError):
        op.permute_rows([0, 0])


def test_scaled_sum_shape_mismatch():
    """Test ScaledSum refuses terms of different shapes"""
    with pytest.raises(ValueError):
        ScaledSum([(1.0, MatrixBlock(np.eye(2))), (1.0, MatrixBlock(np.eye(3)))])


def test_product_chain_shape_mismatch():
    """Test ProductChain refuses incompatible factors"""
    with pytest.raises(ValueError):
        ProductChain([MatrixBlock(np.ones((2, 3))), MatrixBlock(np.ones((2, 2)))])


def test_as_block_wrapping():
    """Test matrices and operator blocks are wrapped, other objects rejected"""
    dense = DenseOperatorBlock(np.eye(2), p1(1), p1(1), "V")
    assert as_block(dense).label == "V"
    assert as_block(sp.eye(2, format="csr")).is_sparse
    with pytest.raises(TypeError):
        as_block("not a matrix")


def test_osrc_block_weak_form():
    """Test the weak OSRC block is the mass matrix times the nodal action"""
    surface = build_cube_mesh(2).surface(1)
    op = build_osrc(surface, 1, "NtD", OsrcConfig.for_wavenumber(2.0, 0.87), sign=-1)
    x = np.linspace(0.0, 1.0, surface.n_nodes)
    strong = OsrcBlock(op)
    weak = OsrcBlock(op, weak=True)
    np.testing.assert_allclose(strong.matvec(x), apply_osrc(op, x))
    np.testing.assert_allclose(weak.matvec(x), op.mass @ apply_osrc(op, x))
    assert strong.label == "-L_NtD"
