#!/usr/bin/env python3
"""
Block Operator Module
Handles block-structured linear operators mixing dense, sparse and
factorised (OSRC) blocks, with matrix-free action and densification
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator
from typing import Dict, List, Optional, Sequence, Tuple

from osrc import OsrcOperator, apply_osrc
from spaces import DenseOperatorBlock, SparseOperatorBlock, SpaceTag


class Block:
    """Linear map between two coefficient spaces; subclasses implement matmat."""
    shape: Tuple[int, int]
    label: str = ""

    def matmat(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matmat(x)

    def to_dense(self) -> np.ndarray:
        return self.matmat(np.eye(self.shape[1], dtype=complex))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label}, {self.shape[0]}x{self.shape[1]})"


class MatrixBlock(Block):
    """Explicit dense or sparse matrix."""

    def __init__(self, matrix, label: str = ""):
        self.matrix = matrix
        self.shape = matrix.shape
        self.label = label

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def matmat(self, x):
        return self.matrix @ x

    def to_dense(self):
        if self.is_sparse:
            return self.matrix.toarray().astype(complex)
        return np.asarray(self.matrix, dtype=complex)


class ScaledSum(Block):
    """sum_i c_i B_i over blocks of equal shape."""

    def __init__(self, terms: Sequence[Tuple[complex, Block]], label: str = ""):
        if not terms:
            raise ValueError("ScaledSum needs at least one term")
        shapes = {block.shape for _, block in terms}
        if len(shapes) != 1:
            raise ValueError(f"ScaledSum terms disagree in shape: {sorted(shapes)}")
        self.terms = [(complex(c), block) for c, block in terms]
        self.shape = terms[0][1].shape
        self.label = label

    def matmat(self, x):
        return sum(c * block.matmat(x) for c, block in self.terms)

    def to_dense(self):
        return sum(c * block.to_dense() for c, block in self.terms)


class ProductChain(Block):
    """B_0 B_1 ... B_m, applied right to left."""

    def __init__(self, factors: Sequence[Block], label: str = ""):
        for left, right in zip(factors, factors[1:]):
            if left.shape[1] != right.shape[0]:
                raise ValueError(f"cannot chain {left!r} with {right!r}")
        self.factors = list(factors)
        self.shape = (factors[0].shape[0], factors[-1].shape[1])
        self.label = label

    def matmat(self, x):
        for block in reversed(self.factors):
            x = block.matmat(x)
        return x


class OsrcBlock(Block):
    """OSRC action; weak=True left-multiplies by the surface mass matrix."""

    def __init__(self, op: OsrcOperator, weak: bool = False, label: str = ""):
        self.op = op
        self.weak = weak
        self.shape = op.shape
        self.label = label or f"{'-' if op.sign < 0 else ''}L_{op.kind}"

    def matmat(self, x):
        y = apply_osrc(self.op, x)
        return self.op.mass @ y if self.weak else y


def as_block(item, label: str = "") -> Block:
    """Wrap matrices, operator blocks and OSRC operators as Blocks."""
    if isinstance(item, Block):
        return item
    if isinstance(item, (DenseOperatorBlock, SparseOperatorBlock)):
        return MatrixBlock(item.matrix, label or item.label)
    if isinstance(item, OsrcOperator):
        return OsrcBlock(item, label=label)
    if sp.issparse(item) or isinstance(item, np.ndarray):
        return MatrixBlock(item, label)
    raise TypeError(f"cannot use {type(item).__name__} as an operator block")


class BlockOperator:
    """
    Grid of blocks acting on a concatenated coefficient vector.

    Columns follow the unknown layout (trial spaces), rows the test spaces.
    Missing grid entries are zero blocks.

    Args:
        row_spaces (Sequence[SpaceTag]): Test space of every block row
        col_spaces (Sequence[SpaceTag]): Trial space of every block column
        row_sizes (Sequence[int]): Dimensions of the row spaces
        col_sizes (Sequence[int]): Dimensions of the column spaces
    """

    def __init__(self, row_spaces: Sequence[SpaceTag], col_spaces: Sequence[SpaceTag],
                 row_sizes: Sequence[int], col_sizes: Sequence[int]):
        if len(row_spaces) != len(row_sizes) or len(col_spaces) != len(col_sizes):
            raise ValueError("space and size lists differ in length")
        self.row_spaces = list(row_spaces)
        self.col_spaces = list(col_spaces)
        self.row_sizes = [int(n) for n in row_sizes]
        self.col_sizes = [int(n) for n in col_sizes]
        self.row_offsets = np.concatenate([[0], np.cumsum(self.row_sizes)]).astype(int)
        self.col_offsets = np.concatenate([[0], np.cumsum(self.col_sizes)]).astype(int)
        self.blocks: Dict[Tuple[int, int], Block] = {}

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.row_offsets[-1]), int(self.col_offsets[-1])

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return len(self.row_sizes), len(self.col_sizes)

    def set_block(self, row: int, col: int, item, label: str = ""):
        """
        Place a block; None removes it.

        Raises:
            ValueError: If the block shape does not match the grid position
        """
        if item is None:
            self.blocks.pop((row, col), None)
            return
        block = as_block(item, label)
        expected = (self.row_sizes[row], self.col_sizes[col])
        if block.shape != expected:
            raise ValueError(f"block ({row}, {col}) {block!r} does not match grid slot {expected}")
        self.blocks[(row, col)] = block

    def get_block(self, row: int, col: int) -> Optional[Block]:
        return self.blocks.get((row, col))

    def split(self, x: np.ndarray, rows: bool = False) -> List[np.ndarray]:
        """Cut a vector into its per-unknown pieces."""
        offsets = self.row_offsets if rows else self.col_offsets
        return [x[offsets[i]:offsets[i + 1]] for i in range(len(offsets) - 1)]

    def matmat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        pieces = self.split(x)
        out = np.zeros((self.shape[0],) + x.shape[1:], dtype=complex)
        for (i, j), block in self.blocks.items():
            out[self.row_offsets[i]:self.row_offsets[i + 1]] += block.matmat(pieces[j])
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matmat(x)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        for (i, j), block in self.blocks.items():
            out[self.row_offsets[i]:self.row_offsets[i + 1],
                self.col_offsets[j]:self.col_offsets[j + 1]] = block.to_dense()
        return out

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.matvec, matmat=self.matmat, dtype=complex)

    def permute_rows(self, order: Sequence[int], signs: Optional[Sequence[float]] = None) -> "BlockOperator":
        """
        New operator whose block row i is signs[i] times block row order[i] of this one.
        """
        signs = list(signs) if signs is not None else [1.0] * len(order)
        if sorted(order) != list(range(len(self.row_sizes))):
            raise ValueError(f"{order} is not a permutation of the block rows")
        out = BlockOperator([self.row_spaces[i] for i in order], self.col_spaces,
                            [self.row_sizes[i] for i in order], self.col_sizes)
        for new_row, (old_row, sign) in enumerate(zip(order, signs)):
            for (i, j), block in self.blocks.items():
                if i == old_row:
                    out.blocks[(new_row, j)] = block if sign == 1 else ScaledSum([(sign, block)], block.label)
        return out
