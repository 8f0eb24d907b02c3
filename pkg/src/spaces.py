#!/usr/bin/env python3
"""
Spaces Module
Handles discrete function space tags and the operator block containers
"""

import numpy as np
import scipy.sparse as sp
from dataclasses import dataclass
from enum import Enum

from mesh import Mesh


class SpaceKind(str, Enum):
    VOLUME_P1 = "VolumeP1"
    SURFACE_P0 = "SurfaceP0"
    SURFACE_P1 = "SurfaceP1"


@dataclass(frozen=True)
class SpaceTag:
    """Discrete space on one domain: volume P1, surface P0 or surface P1."""
    kind: SpaceKind
    domain: int

    @property
    def on_surface(self) -> bool:
        return self.kind != SpaceKind.VOLUME_P1

    def size(self, mesh: Mesh) -> int:
        if self.kind == SpaceKind.VOLUME_P1:
            return len(mesh.volume_nodes(self.domain))
        surface = mesh.surface(self.domain)
        return surface.n_triangles if self.kind == SpaceKind.SURFACE_P0 else surface.n_nodes

    def __str__(self) -> str:
        return f"{self.kind.value}[{self.domain}]"


def p1(domain: int) -> SpaceTag:
    return SpaceTag(SpaceKind.SURFACE_P1, domain)


def p0(domain: int) -> SpaceTag:
    return SpaceTag(SpaceKind.SURFACE_P0, domain)


def volume(domain: int) -> SpaceTag:
    return SpaceTag(SpaceKind.VOLUME_P1, domain)


@dataclass(frozen=True, eq=False)
class DenseOperatorBlock:
    """
    Dense Galerkin matrix: rows follow the test (range) space, columns the trial (domain) space.
    """
    matrix: np.ndarray
    domain: SpaceTag
    range: SpaceTag
    label: str

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True, eq=False)
class SparseOperatorBlock:
    """Row-compressed sparse Galerkin matrix with explicit zeros pruned."""
    matrix: sp.csr_matrix
    domain: SpaceTag
    range: SpaceTag
    label: str

    def __post_init__(self):
        matrix = sp.csr_matrix(self.matrix)
        matrix.sum_duplicates()
        matrix.eliminate_zeros()
        object.__setattr__(self, "matrix", matrix)

    @property
    def shape(self):
        return self.matrix.shape
