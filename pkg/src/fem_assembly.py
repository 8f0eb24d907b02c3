#!/usr/bin/env python3
"""
FEM Assembly Module
Handles the interior heterogeneous Helmholtz form and the surface
Laplace-Beltrami, mass and regulariser matrices
"""

import logging
import numpy as np
import scipy.sparse as sp
from typing import Optional, Tuple

from errors import FormulationError
from mesh import Mesh, Surface
from problem_setup import MaterialModel
from quadrature import QuadratureConfig, tetrahedron_rule
from spaces import SparseOperatorBlock, volume, p1

logger = logging.getLogger(__name__)


def _tet_geometry(mesh: Mesh, domain: int):
    """Local dof indices, corner coordinates, volumes and hat gradients of a domain's tets."""
    nodes = mesh.volume_nodes(domain)
    tets = mesh.domain_tetrahedra(domain)
    local = np.searchsorted(nodes, tets)
    corners = mesh.vertices[tets]
    jac = np.stack([corners[:, i] - corners[:, 0] for i in (1, 2, 3)], axis=2)
    vols = np.linalg.det(jac) / 6.0
    inv = np.linalg.inv(jac)
    grads = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
    return nodes, local, corners, vols, grads


def _scatter(local: np.ndarray, values: np.ndarray, size: int) -> sp.csr_matrix:
    rows = np.repeat(local, local.shape[1], axis=1).ravel()
    cols = np.tile(local, (1, local.shape[1])).ravel()
    return sp.csr_matrix((values.ravel(), (rows, cols)), shape=(size, size))


def assemble_stiffness_mass(mesh: Mesh, domain: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Volume P1 stiffness and mass matrices of a domain (closed-form element matrices).

    Returns:
        Tuple[sp.csr_matrix, sp.csr_matrix]: (stiffness, mass)
    """
    nodes, local, _, vols, grads = _tet_geometry(mesh, domain)
    stiff = vols[:, None, None] * np.einsum('tad,tbd->tab', grads, grads)
    mass = vols[:, None, None] * ((np.ones((4, 4)) + np.eye(4)) / 20.0)[None]
    return _scatter(local, stiff, len(nodes)), _scatter(local, mass, len(nodes))


def assemble_fem(mesh: Mesh, material: MaterialModel, k_ext: float, domain: int,
                 quadrature: Optional[QuadratureConfig] = None) -> SparseOperatorBlock:
    """
    Galerkin matrix of the interior form with the density product rule expanded.

    Entry (i, j) is  int grad(phi_j).grad(phi_i) + (1/rho)(grad rho . grad phi_j) phi_i
    - k_ext^2 n^2 phi_j phi_i, integrated with the configured tetrahedral rule.

    Args:
        mesh (Mesh): Volume mesh
        material (MaterialModel): Interior n and rho fields
        k_ext (float): Exterior wavenumber
        domain (int): Domain id
        quadrature (QuadratureConfig): Uses volume_order

    Returns:
        SparseOperatorBlock: 'F' on the volume P1 space of the domain

    Raises:
        MaterialError: If n or rho is not positive at a quadrature point
    """
    quadrature = quadrature or QuadratureConfig()
    nodes, local, corners, vols, grads = _tet_geometry(mesh, domain)
    bary, w = tetrahedron_rule(quadrature.volume_order)

    points = np.einsum('qa,tad->tqd', bary, corners)
    weights = 6.0 * vols[:, None] * w[None, :]
    lo, hi = corners.reshape(-1, 3).min(axis=0), corners.reshape(-1, 3).max(axis=0)
    fields = material.sample(domain, points.reshape(-1, 3), diameter=float(np.linalg.norm(hi - lo)))
    shape = points.shape[:2]
    n = fields["n"].reshape(shape)
    rho = fields["rho"].reshape(shape)
    grad_rho = fields["grad_rho"].reshape(shape + (3,))

    stiff = vols[:, None, None] * np.einsum('tad,tbd->tab', grads, grads)
    mass = np.einsum('tq,qa,qb->tab', weights * (k_ext * n) ** 2, bary, bary)
    drift = np.einsum('tqd,tbd->tqb', grad_rho / rho[:, :, None], grads)
    convection = np.einsum('tq,qa,tqb->tab', weights, bary, drift)

    matrix = _scatter(local, stiff + convection - mass, len(nodes)).astype(complex)
    logger.info(f"Assembled FEM block for domain {domain}: {len(nodes)} dofs, {len(local)} tetrahedra")
    return SparseOperatorBlock(matrix, volume(domain), volume(domain), "F")


def assemble_surface_laplacian(surface: Surface, domain: int) -> Tuple[SparseOperatorBlock, SparseOperatorBlock]:
    """
    Surface P1 Laplace-Beltrami stiffness and mass matrices.

    Returns:
        Tuple[SparseOperatorBlock, SparseOperatorBlock]: (K_LB, M_Gamma)
    """
    tris = surface.triangles
    grads = surface.hat_gradients
    areas = surface.areas
    stiff = areas[:, None, None] * np.einsum('fad,fbd->fab', grads, grads)
    mass = areas[:, None, None] * ((np.ones((3, 3)) + np.eye(3)) / 12.0)[None]
    tag = p1(domain)
    k_lb = SparseOperatorBlock(_scatter(tris, stiff, surface.n_nodes), tag, tag, "K_LB")
    m_gamma = SparseOperatorBlock(_scatter(tris, mass, surface.n_nodes), tag, tag, "M_Gamma")
    return k_lb, m_gamma


def assemble_regulariser_form(kind: str, kappa: float,
                              blocks: Tuple[SparseOperatorBlock, SparseOperatorBlock]) -> SparseOperatorBlock:
    """
    Weak form of the inverse MH/SL regulariser: K_LB + kappa^2 M_Gamma.

    Args:
        kind (str): 'MH' (kappa forced to 1) or 'SL'
        kappa (float): Shift, must be positive
        blocks (Tuple): (K_LB, M_Gamma) from assemble_surface_laplacian

    Raises:
        FormulationError: If kappa <= 0 or the kind is unknown
    """
    k_lb, m_gamma = blocks
    if kind == "MH":
        kappa = 1.0
    elif kind != "SL":
        raise FormulationError(f"unknown regulariser form '{kind}'")
    if kappa is None or kappa <= 0:
        raise FormulationError(f"regulariser shift must be positive, got {kappa}")
    matrix = (k_lb.matrix + kappa ** 2 * m_gamma.matrix).astype(complex)
    return SparseOperatorBlock(matrix, k_lb.domain, k_lb.range, f"S_{kind}")
