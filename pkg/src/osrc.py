#!/usr/bin/env python3
"""
OSRC Module
Handles the on-surface radiation condition approximations of the
Dirichlet-to-Neumann and Neumann-to-Dirichlet maps

Both maps are localised square roots of (1 + Laplace-Beltrami / k_eps^2),
approximated by rotated-branch Pade series. Every Pade term is one shifted
sparse surface problem, factorised once when the operator is built.
"""

import logging
import numpy as np
import scipy.sparse as sp
from dataclasses import dataclass
from scipy.sparse.linalg import splu
from typing import List, Optional, Tuple

from errors import FactorizationError
from fem_assembly import assemble_surface_laplacian
from mesh import Surface

logger = logging.getLogger(__name__)

DEFAULT_PADE_ORDER = 2
DEFAULT_BRANCH_ANGLE = np.pi / 3


def default_damping(k: float, length: float) -> float:
    """
    Damping of the complex wavenumber: 0.4 (k L)^(-2/3).

    Raises:
        ValueError: If k or L is not positive
    """
    if k <= 0 or length <= 0:
        raise ValueError(f"damping needs positive k and L, got k={k}, L={length}")
    return 0.4 * (k * length) ** (-2.0 / 3.0)


def characteristic_length(surface: Surface) -> float:
    """Circumscribed-sphere radius of the surface bounding box."""
    lo, hi = surface.bounding_box
    return 0.5 * float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class OsrcConfig:
    """
    Pade and damping parameters of one OSRC approximation.

    Attributes:
        pade_order (int): Number of Pade terms N_p
        branch_angle (float): Branch-cut rotation theta in (0, pi)
        damping (float): epsilon > 0
        k (float): Real wavenumber
        characteristic_length (float): L used for the default damping
    """
    pade_order: int
    branch_angle: float
    damping: float
    k: float
    characteristic_length: float

    def __post_init__(self):
        if self.pade_order < 1:
            raise ValueError(f"pade_order must be >= 1, got {self.pade_order}")
        if not 0 < self.branch_angle < np.pi:
            raise ValueError(f"branch_angle must lie in (0, pi), got {self.branch_angle}")
        if self.damping <= 0:
            raise ValueError(f"damping must be positive, got {self.damping}")

    @property
    def k_eps(self) -> complex:
        return self.k * (1.0 + 1j * self.damping)

    @classmethod
    def for_wavenumber(cls, k: float, length: float, pade_order: int = DEFAULT_PADE_ORDER,
                       branch_angle: float = DEFAULT_BRANCH_ANGLE,
                       damping: Optional[float] = None) -> "OsrcConfig":
        if damping is None:
            damping = default_damping(k, length)
        return cls(pade_order, branch_angle, damping, k, length)


def _real_pade(pade_order: int) -> Tuple[np.ndarray, np.ndarray]:
    j = np.arange(1, pade_order + 1)
    angle = j * np.pi / (2 * pade_order + 1)
    a = 2.0 / (2 * pade_order + 1) * np.sin(angle) ** 2
    b = np.cos(angle) ** 2
    return a, b


def pade_sqrt_coefficients(pade_order: int, theta: float) -> Tuple[complex, np.ndarray, np.ndarray]:
    """
    Rotated-branch Pade coefficients of sqrt(1 + z).

    R(z) = C0 + sum_j A_j z / (1 + B_j z) approximates sqrt(1 + z) with the
    branch cut rotated by theta; theta = 0 gives the real Pade approximant.

    Args:
        pade_order (int): Number of terms
        theta (float): Rotation angle in radians

    Returns:
        Tuple[complex, np.ndarray, np.ndarray]: C0, A (N_p,), B (N_p,)
    """
    a, b = _real_pade(pade_order)
    z0 = np.exp(-1j * theta) - 1.0
    c0 = np.exp(1j * theta / 2) * (1.0 + np.sum(a * z0 / (1.0 + b * z0)))
    big_a = np.exp(-1j * theta / 2) * a / (1.0 + b * z0) ** 2
    big_b = np.exp(-1j * theta) * b / (1.0 + b * z0)
    return complex(c0), big_a, big_b


def pade_inverse_sqrt_coefficients(pade_order: int, theta: float) -> Tuple[complex, np.ndarray, np.ndarray]:
    """
    Partial fractions of R(z) / (1 + z), an approximation of (1 + z)^(-1/2).

    R(z)/(1+z) = D0 / (1 + z) + sum_j D_j / (1 + B_j z) with
    D_j = A_j / (1 - B_j) and D0 = C0 - sum_j D_j.

    Returns:
        Tuple[complex, np.ndarray, np.ndarray]: D0, D (N_p,), B (N_p,)
    """
    c0, big_a, big_b = pade_sqrt_coefficients(pade_order, theta)
    d = big_a / (1.0 - big_b)
    return complex(c0 - d.sum()), d, big_b


def evaluate_pade_sqrt(z: np.ndarray, pade_order: int, theta: float) -> np.ndarray:
    """Evaluate R(z) at scalar or array arguments."""
    z = np.asarray(z, dtype=complex)
    c0, big_a, big_b = pade_sqrt_coefficients(pade_order, theta)
    return c0 + sum(a * z / (1.0 + b * z) for a, b in zip(big_a, big_b))


@dataclass(frozen=True, eq=False)
class OsrcOperator:
    """
    Factorised OSRC action on surface P1 coefficients.

    The action returns nodal (strong) coefficients; multiply by the mass
    matrix for a Galerkin (weak) block.

    Attributes:
        kind (str): 'DtN' or 'NtD'
        sign (int): +1 or -1, multiplies the result
        config (OsrcConfig): Parameters
        mass (sp.csc_matrix): Surface mass matrix M_Gamma
        laplacian (sp.csc_matrix): Laplace-Beltrami stiffness K_LB
        factors (List): splu objects, N_p for DtN and N_p + 1 for NtD (closure term first)
        coefficients (Tuple): (C0 or D0, A or D, B)
    """
    kind: str
    sign: int
    config: OsrcConfig
    mass: sp.csc_matrix
    laplacian: sp.csc_matrix
    factors: List
    coefficients: Tuple

    @property
    def size(self) -> int:
        return self.mass.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.size, self.size)

    def with_sign(self, sign: int) -> "OsrcOperator":
        """Same factorisations, different sign."""
        return OsrcOperator(self.kind, sign, self.config, self.mass, self.laplacian, self.factors,
                            self.coefficients)


def _factorize(matrix: sp.spmatrix):
    try:
        return splu(sp.csc_matrix(matrix, dtype=complex))
    except RuntimeError as e:
        raise FactorizationError(f"OSRC surface system is singular: {e}") from e


def build_osrc(surface: Surface, domain: int, kind: str, config: OsrcConfig, sign: int = 1,
               blocks=None) -> OsrcOperator:
    """
    Assemble and factorise the shifted surface systems of one OSRC operator.

    Args:
        surface (Surface): Closed surface
        domain (int): Domain id of the surface
        kind (str): 'DtN' or 'NtD'
        config (OsrcConfig): Pade and damping parameters
        sign (int): +1 for L, -1 for the negative operators used as regularisers
        blocks (Tuple): Optional (K_LB, M_Gamma) already assembled for the surface

    Returns:
        OsrcOperator: Ready-to-apply operator

    Raises:
        FactorizationError: If a shifted system cannot be factorised
    """
    if kind not in ("DtN", "NtD"):
        raise ValueError(f"unknown OSRC kind '{kind}'")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    k_lb, m_gamma = blocks if blocks is not None else assemble_surface_laplacian(surface, domain)
    mass = sp.csc_matrix(m_gamma.matrix, dtype=complex)
    laplacian = sp.csc_matrix(k_lb.matrix, dtype=complex)
    x = -laplacian / config.k_eps ** 2

    if kind == "DtN":
        coefficients = pade_sqrt_coefficients(config.pade_order, config.branch_angle)
        factors = [_factorize(mass + b * x) for b in coefficients[2]]
    else:
        coefficients = pade_inverse_sqrt_coefficients(config.pade_order, config.branch_angle)
        factors = [_factorize(mass + x)] + [_factorize(mass + b * x) for b in coefficients[2]]

    logger.debug(f"Factorised {len(factors)} OSRC-{kind} systems on {surface.n_nodes} surface nodes")
    return OsrcOperator(kind, sign, config, mass, laplacian, factors, coefficients)


def apply_osrc(op: OsrcOperator, coefficients: np.ndarray) -> np.ndarray:
    """
    Apply an OSRC operator to surface P1 coefficients (a vector or the columns of a matrix).

    DtN: ik [C0 u + sum_j A_j w_j] with (M + B_j X) w_j = X u.
    NtD: (1/ik) [D0 y_0 + sum_j D_j y_j] with (M + X) y_0 = M u and (M + B_j X) y_j = M u.
    Here X = -K_LB / k_eps^2 is the weak form of Laplace-Beltrami / k_eps^2.

    Args:
        op (OsrcOperator): Operator from build_osrc
        coefficients (np.ndarray): Shape (N,) or (N, m)

    Returns:
        np.ndarray: Nodal coefficients, same shape as the input
    """
    u = np.asarray(coefficients, dtype=complex)
    if u.shape[0] != op.size:
        raise ValueError(f"expected {op.size} surface coefficients, got {u.shape[0]}")
    k = op.config.k
    lead, weights, _ = op.coefficients

    if op.kind == "DtN":
        xu = -(op.laplacian @ u) / op.config.k_eps ** 2
        result = lead * u
        for a, lu in zip(weights, op.factors):
            result = result + a * lu.solve(xu)
        result = 1j * k * result
    else:
        mu = op.mass @ u
        result = lead * op.factors[0].solve(mu)
        for d, lu in zip(weights, op.factors[1:]):
            result = result + d * lu.solve(mu)
        result = result / (1j * k)
    return op.sign * result
