#!/usr/bin/env python3
"""
Oracles Module
Handles analytic reference fields: plane-wave transmission through a
penetrable sphere and the free-space point source
"""

import logging
import numpy as np
from dataclasses import dataclass, field
from scipy.special import eval_legendre, spherical_jn, spherical_yn
from typing import Optional, Sequence, Tuple

from errors import GeometryError
from mesh import Surface, points_inside

logger = logging.getLogger(__name__)

TRUNCATION_TOL = 1e-10
EXTRA_ORDERS = 12


def _hankel(l: np.ndarray, x: float, derivative: bool = False) -> np.ndarray:
    """Spherical Hankel function of the first kind."""
    return spherical_jn(l, x, derivative) + 1j * spherical_yn(l, x, derivative)


@dataclass(frozen=True)
class SphereTransmissionOracle:
    """
    Series solution for a plane wave hitting a homogeneous penetrable sphere.

    Transmission conditions at r = a: p continuous and (1/rho) dp/dr continuous.

    Attributes:
        radius (float): Sphere radius a
        k_ext (float): Exterior wavenumber
        k_int (float): Interior wavenumber
        density_ratio (float): rho_int / rho_ext
        direction (Tuple[float, float, float]): Unit incidence direction
        center (Tuple[float, float, float]): Sphere centre
        l_max (int): Highest series order; defaults to ceil(max(k_ext, k_int) a) + 12
    """
    radius: float
    k_ext: float
    k_int: float
    density_ratio: float = 1.0
    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    l_max: Optional[int] = None
    scattering: np.ndarray = field(init=False, repr=False)
    transmission: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.radius <= 0 or self.k_ext <= 0 or self.k_int <= 0 or self.density_ratio <= 0:
            raise ValueError("radius, wavenumbers and density ratio must be positive")
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", tuple(d / np.linalg.norm(d)))
        if self.l_max is None:
            order = int(np.ceil(max(self.k_ext, self.k_int) * self.radius)) + EXTRA_ORDERS
            object.__setattr__(self, "l_max", order)

        l = self.orders
        x, xi = self.k_ext * self.radius, self.k_int * self.radius
        k, ki, q = self.k_ext, self.k_int, self.density_ratio
        j, dj = spherical_jn(l, x), spherical_jn(l, x, True)
        ji, dji = spherical_jn(l, xi), spherical_jn(l, xi, True)
        h, dh = _hankel(l, x), _hankel(l, x, True)
        denominator = q * k * ji * dh - ki * dji * h
        object.__setattr__(self, "scattering", (ki * dji * j - q * k * dj * ji) / denominator)
        object.__setattr__(self, "transmission", q * k * (1j / x ** 2) / denominator)
        if self.truncation_ratio >= TRUNCATION_TOL:
            logger.warning(f"Sphere series truncated at l={self.l_max} with ratio {self.truncation_ratio:.1e}")

    @property
    def orders(self) -> np.ndarray:
        return np.arange(self.l_max + 1)

    @property
    def truncation_ratio(self) -> float:
        """|A_lmax| / max_l |A_l| of the scattering coefficients (0 for a transparent sphere)."""
        magnitude = np.abs(self.scattering)
        return 0.0 if magnitude.max() == 0 else float(magnitude[-1] / magnitude.max())

    def _polar(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rel = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center)
        r = np.linalg.norm(rel, axis=1)
        safe = np.where(r > 0, r, 1.0)
        cos_angle = np.where(r > 0, rel @ np.asarray(self.direction) / safe, 1.0)
        return r, np.clip(cos_angle, -1.0, 1.0)

    def _series(self, coefficients: np.ndarray, radial: np.ndarray, cos_angle: np.ndarray) -> np.ndarray:
        l = self.orders[:, None]
        weights = (1j ** l) * (2 * l + 1) * coefficients[:, None]
        return np.sum(weights * radial * eval_legendre(l, cos_angle[None, :]), axis=0)

    def scattered_field(self, points: np.ndarray) -> np.ndarray:
        """Scattered field at exterior points."""
        r, cos_angle = self._polar(points)
        radial = _hankel(self.orders[:, None], self.k_ext * r[None, :])
        return self._series(self.scattering, radial, cos_angle)

    def scattered_normal_derivative(self, points: np.ndarray) -> np.ndarray:
        """Radial derivative of the scattered field, the Neumann trace on the sphere."""
        r, cos_angle = self._polar(points)
        radial = self.k_ext * _hankel(self.orders[:, None], self.k_ext * r[None, :], derivative=True)
        return self._series(self.scattering, radial, cos_angle)

    def interior_field(self, points: np.ndarray) -> np.ndarray:
        """Transmitted field at interior points."""
        r, cos_angle = self._polar(points)
        radial = spherical_jn(self.orders[:, None], self.k_int * r[None, :])
        return self._series(self.transmission, radial, cos_angle)

    def incident_field(self, points: np.ndarray) -> np.ndarray:
        rel = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center)
        return np.exp(1j * self.k_ext * rel @ np.asarray(self.direction))


def sphere_field(oracle: SphereTransmissionOracle, points: np.ndarray, side: Optional[str] = None,
                 tol: float = 1e-12) -> np.ndarray:
    """
    Total pressure of the penetrable-sphere problem.

    Args:
        oracle (SphereTransmissionOracle): Series data
        points (np.ndarray): Evaluation points (N, 3)
        side (str): 'interior' or 'exterior' for points on r = a; None picks by radius
        tol (float): Radial tolerance defining 'on the sphere'

    Returns:
        np.ndarray: Complex total pressure (N,)

    Raises:
        GeometryError: If a point off the sphere contradicts the side flag
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r, _ = oracle._polar(points)
    on_sphere = np.abs(r - oracle.radius) <= tol * max(1.0, oracle.radius)
    inside = r < oracle.radius
    if side is not None:
        if side not in ("interior", "exterior"):
            raise ValueError(f"side must be 'interior' or 'exterior', got '{side}'")
        wrong = ~on_sphere & (inside != (side == "interior"))
        if wrong.any():
            raise GeometryError(f"point {points[np.flatnonzero(wrong)[0]].tolist()} is not on the {side} side")
        inside = np.where(on_sphere, side == "interior", inside)
    values = np.empty(len(points), dtype=complex)
    if inside.any():
        values[inside] = oracle.interior_field(points[inside])
    outside = ~inside
    if outside.any():
        values[outside] = oracle.incident_field(points[outside]) + oracle.scattered_field(points[outside])
    return values


def point_source_field(location: Sequence[float], k: float, points: np.ndarray,
                       surface: Optional[Surface] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Free-space Green's function exp(ik|x-y|) / (4 pi |x-y|) and its x-gradient.

    Args:
        location (Sequence[float]): Source point y
        k (float): Wavenumber
        points (np.ndarray): Evaluation points x (N, 3)
        surface (Surface): If given, y must lie inside and every x outside it

    Returns:
        Tuple[np.ndarray, np.ndarray]: Values (N,) and gradients (N, 3)

    Raises:
        GeometryError: For coincident points or points on the wrong side of the surface
    """
    y = np.asarray(location, dtype=float)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    diff = x - y[None, :]
    r = np.linalg.norm(diff, axis=1)
    if (r == 0).any():
        raise GeometryError("evaluation point coincides with the source")
    if surface is not None:
        if not points_inside(surface, y[None, :])[0]:
            raise GeometryError(f"source {y.tolist()} is not inside the surface")
        if points_inside(surface, x).any():
            raise GeometryError("evaluation points must lie outside the surface")
    g = np.exp(1j * k * r) / (4.0 * np.pi * r)
    gradient = (g * (1j * k - 1.0 / r) / r)[:, None] * diff
    return g, gradient
