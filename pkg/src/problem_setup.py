#!/usr/bin/env python3
"""
Problem Setup Module
Handles physical parameters, interior material fields and the incident plane wave

All quantities are nondimensional. The time convention is exp(-i omega t), so
outgoing waves behave like exp(+ikr).
"""

import numpy as np
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

from errors import MaterialError

ValueFn = Callable[[np.ndarray], np.ndarray]
GradientFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExteriorMedium:
    """
    Homogeneous exterior medium.

    Attributes:
        rho_ext (float): Density
        c_ext (float): Wave speed
        f (float): Frequency
        k_ext (float): Wavenumber 2 pi f / c_ext
    """
    rho_ext: float
    c_ext: float
    f: float
    k_ext: float = field(init=False)

    def __post_init__(self):
        if self.rho_ext <= 0 or self.c_ext <= 0 or self.f <= 0:
            raise MaterialError("exterior density, speed and frequency must be positive")
        object.__setattr__(self, "k_ext", 2.0 * np.pi * self.f / self.c_ext)

    @classmethod
    def from_wavenumber(cls, k_ext: float, rho_ext: float = 1.0, c_ext: float = 1.0) -> "ExteriorMedium":
        if k_ext <= 0:
            raise MaterialError("k_ext must be positive")
        return cls(rho_ext=rho_ext, c_ext=c_ext, f=k_ext * c_ext / (2.0 * np.pi))


@dataclass(frozen=True)
class MaterialField:
    """
    Scalar field with gradient, vectorised over points of shape (N, 3).

    When no analytic gradient is supplied, central differences are used with a
    step of 1e-6 times the domain diameter passed to `gradient`.
    """
    value_fn: ValueFn
    gradient_fn: Optional[GradientFn] = None

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.broadcast_to(np.asarray(self.value_fn(points), dtype=float), (len(points),)).copy()

    def gradient(self, points: np.ndarray, diameter: float = 1.0) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.gradient_fn is not None:
            return np.broadcast_to(np.asarray(self.gradient_fn(points), dtype=float), points.shape).copy()
        step = 1e-6 * diameter
        grad = np.empty(points.shape)
        for axis in range(3):
            shift = np.zeros(3)
            shift[axis] = step
            grad[:, axis] = (self.value(points + shift) - self.value(points - shift)) / (2.0 * step)
        return grad


def constant_field(value: float) -> MaterialField:
    """Constant field with zero gradient."""
    return MaterialField(lambda x: np.full(len(x), float(value)), lambda x: np.zeros((len(x), 3)))


def graded_density(minimum: float = 0.2, span: float = 5.0, start: float = 0.0, end: float = 1.0) -> MaterialField:
    """
    Density growing quadratically along x: minimum + span ((x - start) / (end - start))^2.

    With the defaults rho_int rises from 0.2 at x = start to 5.2 at x = end.

    Raises:
        MaterialError: If minimum <= 0, span < 0 or end <= start
    """
    if minimum <= 0 or span < 0 or end <= start:
        raise MaterialError(f"invalid graded density: minimum={minimum}, span={span}, x in [{start}, {end}]")
    length = end - start

    def value(x):
        return minimum + span * ((x[:, 0] - start) / length) ** 2

    def gradient(x):
        grad = np.zeros(x.shape)
        grad[:, 0] = 2.0 * span * (x[:, 0] - start) / length ** 2
        return grad

    return MaterialField(value, gradient)


@dataclass(frozen=True)
class MaterialModel:
    """
    Interior refractivity n(x) and density rho_int(x) per domain, plus the exterior medium.

    Attributes:
        exterior (ExteriorMedium): Exterior constants (k_ext, rho_ext)
        refractivity (Dict[int, MaterialField]): n per domain id
        density (Dict[int, MaterialField]): rho_int per domain id
    """
    exterior: ExteriorMedium
    refractivity: Dict[int, MaterialField]
    density: Dict[int, MaterialField]

    @property
    def k_ext(self) -> float:
        return self.exterior.k_ext

    def sample(self, domain: int, points: np.ndarray, diameter: float = 1.0) -> Dict[str, np.ndarray]:
        """
        Evaluate n, rho and grad rho at points of a domain.

        Raises:
            MaterialError: If n or rho is not positive at any point
        """
        n = self.refractivity[domain].value(points)
        rho = self.density[domain].value(points)
        if (n <= 0).any() or (rho <= 0).any():
            raise MaterialError(f"non-positive refractivity or density sampled in domain {domain}")
        return {"n": n, "rho": rho, "grad_rho": self.density[domain].gradient(points, diameter)}

    def density_ratio(self, domain: int, points: np.ndarray) -> np.ndarray:
        """rho_int / rho_ext at interior-side trace points."""
        rho = self.density[domain].value(points)
        if (rho <= 0).any():
            raise MaterialError(f"non-positive density sampled in domain {domain}")
        return rho / self.exterior.rho_ext


def uniform_materials(k_ext: float, domains: Sequence[int], n: float = 1.0, rho_int: float = 1.0,
                      rho_ext: float = 1.0) -> MaterialModel:
    """Constant n and rho_int on every listed domain."""
    return MaterialModel(exterior=ExteriorMedium.from_wavenumber(k_ext, rho_ext=rho_ext),
                         refractivity={d: constant_field(n) for d in domains},
                         density={d: constant_field(rho_int) for d in domains})


_BENCHMARK_DENOMINATOR = 1.0 - 0.5 * np.exp(-0.25)


def benchmark_refractivity(x: np.ndarray) -> np.ndarray:
    """
    Refractivity of the cube benchmark: (1 - exp(-m^2)/2) / (1 - exp(-1/4)/2), m = |x - 1/2|_inf.

    Args:
        x (np.ndarray): Points, shape (3,) or (N, 3)

    Returns:
        np.ndarray: n(x), scalar for a single point
    """
    x = np.asarray(x, dtype=float)
    m = np.abs(x - 0.5).max(axis=-1)
    return (1.0 - 0.5 * np.exp(-m ** 2)) / _BENCHMARK_DENOMINATOR


def benchmark_refractivity_gradient(x: np.ndarray) -> np.ndarray:
    """Analytic gradient of benchmark_refractivity; zero where the max norm is not differentiable."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    d = x - 0.5
    a = np.abs(d)
    m = a.max(axis=1)
    axis = a.argmax(axis=1)
    ties = (np.isclose(a, m[:, None], rtol=0.0, atol=1e-14)).sum(axis=1) > 1

    grad = np.zeros_like(x)
    rows = np.arange(len(x))
    dn_dm = m * np.exp(-m ** 2) / _BENCHMARK_DENOMINATOR
    grad[rows, axis] = dn_dm * np.sign(d[rows, axis])
    grad[ties] = 0.0
    return grad[0] if single else grad


def benchmark_materials(k_ext: float, rho_int: float = 1.0, rho_ext: float = 1.0,
                        domains: Sequence[int] = (1,)) -> MaterialModel:
    """Cube benchmark material: graded refractivity, constant density."""
    n = MaterialField(benchmark_refractivity, benchmark_refractivity_gradient)
    return MaterialModel(exterior=ExteriorMedium.from_wavenumber(k_ext, rho_ext=rho_ext),
                         refractivity={d: n for d in domains},
                         density={d: constant_field(rho_int) for d in domains})


@dataclass(frozen=True)
class IncidentWave:
    """
    Plane wave amplitude * exp(i k d.x).

    Attributes:
        direction (Tuple[float, float, float]): Unit propagation direction
        k_ext (float): Exterior wavenumber
        amplitude (complex): Complex amplitude (0 gives a silent wave)
    """
    direction: Tuple[float, float, float]
    k_ext: float
    amplitude: complex = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError(f"incident direction must be a unit 3-vector, got {self.direction}")

    @classmethod
    def along(cls, direction: Sequence[float], k_ext: float, amplitude: complex = 1.0) -> "IncidentWave":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(direction=tuple(float(v) for v in d), k_ext=k_ext, amplitude=amplitude)

    @property
    def d(self) -> np.ndarray:
        return np.asarray(self.direction, dtype=float)


def plane_wave_field(wave: IncidentWave, points: np.ndarray) -> np.ndarray:
    """Pressure of the plane wave at points (N, 3)."""
    points = np.atleast_2d(points)
    return wave.amplitude * np.exp(1j * wave.k_ext * points @ wave.d)


def plane_wave_gradient(wave: IncidentWave, points: np.ndarray) -> np.ndarray:
    """Gradient of the plane wave at points, shape (N, 3)."""
    return 1j * wave.k_ext * plane_wave_field(wave, points)[:, None] * wave.d[None, :]


def plane_wave_traces(wave: IncidentWave, points: np.ndarray,
                      normals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Dirichlet and Neumann traces of the plane wave.

    Args:
        wave (IncidentWave): Incident wave
        points (np.ndarray): Surface points (N, 3)
        normals (np.ndarray): Unit normals at the points (N, 3)

    Returns:
        Tuple[np.ndarray, np.ndarray]: exp(ik d.x) and ik (d.n) exp(ik d.x), times the amplitude
    """
    dirichlet = plane_wave_field(wave, points)
    neumann = 1j * wave.k_ext * (np.atleast_2d(normals) @ wave.d) * dirichlet
    return dirichlet, neumann


def cube_resonance_wavenumbers(max_k: float) -> list:
    """
    Interior Dirichlet resonance wavenumbers pi*sqrt(mx^2 + my^2 + mz^2) of the unit cube up to max_k.

    Returns:
        list: Sorted, de-duplicated wavenumbers (empty below pi*sqrt(3))
    """
    m_max = int(np.floor(max_k / np.pi))
    if m_max < 1:
        return []
    m = np.arange(1, m_max + 1)
    mx, my, mz = np.meshgrid(m, m, m, indexing='ij')
    sums = np.unique((mx ** 2 + my ** 2 + mz ** 2).ravel())
    values = np.pi * np.sqrt(sums)
    return [float(v) for v in values[values <= max_k]]
