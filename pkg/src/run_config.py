#!/usr/bin/env python3
"""
Run Configuration Module
Handles loading, validation and defaults of benchmark run configurations,
and turns them into meshes, materials and incident waves
"""

import json
import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from typing import Dict, List, Literal, Optional, Tuple

from errors import ConfigError
from mesh import Mesh, build_ball_mesh, build_cube_mesh, import_msh, merge_meshes
from osrc import DEFAULT_BRANCH_ANGLE, DEFAULT_PADE_ORDER
from problem_setup import (ExteriorMedium, IncidentWave, MaterialField, MaterialModel,
                           benchmark_refractivity, benchmark_refractivity_gradient, constant_field,
                           cube_resonance_wavenumbers, graded_density)
from quadrature import QuadratureConfig

SCHEMA_VERSION = 1
PERMUTED_VARIANTS = ("permuted", "permuted_base", "permuted_alt_reg")
SURFACE_CHOICES = ("mass", "osrc_ntd", "osrc_dtn")
VOLUME_CHOICES = ("ilu_all", "ilu_inner+osrc_surface", "lu_all")
RESONANCE_WINDOW = 0.25
FINE_STEP = 0.05
COARSE_STEP = 0.25


class GeometryConfig(BaseModel):
    """Scatterer geometry: unit cube, external MSH file, ball or two separated cubes."""
    kind: Literal["cube", "msh", "sphere", "two_body"] = "cube"
    subdivisions: int = Field(13, ge=1)
    msh_path: Optional[str] = None
    radius: float = Field(1.0, gt=0)
    gap: float = Field(2.0, gt=0)

    @model_validator(mode="after")
    def _check_msh(self):
        if self.kind == "msh" and not self.msh_path:
            raise ValueError("geometry kind 'msh' needs msh_path")
        return self


class MaterialConfig(BaseModel):
    """Interior refractivity and densities (shared by every domain)."""
    refractivity: Literal["benchmark", "constant"] = "benchmark"
    n: float = Field(1.0, gt=0)
    rho_int: float = Field(1.0, gt=0)
    density: Literal["constant", "graded"] = "constant"
    density_min: float = Field(0.2, gt=0)
    density_span: float = Field(5.0, ge=0)
    density_extent: Tuple[float, float] = (0.0, 1.0)
    rho_ext: float = Field(1.0, gt=0)
    c_ext: float = Field(1.0, gt=0)

    @field_validator("density_extent")
    @classmethod
    def _increasing(cls, value):
        if value[1] <= value[0]:
            raise ValueError(f"density_extent must be increasing, got {value}")
        return value


class WaveConfig(BaseModel):
    """Incident plane wave; k_ext is the wavenumber of single solves."""
    k_ext: float = Field(4.0, gt=0)
    direction: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    amplitude: float = 1.0

    @field_validator("direction")
    @classmethod
    def _non_zero(cls, value):
        if np.linalg.norm(value) == 0:
            raise ValueError("incident direction must be non-zero")
        return value


class GridEntry(BaseModel):
    """One formulation of the experiment grid together with its solver recipe."""
    formulation: Literal["standard", "symmetric", "stabilised"] = "stabilised"
    variant: Literal["base", "alt_nu", "alt_reg", "permuted", "permuted_base", "permuted_alt_reg"] = "base"
    regulariser: Literal["MH", "SL", "OSRC-NtD", "OSRC"] = "OSRC-NtD"
    eta: float = 1.0
    nu: float = 0.0
    kappa: Optional[float] = None
    theta_space: Literal["P0", "P1"] = "P1"
    recipe: Optional[Dict[str, str]] = None
    method: Literal["gmres", "direct"] = "gmres"
    label: Optional[str] = None

    @field_validator("regulariser")
    @classmethod
    def _alias(cls, value):
        return "OSRC-NtD" if value == "OSRC" else value

    @model_validator(mode="after")
    def _check_combination(self):
        if self.formulation == "stabilised":
            if self.eta == 0:
                raise ValueError("eta = 0 degenerates to the symmetric coupling")
            if not (self.nu == 0 or np.isclose(self.nu, self.eta)):
                raise ValueError(f"nu must be 0 or eta, got {self.nu}")
            if self.variant in ("alt_reg", "permuted_alt_reg") and self.regulariser != "OSRC-NtD":
                raise ValueError(f"{self.variant} needs the OSRC-NtD regulariser")
            if self.kappa is not None and self.kappa <= 0:
                raise ValueError("kappa must be positive")
        rows = ("p", "theta", "sigma") if self.formulation == "stabilised" else ("p", "theta")
        for key, choice in self.effective_recipe().items():
            if key not in rows:
                raise ValueError(f"recipe key '{key}' does not exist for the {self.formulation} formulation")
            if key == "p" and choice in SURFACE_CHOICES:
                raise ValueError(f"'{choice}' cannot precondition the volume unknown")
            if key != "p" and choice in VOLUME_CHOICES:
                raise ValueError(f"'{choice}' only applies to the volume unknown")
            if choice not in ("none",) + SURFACE_CHOICES + VOLUME_CHOICES:
                raise ValueError(f"unknown preconditioner '{choice}'")
        if self.theta_space == "P0":
            recipe = self.effective_recipe()
            if self.is_permuted and any(v != "none" for v in recipe.values()):
                raise ValueError("permuted rows with P0 theta cannot be block preconditioned")
            if recipe.get("theta", "none") in SURFACE_CHOICES:
                raise ValueError(f"'{recipe['theta']}' with P0-P1: the mass matrix is rectangular")
        return self

    @property
    def is_permuted(self) -> bool:
        return self.formulation == "stabilised" and self.variant in PERMUTED_VARIANTS

    def effective_recipe(self) -> Dict[str, str]:
        """Explicit recipe, or the operator-order matched default."""
        if self.recipe is not None:
            return dict(self.recipe)
        if self.method == "direct":
            return {}
        theta = "osrc_dtn" if self.theta_space == "P1" else "none"
        if self.formulation != "stabilised":
            return {"p": "ilu_inner+osrc_surface", "theta": theta}
        if self.is_permuted:
            return {"p": "ilu_inner+osrc_surface", "theta": "mass", "sigma": "osrc_dtn"} \
                if self.theta_space == "P1" else {}
        return {"p": "ilu_inner+osrc_surface", "theta": theta, "sigma": "osrc_ntd"}

    def name(self) -> str:
        if self.label:
            return self.label
        if self.formulation != "stabilised":
            return f"{self.formulation}/{self.theta_space}"
        return f"stabilised-{self.regulariser}/{self.variant}/nu={self.nu:g}/{self.theta_space}"


class SolverConfig(BaseModel):
    """GMRES and ILU settings."""
    tol: float = Field(1e-5, gt=0)
    max_iter: Optional[int] = Field(None, ge=1)
    drop_tol: float = Field(1e-4, ge=0)


class OsrcSettings(BaseModel):
    """OSRC parameters; damping and characteristic length default to the surface-derived values."""
    pade_order: int = Field(DEFAULT_PADE_ORDER, ge=1)
    branch_angle: float = Field(DEFAULT_BRANCH_ANGLE, gt=0, lt=np.pi)
    damping: Optional[float] = Field(None, gt=0)
    characteristic_length: Optional[float] = Field(None, gt=0)


class SweepConfig(BaseModel):
    """Wavenumbers of sweep and compare runs."""
    k_values: List[float] = Field(default_factory=list)
    k_range: Optional[Tuple[float, float, float]] = None
    preset: Optional[Literal["resonance"]] = None

    def wavenumbers(self) -> List[float]:
        """Explicit values, then the range, then the preset, in that order of precedence."""
        if self.k_values:
            return [float(k) for k in self.k_values]
        if self.k_range is not None:
            start, stop, step = self.k_range
            if step <= 0 or stop < start:
                raise ConfigError(f"invalid k_range {self.k_range}")
            return [float(k) for k in np.round(np.arange(start, stop + 0.5 * step, step), 10)]
        if self.preset == "resonance":
            return resonance_sweep()
        return []


class OutputConfig(BaseModel):
    """Output directory and field slice definition (defaults to the z = 0.5 plane)."""
    directory: Optional[str] = None
    write_vtk: bool = True
    write_surface: bool = True
    plane_origin: Tuple[float, float, float] = (-0.5, -0.5, 0.5)
    plane_axis_u: Tuple[float, float, float] = (2.0, 0.0, 0.0)
    plane_axis_v: Tuple[float, float, float] = (0.0, 2.0, 0.0)
    resolution: int = Field(41, ge=2)


class RunConfig(BaseModel):
    """Complete benchmark run configuration."""
    schema_version: Literal[1] = SCHEMA_VERSION
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    materials: MaterialConfig = Field(default_factory=MaterialConfig)
    wave: WaveConfig = Field(default_factory=WaveConfig)
    grid: List[GridEntry] = Field(default_factory=lambda: [GridEntry()])
    solver: SolverConfig = Field(default_factory=SolverConfig)
    osrc: OsrcSettings = Field(default_factory=OsrcSettings)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    compute_condition: bool = False


def get_default_config() -> RunConfig:
    """
    Return the benchmark defaults.

    Unit cube with 13 subdivisions, graded refractivity, rho = 1, plane wave
    along the (1, 1, 1) diagonal, stabilised OSRC coupling, GMRES tol 1e-5
    without restart, ILU drop tolerance 1e-4, Pade order 2 and branch angle pi/3.

    Returns:
        RunConfig: Default configuration
    """
    return RunConfig()


def load_run_config(input_file: str) -> Optional[RunConfig]:
    """
    Load a run configuration from JSON.

    Args:
        input_file (str): Path to the JSON file

    Returns:
        RunConfig: Parsed configuration, or None if the file is missing or not JSON

    Raises:
        ConfigError: If the file is readable JSON but violates the schema

    Note:
        Supports both the bare configuration object and a wrapper with a 'config' key
    """
    try:
        with open(input_file, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        print(f"Error: Config file '{input_file}' not found")
        return None
    except json.JSONDecodeError:
        print(f"Error: Invalid JSON in '{input_file}'")
        return None

    if isinstance(data, dict) and 'config' in data:
        data = data['config']
    if not isinstance(data, dict):
        raise ConfigError(f"'{input_file}' must contain a configuration object")
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration in '{input_file}': {e}") from e
    print(f"✓ Loaded configuration from {input_file} ({len(config.grid)} grid entries)\n")
    return config


def resonance_sweep(k_min: float = 4.0, k_max: float = 12.0) -> List[float]:
    """Wavenumbers with a 0.05 step within 0.25 of a cube resonance and 0.25 elsewhere."""
    resonances = np.asarray(cube_resonance_wavenumbers(k_max + RESONANCE_WINDOW))
    fine = np.round(np.arange(k_min, k_max + 1e-9, FINE_STEP), 10)
    near = np.zeros(len(fine), dtype=bool)
    if len(resonances):
        near = np.abs(fine[:, None] - resonances[None, :]).min(axis=1) <= RESONANCE_WINDOW
    coarse = np.isclose(np.mod(fine - k_min + 1e-9, COARSE_STEP), 0.0, atol=1e-6)
    return [float(k) for k in fine[near | coarse]]


def build_geometry(config: GeometryConfig) -> Mesh:
    """Mesh of the configured scatterer(s)."""
    if config.kind == "cube":
        return build_cube_mesh(config.subdivisions)
    if config.kind == "sphere":
        return build_ball_mesh(config.subdivisions, radius=config.radius)
    if config.kind == "msh":
        return import_msh(config.msh_path)
    first = build_cube_mesh(config.subdivisions)
    second = build_cube_mesh(config.subdivisions, origin=(1.0 + config.gap, 0.0, 0.0))
    return merge_meshes([first, second])


def build_materials(config: MaterialConfig, k_ext: float, domains: List[int]) -> MaterialModel:
    """Material model with the configured fields on every domain."""
    if config.refractivity == "benchmark":
        n = MaterialField(benchmark_refractivity, benchmark_refractivity_gradient)
    else:
        n = constant_field(config.n)
    if config.density == "graded":
        rho = graded_density(config.density_min, config.density_span, *config.density_extent)
    else:
        rho = constant_field(config.rho_int)
    return MaterialModel(exterior=ExteriorMedium.from_wavenumber(k_ext, rho_ext=config.rho_ext, c_ext=config.c_ext),
                         refractivity={d: n for d in domains},
                         density={d: rho for d in domains})


def build_wave(config: WaveConfig, k_ext: float) -> IncidentWave:
    return IncidentWave.along(config.direction, k_ext, config.amplitude)


def compare_preset(name: str) -> List[GridEntry]:
    """
    Formulation grids of the comparison studies.

    Raises:
        ConfigError: For an unknown preset
    """
    osrc_only = {"theta": "osrc_dtn", "sigma": "osrc_ntd"}
    presets = {
        "nu_study": [GridEntry(nu=0.0), GridEntry(nu=1.0)],
        "space_study": [GridEntry(theta_space="P1", recipe={"p": "ilu_inner+osrc_surface", "sigma": "osrc_ntd"}),
                        GridEntry(theta_space="P0", recipe={"p": "ilu_inner+osrc_surface", "sigma": "osrc_ntd"})],
        "osrc_prec": [GridEntry(recipe={}, label="none"),
                      GridEntry(recipe={"theta": "mass", "sigma": "mass"}, label="mass"),
                      GridEntry(recipe=osrc_only, label="osrc")],
        "ilu_study": [GridEntry(recipe=osrc_only, label="osrc"),
                      GridEntry(recipe={"p": "ilu_all", **osrc_only}, label="osrc+ilu_all"),
                      GridEntry(recipe={"p": "ilu_inner+osrc_surface", **osrc_only}, label="osrc+ilu_inner")],
        "permutation_study": [GridEntry(variant="base"), GridEntry(variant="permuted_base"),
                              GridEntry(variant="permuted", nu=1.0), GridEntry(variant="permuted_alt_reg")],
    }
    if name not in presets:
        raise ConfigError(f"unknown compare preset '{name}', expected one of {sorted(presets)}")
    return presets[name]
