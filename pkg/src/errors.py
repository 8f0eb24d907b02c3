#!/usr/bin/env python3
"""
Errors Module
Handles the exception hierarchy shared by assembly, solvers and the CLI
"""


class FemBemError(Exception):
    """Base class for every error raised by the solver library."""


class MeshError(FemBemError, ValueError):
    """Mesh parse failure, unsupported cell type or broken mesh invariant."""


class MaterialError(FemBemError, ValueError):
    """Non-positive density or refractivity sampled at a quadrature point."""


class GeometryError(FemBemError, ValueError):
    """Invalid point placement: coincident points, too close to a surface, inside a domain."""


class SpacePairingError(FemBemError, ValueError):
    """Operator or preconditioner requested on spaces it is not defined for."""


class FormulationError(FemBemError, ValueError):
    """Invalid stabilisation parameters or variant/regulariser combination."""


class FactorizationError(FemBemError, RuntimeError):
    """A sparse factorization failed."""


class IluBreakdownError(FactorizationError):
    """Zero pivot encountered after threshold dropping."""


class SingularMatrixError(FemBemError, RuntimeError):
    """Dense LU pivot fell below the singularity threshold."""


class ScaleGuardError(FemBemError, RuntimeError):
    """Problem size exceeds the desk-scale guard."""


class ConfigError(FemBemError, ValueError):
    """Run configuration failed validation."""
