#!/usr/bin/env python3
"""
Postprocess Module
Handles field sampling on planes and surfaces, error norms, result tables and
VTK/CSV file output
"""

import logging
import numpy as np
import pandas as pd
from dataclasses import dataclass
from pathlib import Path
from sklearn.neighbors import KDTree
from typing import Dict, List, Optional, Sequence, Union

from bem_kernels import near_surface_mask
from formulations import FormulationSystem, reconstruct_exterior
from linsolve import SolveReport
from mesh import Mesh, Surface, points_inside
from vtk_io import write_vtk_legacy

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["k", "formulation", "variant", "preconditioner", "iterations", "condition_number", "wall_time_s"]
EXTERIOR, INTERIOR, MASKED = 0, 1, 2
CANDIDATE_TETS = 16


@dataclass(frozen=True, eq=False)
class FieldSlice:
    """
    Complex field sampled on a rectangular patch of a plane.

    Attributes:
        origin (np.ndarray): Corner of the patch
        axis_u (np.ndarray): First edge vector of the patch
        axis_v (np.ndarray): Second edge vector of the patch
        resolution (int): Samples per edge
        points (np.ndarray): Sample points, u fastest, shape (resolution^2, 3)
        values (np.ndarray): Total pressure, 0 where masked
        mask (np.ndarray): EXTERIOR, INTERIOR or MASKED per sample
    """
    origin: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    resolution: int
    points: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    @property
    def unmasked(self) -> np.ndarray:
        return self.mask != MASKED

    def quads(self) -> np.ndarray:
        """Quad connectivity of the sample grid."""
        n = self.resolution
        i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing='xy')
        a = (j * n + i).ravel()
        return np.stack([a, a + 1, a + n + 1, a + n], axis=1)


@dataclass(frozen=True, eq=False)
class SurfaceField:
    """Nodal P1 values on one surface."""
    surface: Surface
    values: np.ndarray
    name: str = "pressure"


def plane_points(origin: Sequence[float], axis_u: Sequence[float], axis_v: Sequence[float],
                 resolution: int) -> np.ndarray:
    """Regular resolution x resolution grid on the patch origin + s u + t v, s, t in [0, 1]."""
    if resolution < 2:
        raise ValueError(f"resolution must be at least 2, got {resolution}")
    s = np.linspace(0.0, 1.0, resolution)
    ss, tt = np.meshgrid(s, s, indexing='xy')
    return (np.asarray(origin, dtype=float)[None, :] + ss.ravel()[:, None] * np.asarray(axis_u, dtype=float)
            + tt.ravel()[:, None] * np.asarray(axis_v, dtype=float))


def classify_points(mesh: Mesh, points: np.ndarray, width: Optional[float] = None) -> Dict[str, np.ndarray]:
    """
    Locate points relative to the domains of a mesh.

    Args:
        mesh (Mesh): Mesh with one or more domains
        points (np.ndarray): Query points (N, 3)
        width (float): Near-surface band width; defaults to the largest surface element diameter

    Returns:
        Dict[str, np.ndarray]: 'domain' (0 outside every domain) and 'near' (inside the band)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    surfaces = [mesh.surface(d) for d in mesh.domain_ids]
    if width is None:
        width = max(s.max_diameter for s in surfaces)
    domain = np.zeros(len(points), dtype=int)
    for s in surfaces:
        domain[(domain == 0) & points_inside(s, points)] = s.domain
    return {"domain": domain, "near": near_surface_mask(surfaces, points, width)}


def interpolate_volume(mesh: Mesh, domain: int, nodal: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    P1 interpolation of volume coefficients (ordered by the domain's volume nodes) at interior points.

    Candidate tetrahedra come from a KDTree over tetrahedron centroids; the
    one with the largest minimal barycentric coordinate is used.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tets = mesh.domain_tetrahedra(domain)
    volume_nodes = mesh.volume_nodes(domain)
    corners = mesh.vertices[tets]
    tree = KDTree(corners.mean(axis=1))
    _, candidates = tree.query(points, k=min(CANDIDATE_TETS, len(tets)))

    c = corners[candidates]
    T = np.stack([c[:, :, 1] - c[:, :, 0], c[:, :, 2] - c[:, :, 0], c[:, :, 3] - c[:, :, 0]], axis=-1)
    rhs = points[:, None, :] - c[:, :, 0]
    lam = np.linalg.solve(T, rhs[..., None])[..., 0]
    bary = np.concatenate([1.0 - lam.sum(axis=-1, keepdims=True), lam], axis=-1)
    best = np.argmax(bary.min(axis=-1), axis=1)
    rows = np.arange(len(points))
    chosen = tets[candidates[rows, best]]
    weights = bary[rows, best]
    local = np.searchsorted(volume_nodes, chosen)
    return np.sum(weights * np.asarray(nodal)[local], axis=1)


def sample_plane(system: FormulationSystem, solution: np.ndarray, origin: Sequence[float],
                 axis_u: Sequence[float], axis_v: Sequence[float], resolution: int = 41,
                 width: Optional[float] = None) -> FieldSlice:
    """
    Sample the total field on a plane patch.

    Interior points use P1 interpolation of p, exterior points the
    representation formula; the band within one element diameter of a surface
    is masked.

    Args:
        system (FormulationSystem): Assembled system
        solution (np.ndarray): Solution vector
        origin (Sequence[float]): Patch corner
        axis_u (Sequence[float]): First patch edge
        axis_v (Sequence[float]): Second patch edge
        resolution (int): Samples per edge
        width (float): Near-surface band width

    Returns:
        FieldSlice: Sampled values and mask
    """
    points = plane_points(origin, axis_u, axis_v, resolution)
    where = classify_points(system.mesh, points, width)
    parts = system.split(np.asarray(solution))
    values = np.zeros(len(points), dtype=complex)
    mask = np.where(where["domain"] > 0, INTERIOR, EXTERIOR)
    mask[where["near"]] = MASKED

    for d in system.contexts:
        selected = (where["domain"] == d) & ~where["near"]
        if selected.any():
            values[selected] = interpolate_volume(system.mesh, d, parts[("p", d)], points[selected])
    exterior = mask == EXTERIOR
    if exterior.any():
        values[exterior] = reconstruct_exterior(system, solution, points[exterior], check_points=False)
    logger.info(f"Sampled {resolution}x{resolution} plane: {int(exterior.sum())} exterior, "
                f"{int((mask == INTERIOR).sum())} interior, {int((mask == MASKED).sum())} masked")
    return FieldSlice(np.asarray(origin, dtype=float), np.asarray(axis_u, dtype=float),
                      np.asarray(axis_v, dtype=float), resolution, points, values, mask)


def surface_trace(system: FormulationSystem, solution: np.ndarray, domain: int) -> SurfaceField:
    """Total pressure trace Z p on the surface of a domain."""
    ctx = system.contexts[domain]
    return SurfaceField(ctx.surface, ctx.maps.Z @ system.split(np.asarray(solution))[("p", domain)])


def relative_error(values: np.ndarray, reference: np.ndarray) -> float:
    """
    ||values - reference||_2 / ||reference||_2

    Raises:
        ValueError: For unequal lengths or a zero reference
    """
    values, reference = np.ravel(values), np.ravel(reference)
    if values.shape != reference.shape:
        raise ValueError(f"length mismatch: {values.shape[0]} vs {reference.shape[0]}")
    norm = np.linalg.norm(reference)
    if norm == 0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm(values - reference) / norm)


def report_row(report: Union[SolveReport, Dict]) -> Dict:
    """CSV record of one solve; failed rows carry iterations = -1."""
    if isinstance(report, dict):
        return {column: report.get(column) for column in REPORT_COLUMNS}
    meta = report.metadata
    return {
        "k": meta.get("k"),
        "formulation": meta.get("formulation", ""),
        "variant": meta.get("variant", ""),
        "preconditioner": meta.get("preconditioner", "none"),
        "iterations": report.iterations,
        "condition_number": report.condition_number,
        "wall_time_s": report.wall_time_s,
    }


def create_results_table(reports: Sequence[Union[SolveReport, Dict]]) -> pd.DataFrame:
    """
    Build the results table with the fixed CSV header.

    Args:
        reports: SolveReports or records with the header keys

    Returns:
        pd.DataFrame: One row per report; an empty input keeps the columns
    """
    if not reports:
        return pd.DataFrame(columns=REPORT_COLUMNS)
    return pd.DataFrame([report_row(r) for r in reports], columns=REPORT_COLUMNS)


def read_report_csv(path: str) -> List[Dict]:
    """Parse a results CSV back into records (empty condition numbers become None)."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    records = []
    for row in df.to_dict(orient="records"):
        records.append({
            "k": float(row["k"]),
            "formulation": row["formulation"],
            "variant": row["variant"],
            "preconditioner": row["preconditioner"],
            "iterations": int(row["iterations"]),
            "condition_number": float(row["condition_number"]) if row["condition_number"] else None,
            "wall_time_s": float(row["wall_time_s"]),
        })
    return records


def write_outputs(item, path: str, fmt: Optional[str] = None) -> Path:
    """
    Write a field slice, a surface field or a report series.

    Args:
        item: FieldSlice, SurfaceField, or a sequence of SolveReports/records
        path (str): Output path
        fmt (str): 'vtk' or 'csv'; inferred from the suffix when omitted

    Returns:
        Path: The written file
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip('.')).lower()
    if fmt not in ("vtk", "csv"):
        raise ValueError(f"unsupported output format '{fmt}'")
    path.parent.mkdir(parents=True, exist_ok=True)

    if isinstance(item, FieldSlice):
        if fmt == "vtk":
            return write_vtk_legacy(path, item.points, item.quads(), "quad",
                                    point_data={"pressure": item.values, "mask": item.mask.astype(np.int32)})
        df = pd.DataFrame({"x": item.points[:, 0], "y": item.points[:, 1], "z": item.points[:, 2],
                           "real": item.values.real, "imag": item.values.imag, "mask": item.mask})
        df.to_csv(path, index=False)
        return path
    if isinstance(item, SurfaceField):
        if fmt == "vtk":
            return write_vtk_legacy(path, item.surface.points, item.surface.triangles, "triangle",
                                    point_data={item.name: item.values})
        pts = item.surface.points
        pd.DataFrame({"x": pts[:, 0], "y": pts[:, 1], "z": pts[:, 2], "real": np.real(item.values),
                      "imag": np.imag(item.values)}).to_csv(path, index=False)
        return path
    if fmt != "csv":
        raise ValueError("report series are written as CSV")
    create_results_table(list(item)).to_csv(path, index=False)
    return path
