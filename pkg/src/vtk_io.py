#!/usr/bin/env python3
"""
VTK Output Module
Handles VTK legacy ASCII unstructured-grid files for meshes and sampled fields
"""

import meshio
import numpy as np
from pathlib import Path
from typing import Dict, Optional


def _split_complex(data: Optional[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
    """Complex arrays become <name>_real and <name>_imag."""
    out = {}
    for name, values in (data or {}).items():
        values = np.asarray(values)
        if np.iscomplexobj(values):
            out[f"{name}_real"] = np.ascontiguousarray(values.real, dtype=float)
            out[f"{name}_imag"] = np.ascontiguousarray(values.imag, dtype=float)
        elif np.issubdtype(values.dtype, np.integer):
            out[name] = values.astype(np.int32)
        else:
            out[name] = values.astype(float)
    return out


def write_vtk_legacy(path: str, points: np.ndarray, cells: np.ndarray, cell_type: str,
                     point_data: Optional[Dict[str, np.ndarray]] = None,
                     cell_data: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """
    Write an unstructured grid as a VTK legacy ASCII file.

    Args:
        path (str): Output file path
        points (np.ndarray): Point coordinates, shape (N, 3)
        cells (np.ndarray): Connectivity, shape (C, nodes_per_cell)
        cell_type (str): meshio cell type ('vertex', 'triangle', 'quad', 'tetra')
        point_data (Dict[str, np.ndarray]): Arrays of length N, complex split into real/imag
        cell_data (Dict[str, np.ndarray]): Arrays of length C, complex split into real/imag

    Returns:
        Path: The written file
    """
    cells = np.asarray(cells, dtype=int)
    if cells.ndim == 1:
        cells = cells.reshape(-1, 1)
    grid = meshio.Mesh(points=np.asarray(points, dtype=float).reshape(-1, 3),
                       cells=[(cell_type, cells)],
                       point_data=_split_complex(point_data),
                       cell_data={name: [values] for name, values in _split_complex(cell_data).items()})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(str(path), grid, file_format="vtk", binary=False)
    return path
