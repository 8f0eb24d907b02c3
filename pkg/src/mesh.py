#!/usr/bin/env python3
"""
Mesh Module
Handles matched tetrahedral/triangular meshes, Gmsh import/export and the
trace/restriction maps between volume and surface degrees of freedom
"""

import logging
import itertools
import numpy as np
import scipy.sparse as sp
import meshio
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from errors import MeshError
from vtk_io import write_vtk_legacy

logger = logging.getLogger(__name__)

# Local vertex triples of the four tetrahedron faces; face i is opposite vertex i
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])

SUPPORTED_LOWER_DIM_CELLS = {"vertex", "line", "triangle"}


@dataclass(frozen=True, eq=False)
class Surface:
    """
    Closed triangulated boundary of one bounded domain.

    Attributes:
        domain (int): Domain id owning this surface
        points (np.ndarray): Surface vertex coordinates, shape (Ns, 3)
        node_ids (np.ndarray): Volume vertex index of every surface vertex, ascending
        triangles (np.ndarray): Local vertex indices per triangle, shape (F, 3), outward oriented
        normals (np.ndarray): Unit outward normals per triangle, shape (F, 3)
    """
    domain: int
    points: np.ndarray
    node_ids: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (F, 3, 3)."""
        return self.points[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        edges = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
        return np.linalg.norm(edges, axis=2).max(axis=1)

    @property
    def max_diameter(self) -> float:
        return float(self.diameters.max())

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """
        In-plane gradients of the three P1 hat functions per triangle, shape (F, 3, 3).

        Uses the metric-tensor dual basis, so the result does not depend on the
        triangle orientation.
        """
        c = self.corners
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        g11 = np.einsum('fi,fi->f', e1, e1)
        g12 = np.einsum('fi,fi->f', e1, e2)
        g22 = np.einsum('fi,fi->f', e2, e2)
        det = g11 * g22 - g12 ** 2
        grad1 = (g22[:, None] * e1 - g12[:, None] * e2) / det[:, None]
        grad2 = (g11[:, None] * e2 - g12[:, None] * e1) / det[:, None]
        grad0 = -grad1 - grad2
        return np.stack([grad0, grad1, grad2], axis=1)

    @cached_property
    def hat_curls(self) -> np.ndarray:
        """Surface curls n x grad of the hat functions, shape (F, 3, 3)."""
        return np.cross(self.normals[:, None, :], self.hat_gradients)

    @cached_property
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Tetrahedral volume mesh with the matched boundary triangulation of every domain.

    Surface-only meshes (no tetrahedra) are allowed for spectral checks on
    closed surfaces; they carry triangles but no volume degrees of freedom.
    """
    vertices: np.ndarray
    tetrahedra: np.ndarray
    tet_domains: np.ndarray
    surface_triangles: np.ndarray
    triangle_normals: np.ndarray
    triangle_domains: np.ndarray
    _surfaces: Dict[int, Surface] = field(default_factory=dict, repr=False)

    @property
    def domain_ids(self) -> List[int]:
        return sorted(int(d) for d in np.unique(self.triangle_domains))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def domain_tetrahedra(self, domain: int) -> np.ndarray:
        return self.tetrahedra[self.tet_domains == domain]

    def volume_nodes(self, domain: int) -> np.ndarray:
        """Ascending vertex ids carrying the volume P1 space of a domain."""
        return np.unique(self.domain_tetrahedra(domain))

    def surface(self, domain: int) -> Surface:
        """Return the (cached) Surface of a domain."""
        if domain not in self._surfaces:
            mask = self.triangle_domains == domain
            if not mask.any():
                raise MeshError(f"domain {domain} has no surface triangles")
            tris = self.surface_triangles[mask]
            node_ids = np.unique(tris)
            local = np.searchsorted(node_ids, tris)
            self._surfaces[domain] = Surface(
                domain=domain,
                points=self.vertices[node_ids],
                node_ids=node_ids,
                triangles=local,
                normals=self.triangle_normals[mask],
            )
        return self._surfaces[domain]

    @cached_property
    def tet_volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.tetrahedra)

    @cached_property
    def max_tet_diameter(self) -> float:
        if len(self.tetrahedra) == 0:
            return 0.0
        c = self.vertices[self.tetrahedra]
        pairs = list(itertools.combinations(range(4), 2))
        lengths = np.stack([np.linalg.norm(c[:, a] - c[:, b], axis=1) for a, b in pairs], axis=1)
        return float(lengths.max())


@dataclass(frozen=True, eq=False)
class RestrictionMaps:
    """
    Sparse 0/1 maps from the volume P1 coefficients of one domain.

    Attributes:
        Z (sp.csr_matrix): Volume coefficients to surface P1 coefficients
        Zbar (sp.csr_matrix): Volume coefficients to interior-node coefficients
        volume_nodes (np.ndarray): Vertex ids of the volume space, ascending
        interior_nodes (np.ndarray): Vertex ids not on the surface, ascending
    """
    Z: sp.csr_matrix
    Zbar: sp.csr_matrix
    volume_nodes: np.ndarray
    interior_nodes: np.ndarray


def signed_volumes(vertices: np.ndarray, tetrahedra: np.ndarray) -> np.ndarray:
    """Signed volumes of tetrahedra, positive for right-handed vertex order."""
    if len(tetrahedra) == 0:
        return np.zeros(0)
    c = vertices[tetrahedra]
    return np.einsum('ti,ti->t', c[:, 1] - c[:, 0],
                     np.cross(c[:, 2] - c[:, 0], c[:, 3] - c[:, 0])) / 6.0


def _orient_tetrahedra(vertices: np.ndarray, tetrahedra: np.ndarray) -> np.ndarray:
    vols = signed_volumes(vertices, tetrahedra)
    scale = max(float(np.abs(vols).max(initial=0.0)), 1e-300)
    degenerate = np.abs(vols) <= 1e-14 * scale
    if degenerate.any():
        bad = int(np.flatnonzero(degenerate)[0])
        raise MeshError(f"degenerate tetrahedron {bad}: {tetrahedra[bad].tolist()}")
    tets = tetrahedra.copy()
    flip = vols < 0
    tets[flip, 2], tets[flip, 3] = tetrahedra[flip, 3], tetrahedra[flip, 2]
    return tets


def _boundary_faces(vertices: np.ndarray, tets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Extract boundary faces of a tetrahedral domain by face-incidence count.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Outward oriented triangles (vertex ids) and unit normals
    """
    faces = tets[:, TET_FACES].reshape(-1, 3)
    opposite = tets.reshape(-1)
    keys = np.sort(faces, axis=1)
    unique, index, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)

    if (counts > 2).any():
        bad = unique[np.flatnonzero(counts > 2)[0]]
        raise MeshError(f"non-watertight boundary: face {bad.tolist()} shared by more than two tetrahedra")

    chosen = index[counts == 1]
    tris = faces[chosen].copy()
    opp = opposite[chosen]

    c = vertices[tris]
    normals = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    inward = np.einsum('fi,fi->f', normals, c[:, 0] - vertices[opp]) < 0
    tris[inward, 1], tris[inward, 2] = tris[inward, 2].copy(), tris[inward, 1].copy()
    normals[inward] *= -1.0
    normals /= np.linalg.norm(normals, axis=1)[:, None]

    _check_closed(tris)
    return tris, normals


def _check_closed(tris: np.ndarray):
    """Every boundary edge must be shared by exactly two boundary triangles."""
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    unique, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    bad_edges = np.flatnonzero(counts != 2)
    if len(bad_edges):
        owner = np.flatnonzero(inverse.ravel() == bad_edges[0])[0] % len(tris)
        raise MeshError(f"non-watertight boundary: face {tris[owner].tolist()} "
                        f"has edge {unique[bad_edges[0]].tolist()} used {counts[bad_edges[0]]} times")


def mesh_from_tetrahedra(vertices: np.ndarray, tetrahedra: np.ndarray,
                         tet_domains: np.ndarray = None) -> Mesh:
    """
    Build a Mesh from raw tetrahedra: orient them and extract each domain's boundary.

    Args:
        vertices (np.ndarray): Vertex coordinates, shape (N, 3)
        tetrahedra (np.ndarray): Vertex indices, shape (T, 4)
        tet_domains (np.ndarray): Domain id per tetrahedron (default all 1)

    Returns:
        Mesh: Validated mesh
    """
    vertices = np.asarray(vertices, dtype=float)
    tetrahedra = np.asarray(tetrahedra, dtype=np.int64).reshape(-1, 4)
    if tet_domains is None:
        tet_domains = np.ones(len(tetrahedra), dtype=np.int64)
    tet_domains = np.asarray(tet_domains, dtype=np.int64)

    tets = _orient_tetrahedra(vertices, tetrahedra)
    tris, normals, domains = [], [], []
    for domain in np.unique(tet_domains):
        t, n = _boundary_faces(vertices, tets[tet_domains == domain])
        tris.append(t)
        normals.append(n)
        domains.append(np.full(len(t), domain, dtype=np.int64))

    mesh = Mesh(vertices=vertices, tetrahedra=tets, tet_domains=tet_domains,
                surface_triangles=np.concatenate(tris), triangle_normals=np.concatenate(normals),
                triangle_domains=np.concatenate(domains))
    validate_mesh(mesh)
    return mesh


def validate_mesh(mesh: Mesh, tol: float = 1e-12):
    """
    Check the Mesh invariants.

    Raises:
        MeshError: If volumes are non-positive, normals are not unit outward, or
                   surface vertices differ from the boundary vertices of the volume
    """
    if len(mesh.tetrahedra) and (mesh.tet_volumes <= 0).any():
        bad = int(np.flatnonzero(mesh.tet_volumes <= 0)[0])
        raise MeshError(f"tetrahedron {bad} has non-positive volume")

    norms = np.linalg.norm(mesh.triangle_normals, axis=1)
    if np.abs(norms - 1.0).max(initial=0.0) > tol:
        raise MeshError("triangle normals are not unit length")

    c = mesh.vertices[mesh.surface_triangles]
    recomputed = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    recomputed /= np.linalg.norm(recomputed, axis=1)[:, None]
    if np.abs(recomputed - mesh.triangle_normals).max(initial=0.0) > 1e-10:
        raise MeshError("stored normals disagree with triangle orientation")

    for domain in np.unique(mesh.tet_domains):
        tets = mesh.domain_tetrahedra(domain)
        keys = np.sort(tets[:, TET_FACES].reshape(-1, 3), axis=1)
        unique, counts = np.unique(keys, axis=0, return_counts=True)
        boundary_nodes = np.unique(unique[counts == 1])
        surface_nodes = np.unique(mesh.surface_triangles[mesh.triangle_domains == domain])
        if not np.array_equal(boundary_nodes, surface_nodes):
            raise MeshError(f"domain {domain}: surface vertices differ from boundary vertices")


def build_cube_mesh(subdivisions: int, origin: Sequence[float] = (0.0, 0.0, 0.0),
                    edge_length: float = 1.0, domain: int = 1) -> Mesh:
    """
    Structured cube mesh with every voxel split into the 6 Kuhn tetrahedra.

    Args:
        subdivisions (int): Voxels per edge (>= 1)
        origin (Sequence[float]): Lower corner of the cube
        edge_length (float): Edge length
        domain (int): Domain id given to all cells

    Returns:
        Mesh: (n+1)^3 vertices, 6n^3 tetrahedra, 12n^2 surface triangles
    """
    if subdivisions < 1:
        raise MeshError("subdivisions must be >= 1")
    n = subdivisions
    grid = np.arange(n + 1, dtype=float) * (edge_length / n)
    gx, gy, gz = np.meshgrid(grid, grid, grid, indexing='ij')
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1) + np.asarray(origin, dtype=float)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing='ij')
    base = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)

    tets = []
    for perm in itertools.permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] += 1
            path.append(step)
        corners = [base + offset for offset in path]
        tets.append(np.stack([vid(c[:, 0], c[:, 1], c[:, 2]) for c in corners], axis=1))
    tetrahedra = np.concatenate(tets)

    mesh = mesh_from_tetrahedra(vertices, tetrahedra, np.full(len(tetrahedra), domain))
    logger.debug(f"Cube mesh: {mesh.n_vertices} vertices, {len(mesh.tetrahedra)} tetrahedra")
    return mesh


def build_ball_mesh(subdivisions: int, radius: float = 1.0,
                    center: Sequence[float] = (0.0, 0.0, 0.0), domain: int = 1) -> Mesh:
    """
    Ball mesh obtained by mapping the Kuhn mesh of [-1,1]^3 radially onto the ball.

    Each cube shell |p|_inf = s is sent to the sphere of radius s*radius, so the
    boundary vertices lie exactly on the sphere.
    """
    cube = build_cube_mesh(subdivisions, origin=(-1.0, -1.0, -1.0), edge_length=2.0, domain=domain)
    p = cube.vertices
    inf_norm = np.abs(p).max(axis=1)
    two_norm = np.linalg.norm(p, axis=1)
    scale = np.divide(inf_norm, two_norm, out=np.ones_like(two_norm), where=two_norm > 0)
    vertices = p * scale[:, None] * radius + np.asarray(center, dtype=float)
    return mesh_from_tetrahedra(vertices, cube.tetrahedra, cube.tet_domains)


def build_icosphere(refinements: int, radius: float = 1.0,
                    center: Sequence[float] = (0.0, 0.0, 0.0), domain: int = 1) -> Mesh:
    """Surface-only mesh of a sphere from a subdivided icosahedron."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.asarray(v, dtype=float) / np.linalg.norm(v) for v in verts]

    for _ in range(refinements):
        midpoint = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces

    vertices = np.array(verts) * radius + np.asarray(center, dtype=float)
    tris = np.array(faces, dtype=np.int64)
    c = vertices[tris]
    normals = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    inward = np.einsum('fi,fi->f', normals, c.mean(axis=1) - np.asarray(center, dtype=float)) < 0
    tris[inward, 1], tris[inward, 2] = tris[inward, 2].copy(), tris[inward, 1].copy()
    normals[inward] *= -1.0
    normals /= np.linalg.norm(normals, axis=1)[:, None]

    return Mesh(vertices=vertices, tetrahedra=np.zeros((0, 4), dtype=np.int64),
                tet_domains=np.zeros(0, dtype=np.int64), surface_triangles=tris,
                triangle_normals=normals, triangle_domains=np.full(len(tris), domain, dtype=np.int64))


def translate_mesh(mesh: Mesh, offset: Sequence[float]) -> Mesh:
    """Copy of a mesh shifted by a constant offset."""
    return Mesh(vertices=mesh.vertices + np.asarray(offset, dtype=float),
                tetrahedra=mesh.tetrahedra.copy(), tet_domains=mesh.tet_domains.copy(),
                surface_triangles=mesh.surface_triangles.copy(),
                triangle_normals=mesh.triangle_normals.copy(),
                triangle_domains=mesh.triangle_domains.copy())


def merge_meshes(meshes: Sequence[Mesh]) -> Mesh:
    """
    Concatenate meshes into one multi-domain mesh.

    Domains are renumbered 1, 2, ... in input order (domains of one input keep
    their relative order).
    """
    vertices, tets, tet_domains, tris, normals, tri_domains = [], [], [], [], [], []
    offset = 0
    next_domain = 1
    for mesh in meshes:
        relabel = {d: next_domain + i for i, d in enumerate(mesh.domain_ids)}
        next_domain += len(relabel)
        vertices.append(mesh.vertices)
        tets.append(mesh.tetrahedra + offset)
        tet_domains.append(np.array([relabel[int(d)] for d in mesh.tet_domains], dtype=np.int64))
        tris.append(mesh.surface_triangles + offset)
        normals.append(mesh.triangle_normals)
        tri_domains.append(np.array([relabel[int(d)] for d in mesh.triangle_domains], dtype=np.int64))
        offset += mesh.n_vertices
    return Mesh(vertices=np.concatenate(vertices), tetrahedra=np.concatenate(tets),
                tet_domains=np.concatenate(tet_domains), surface_triangles=np.concatenate(tris),
                triangle_normals=np.concatenate(normals), triangle_domains=np.concatenate(tri_domains))


def import_msh(path: str) -> Mesh:
    """
    Import a Gmsh MSH 2.2 ASCII file with tetrahedral physical volumes.

    Args:
        path (str): Path to the .msh file

    Returns:
        Mesh: One domain per physical volume tag

    Raises:
        MeshError: On parse failure, unsupported cell types or a non-watertight boundary
    """
    try:
        data = meshio.read(str(path), file_format="gmsh")
    except Exception as e:
        raise MeshError(f"failed to parse {path}: {e}") from e

    physical = data.cell_data.get("gmsh:physical")
    tets, domains = [], []
    for block_index, block in enumerate(data.cells):
        if block.type == "tetra":
            tets.append(np.asarray(block.data, dtype=np.int64))
            if physical is not None:
                domains.append(np.asarray(physical[block_index], dtype=np.int64))
            else:
                domains.append(np.ones(len(block.data), dtype=np.int64))
        elif block.type not in SUPPORTED_LOWER_DIM_CELLS:
            raise MeshError(f"unsupported cell type '{block.type}' in {path}")

    if not tets:
        raise MeshError(f"no tetrahedral cells in {path}")
    tetrahedra = np.concatenate(tets)
    tet_domains = np.concatenate(domains)

    used = np.unique(tetrahedra)
    vertices = np.asarray(data.points, dtype=float)[used, :3]
    tetrahedra = np.searchsorted(used, tetrahedra)

    mesh = mesh_from_tetrahedra(vertices, tetrahedra, tet_domains)
    logger.info(f"Imported {path}: {mesh.n_vertices} vertices, {len(mesh.tetrahedra)} tetrahedra, "
                f"domains {mesh.domain_ids}")
    return mesh


def export_msh(mesh: Mesh, path: str) -> Path:
    """Write the volume mesh as MSH 2.2 ASCII with one physical volume per domain."""
    tags = mesh.tet_domains.astype(np.int32)
    out = meshio.Mesh(points=mesh.vertices, cells=[("tetra", mesh.tetrahedra)],
                      cell_data={"gmsh:physical": [tags], "gmsh:geometrical": [tags]})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(str(path), out, file_format="gmsh22", binary=False)
    return path


def write_mesh_vtk(mesh: Mesh, path: str) -> Path:
    """Dump the surface triangulation with domain ids for inspection."""
    return write_vtk_legacy(path, mesh.vertices, mesh.surface_triangles, "triangle",
                            cell_data={"domain": mesh.triangle_domains})


def build_restrictions(mesh: Mesh, domain: int) -> RestrictionMaps:
    """
    Build the trace map Z and interior map Zbar of one domain.

    Rows of Z follow the surface P1 ordering (ascending volume vertex id),
    rows of Zbar the ascending interior vertex ids.
    """
    volume_nodes = mesh.volume_nodes(domain)
    if len(volume_nodes) == 0:
        raise MeshError(f"domain {domain} has no tetrahedra")
    surface = mesh.surface(domain)
    n_vol = len(volume_nodes)

    surface_cols = np.searchsorted(volume_nodes, surface.node_ids)
    Z = sp.csr_matrix((np.ones(len(surface_cols)), (np.arange(len(surface_cols)), surface_cols)),
                      shape=(len(surface_cols), n_vol))

    interior_nodes = np.setdiff1d(volume_nodes, surface.node_ids)
    interior_cols = np.searchsorted(volume_nodes, interior_nodes)
    Zbar = sp.csr_matrix((np.ones(len(interior_cols)), (np.arange(len(interior_cols)), interior_cols)),
                         shape=(len(interior_cols), n_vol))
    return RestrictionMaps(Z=Z, Zbar=Zbar, volume_nodes=volume_nodes, interior_nodes=interior_nodes)


def mesh_summary(mesh: Mesh) -> Dict:
    """Counts and sizes reported by the mesh-info command."""
    summary = {
        "vertices": mesh.n_vertices,
        "tetrahedra": len(mesh.tetrahedra),
        "max_tet_diameter": mesh.max_tet_diameter,
        "domains": [],
    }
    for domain in mesh.domain_ids:
        surface = mesh.surface(domain)
        summary["domains"].append({
            "domain": domain,
            "volume_dofs": len(mesh.volume_nodes(domain)),
            "surface_p1_dofs": surface.n_nodes,
            "surface_p0_dofs": surface.n_triangles,
            "max_surface_diameter": surface.max_diameter,
            "surface_area": surface.total_area,
        })
    return summary


RAY_CHUNK_ENTRIES = 2_000_000
RAY_EPS = 1e-10


def _ray_crossings(surface: Surface, points: np.ndarray, direction: np.ndarray):
    """Crossing counts of rays from points along direction, plus a degenerate-hit flag."""
    c = surface.corners
    e1 = c[:, 1] - c[:, 0]
    e2 = c[:, 2] - c[:, 0]
    pvec = np.cross(direction, e2)
    det = np.einsum('fi,fi->f', e1, pvec)
    parallel = np.abs(det) < RAY_EPS
    inv_det = np.where(parallel, 0.0, 1.0 / np.where(parallel, 1.0, det))

    counts = np.zeros(len(points), dtype=int)
    degenerate = np.zeros(len(points), dtype=bool)
    step = max(1, RAY_CHUNK_ENTRIES // max(1, surface.n_triangles))
    for p0 in range(0, len(points), step):
        tvec = points[p0:p0 + step, None, :] - c[None, :, 0]
        u = np.einsum('pfi,fi->pf', tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1[None])
        v = np.einsum('i,pfi->pf', direction, qvec) * inv_det
        t = np.einsum('fi,pfi->pf', e2, qvec) * inv_det
        inside = (u >= -RAY_EPS) & (v >= -RAY_EPS) & (u + v <= 1 + RAY_EPS) & (t >= -RAY_EPS) & ~parallel
        edge = inside & ((np.abs(u) < RAY_EPS) | (np.abs(v) < RAY_EPS) | (np.abs(u + v - 1) < RAY_EPS)
                         | (np.abs(t) < RAY_EPS))
        counts[p0:p0 + step] = inside.sum(axis=1)
        degenerate[p0:p0 + step] = edge.any(axis=1)
    return counts, degenerate


def points_inside(surface: Surface, points: np.ndarray, seed: int = 0, max_retries: int = 8) -> np.ndarray:
    """
    Ray-parity test for points against a closed surface.

    Rays that graze an edge, a vertex or start on the surface are re-cast in a
    direction perturbed by a fixed-seed generator.

    Returns:
        np.ndarray: Boolean mask, True for points strictly enclosed by the surface
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rng = np.random.default_rng(seed)
    direction = np.array([0.5773502691896258, 0.5773502691896258, 0.5773502691896258])
    direction = direction + 1e-3 * np.array([0.31, -0.17, 0.05])
    result = np.zeros(len(points), dtype=bool)
    todo = np.arange(len(points))
    for _ in range(max_retries + 1):
        counts, degenerate = _ray_crossings(surface, points[todo], direction / np.linalg.norm(direction))
        done = ~degenerate
        result[todo[done]] = counts[done] % 2 == 1
        todo = todo[degenerate]
        if len(todo) == 0:
            break
        direction = rng.standard_normal(3)
    else:
        logger.warning(f"{len(todo)} points stayed degenerate for ray casting; treated as outside")
    return result
