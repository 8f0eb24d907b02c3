#!/usr/bin/env python3
"""
BEM Kernels Module
Handles Galerkin assembly of the Helmholtz boundary integral operators V, K, T, D,
surface mass matrices and the single/double-layer potentials

Conventions: the pairing is bilinear (no conjugation), the Green's function is
exp(ikr)/(4 pi r), and radiating fields are represented as K(gamma_D) - V(gamma_N).
Regular element pairs use tensor Gauss rules evaluated over all quadrature-point
pairs at once; element pairs sharing a vertex are replaced by Sauter-Schwab
corrections.
"""

import logging
import time
import numpy as np
import scipy.sparse as sp
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence
from sklearn.neighbors import KDTree

from errors import GeometryError, SpacePairingError
from mesh import Surface
from quadrature import QuadratureConfig, triangle_rule, sauter_schwab_rule
from spaces import SpaceKind, SpaceTag, DenseOperatorBlock, SparseOperatorBlock

logger = logging.getLogger(__name__)

OPERATOR_KINDS = ("V", "K", "T", "D")
# Upper bound on Green's function entries held per chunk
CHUNK_ENTRIES = 1_000_000
SINGULAR_BATCH_POINTS = 200_000
CLEARANCE_LATTICE = 4


def green(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """
    Helmholtz Green's function exp(ik|x-y|) / (4 pi |x-y|), broadcasting over leading axes.

    Raises:
        GeometryError: If any x coincides with y
    """
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    if np.any(r == 0):
        raise GeometryError("Green's function evaluated at coincident points")
    return np.exp(1j * k * r) / (4.0 * np.pi * r)


@dataclass(frozen=True, eq=False)
class SurfaceQuadrature:
    """Quadrature points of every triangle, flattened triangle-major."""
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    barycentric: np.ndarray
    per_triangle: int


@lru_cache(maxsize=64)
def surface_quadrature(surface: Surface, order: int) -> SurfaceQuadrature:
    lam, w = triangle_rule(order)
    points = np.einsum('qa,fad->fqd', lam, surface.corners).reshape(-1, 3)
    weights = (2.0 * surface.areas[:, None] * w[None, :]).ravel()
    normals = np.repeat(surface.normals, len(w), axis=0)
    return SurfaceQuadrature(points, weights, normals, lam, len(w))


def basis_matrix(surface: Surface, kind: SpaceKind, quad: SurfaceQuadrature,
                 weighted: bool = True) -> sp.csr_matrix:
    """
    Sparse map from space coefficients to values at quadrature points.

    With weighted=True every row is scaled by its quadrature weight, so that
    B_test^T diag(kernel) B_trial is a Galerkin matrix.
    """
    n_tri, q = surface.n_triangles, quad.per_triangle
    scale = quad.weights if weighted else np.ones(len(quad.weights))
    if kind == SpaceKind.SURFACE_P1:
        rows = np.repeat(np.arange(n_tri * q), 3)
        cols = np.repeat(surface.triangles, q, axis=0).ravel()
        vals = (np.tile(quad.barycentric, (n_tri, 1)) * scale[:, None]).ravel()
        shape = (n_tri * q, surface.n_nodes)
    elif kind == SpaceKind.SURFACE_P0:
        rows = np.arange(n_tri * q)
        cols = np.repeat(np.arange(n_tri), q)
        vals = scale
        shape = (n_tri * q, n_tri)
    else:
        raise SpacePairingError(f"{kind.value} is not a surface space")
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def _dense_times_sparse(a: np.ndarray, s: sp.spmatrix) -> np.ndarray:
    return np.asarray((s.T @ a.T).T)


def _curl_matrices(surface: Surface):
    """Per-component sparse maps from P1 coefficients to constant surface curls per triangle."""
    n_tri = surface.n_triangles
    rows = np.repeat(np.arange(n_tri), 3)
    cols = surface.triangles.ravel()
    return [sp.csr_matrix((surface.hat_curls[:, :, c].ravel(), (rows, cols)),
                          shape=(n_tri, surface.n_nodes)) for c in range(3)]


@lru_cache(maxsize=32)
def singular_pairs(surface: Surface) -> Dict[str, tuple]:
    """
    Triangle pairs of a surface sharing at least one vertex, grouped by regime.

    Returns:
        Dict[str, tuple]: regime -> (test triangles, trial triangles, test corner
                          permutation, trial corner permutation) with the shared
                          corners moved to the front in matching order
    """
    tris = surface.triangles
    n_tri = surface.n_triangles
    incidence = sp.csr_matrix((np.ones(3 * n_tri), (np.repeat(np.arange(n_tri), 3), tris.ravel())),
                              shape=(n_tri, surface.n_nodes))
    shared = (incidence @ incidence.T).tocoo()
    ft, fs = shared.row.astype(np.int64), shared.col.astype(np.int64)
    count = np.rint(shared.data).astype(int)
    base = np.arange(3)
    pairs = {}

    sel = count == 3
    ident = np.tile(base, (sel.sum(), 1))
    pairs["coincident"] = (ft[sel], fs[sel], ident, ident.copy())

    sel = count == 2
    a_t, a_s = ft[sel], fs[sel]
    eq = tris[a_t][:, :, None] == tris[a_s][:, None, :]
    other = np.argmin(eq.any(axis=2), axis=1)
    first, second = (other + 1) % 3, (other + 2) % 3
    rows = np.arange(len(a_t))
    pos_first = np.argmax(eq[rows, first, :], axis=1)
    pos_second = np.argmax(eq[rows, second, :], axis=1)
    perm_t = np.stack([first, second, other], axis=1)
    perm_s = np.stack([pos_first, pos_second, 3 - pos_first - pos_second], axis=1)
    pairs["edge"] = (a_t, a_s, perm_t, perm_s)

    sel = count == 1
    a_t, a_s = ft[sel], fs[sel]
    eq = tris[a_t][:, :, None] == tris[a_s][:, None, :]
    i = np.argmax(eq.any(axis=2), axis=1)
    j = np.argmax(eq.any(axis=1), axis=1)
    pairs["vertex"] = (a_t, a_s, (i[:, None] + base) % 3, (j[:, None] + base) % 3)
    return pairs


def _check_pairing(kinds: Sequence[str], test: SpaceTag, trial: SpaceTag):
    for kind in kinds:
        if kind not in OPERATOR_KINDS:
            raise SpacePairingError(f"unknown boundary operator '{kind}'")
    if not (test.on_surface and trial.on_surface):
        raise SpacePairingError("boundary operators act between surface spaces only")
    if "D" in kinds and (test.kind != SpaceKind.SURFACE_P1 or trial.kind != SpaceKind.SURFACE_P1):
        raise SpacePairingError(
            f"unsupported space pairing: D needs P1 test and trial spaces, got {test} x {trial}")


def _assemble_regular(kinds, test_surface, trial_surface, test, trial, k, order, mask_pairs):
    qt = surface_quadrature(test_surface, order)
    qs = surface_quadrature(trial_surface, order)
    q = qt.per_triangle
    bt = basis_matrix(test_surface, test.kind, qt)
    bs = basis_matrix(trial_surface, trial.kind, qs)
    n_rows = bt.shape[1]
    n_cols = bs.shape[1]
    out = {kind: np.zeros((n_rows, n_cols), dtype=complex) for kind in kinds}

    if "D" in kinds:
        curl_t = _curl_matrices(test_surface)
        curl_s = _curl_matrices(trial_surface)
        bt_n = [(sp.diags(qt.normals[:, c]) @ bt).tocsr() for c in range(3)]
        bs_n = [(sp.diags(qs.normals[:, c]) @ bs).tocsr() for c in range(3)]
        wt_tri = qt.weights.reshape(-1, q)
        ws_tri = qs.weights.reshape(-1, q)

    xs = qs.points
    sq_s = np.einsum('ij,ij->i', xs, xs)
    y_dot_ny = np.einsum('ij,ij->i', xs, qs.normals)
    n_trial_tri = trial_surface.n_triangles
    step = max(1, CHUNK_ENTRIES // (len(xs) * q))

    for f0 in range(0, test_surface.n_triangles, step):
        f1 = min(test_surface.n_triangles, f0 + step)
        rows = slice(f0 * q, f1 * q)
        x = qt.points[rows]
        r2 = np.einsum('ij,ij->i', x, x)[:, None] + sq_s[None, :] - 2.0 * (x @ xs.T)
        r = np.sqrt(np.maximum(r2, 0.0))

        mask = None
        if mask_pairs is not None:
            pt, ps = mask_pairs
            sel = (pt >= f0) & (pt < f1)
            mask4 = np.zeros((f1 - f0, q, n_trial_tri, q), dtype=bool)
            mask4[pt[sel] - f0, :, ps[sel], :] = True
            mask = mask4.reshape(r.shape)
            r = np.where(mask, 1.0, r)

        g = np.exp(1j * k * r) / (4.0 * np.pi * r)
        if mask is not None:
            g[mask] = 0.0
        bt_rows = bt[rows]

        if "V" in kinds:
            out["V"] += bt_rows.T @ _dense_times_sparse(g, bs)
        if "K" in kinds or "T" in kinds:
            common = g * (1j * k - 1.0 / r) / r
            if "K" in kinds:
                kernel = common * (y_dot_ny[None, :] - x @ qs.normals.T)
                out["K"] += bt_rows.T @ _dense_times_sparse(kernel, bs)
            if "T" in kinds:
                nx = qt.normals[rows]
                kernel = common * (np.einsum('ij,ij->i', x, nx)[:, None] - nx @ xs.T)
                out["T"] += bt_rows.T @ _dense_times_sparse(kernel, bs)
        if "D" in kinds:
            g4 = g.reshape(f1 - f0, q, n_trial_tri, q)
            g_int = np.einsum('aq,aqbp,bp->ab', wt_tri[f0:f1], g4, ws_tri, optimize=True)
            for c in range(3):
                left = curl_t[c][f0:f1].T @ g_int
                out["D"] += _dense_times_sparse(left, curl_s[c])
                out["D"] -= k ** 2 * (bt_n[c][rows].T @ _dense_times_sparse(g, bs_n[c]))
    return out


def _assemble_singular(kinds, surface, test, trial, k, order, out):
    tris = surface.triangles
    test_p1 = test.kind == SpaceKind.SURFACE_P1
    trial_p1 = trial.kind == SpaceKind.SURFACE_P1

    for regime, (ft, fs, perm_t, perm_s) in singular_pairs(surface).items():
        if len(ft) == 0:
            continue
        lam_x, lam_y, wq = sauter_schwab_rule(regime, order)
        basis_x = lam_x if test_p1 else np.ones((len(wq), 1))
        basis_y = lam_y if trial_p1 else np.ones((len(wq), 1))
        batch = max(1, SINGULAR_BATCH_POINTS // len(wq))

        for b0 in range(0, len(ft), batch):
            sl = slice(b0, b0 + batch)
            t_idx, s_idx = ft[sl], fs[sl]
            vt = np.take_along_axis(tris[t_idx], perm_t[sl], axis=1)
            vs = np.take_along_axis(tris[s_idx], perm_s[sl], axis=1)
            x = np.einsum('qa,nad->nqd', lam_x, surface.points[vt])
            y = np.einsum('qa,nad->nqd', lam_y, surface.points[vs])
            diff = x - y
            r = np.linalg.norm(diff, axis=2)
            g = np.exp(1j * k * r) / (4.0 * np.pi * r)
            jac = 4.0 * surface.areas[t_idx] * surface.areas[s_idx]
            w = wq[None, :] * jac[:, None]
            n_t = surface.normals[t_idx]
            n_s = surface.normals[s_idx]

            rows = vt if test_p1 else t_idx[:, None]
            cols = vs if trial_p1 else s_idx[:, None]
            index = (rows[:, :, None], cols[:, None, :])

            if "V" in kinds:
                local = np.einsum('nq,qa,qb->nab', w * g, basis_x, basis_y)
                np.add.at(out["V"], index, local)
            if "K" in kinds or "T" in kinds:
                common = g * (1j * k - 1.0 / r) / r
                if "K" in kinds:
                    kernel = common * np.einsum('nqd,nd->nq', -diff, n_s)
                    np.add.at(out["K"], index, np.einsum('nq,qa,qb->nab', w * kernel, basis_x, basis_y))
                if "T" in kinds:
                    kernel = common * np.einsum('nqd,nd->nq', diff, n_t)
                    np.add.at(out["T"], index, np.einsum('nq,qa,qb->nab', w * kernel, basis_x, basis_y))
            if "D" in kinds:
                curls_t = np.take_along_axis(surface.hat_curls[t_idx], perm_t[sl][:, :, None], axis=1)
                curls_s = np.take_along_axis(surface.hat_curls[s_idx], perm_s[sl][:, :, None], axis=1)
                g_sum = (w * g).sum(axis=1)
                local = g_sum[:, None, None] * np.einsum('nad,nbd->nab', curls_t, curls_s)
                nn = np.einsum('nd,nd->n', n_t, n_s)
                local -= k ** 2 * nn[:, None, None] * np.einsum('nq,qa,qb->nab', w * g, lam_x, lam_y)
                np.add.at(out["D"], index, local)


def assemble_boundary_operators(kinds: Sequence[str], surface: Surface, k: float, domain: SpaceTag,
                                dual: SpaceTag, quadrature: Optional[QuadratureConfig] = None,
                                test_surface: Optional[Surface] = None) -> Dict[str, DenseOperatorBlock]:
    """
    Assemble several boundary operators in one pass over quadrature-point pairs.

    Args:
        kinds (Sequence[str]): Any of 'V', 'K', 'T', 'D'
        surface (Surface): Trial surface
        k (float): Wavenumber (k = 0 gives the Laplace kernels)
        domain (SpaceTag): Trial space
        dual (SpaceTag): Test space
        quadrature (QuadratureConfig): Orders (defaults if None)
        test_surface (Surface): Test surface when it differs from the trial surface

    Returns:
        Dict[str, DenseOperatorBlock]: One block per requested kind

    Raises:
        SpacePairingError: For D on a P0 space or non-surface spaces
    """
    kinds = tuple(dict.fromkeys(kinds))
    _check_pairing(kinds, dual, domain)
    quadrature = quadrature or QuadratureConfig()
    test_surface = test_surface if test_surface is not None else surface
    same = test_surface is surface

    start = time.time()
    mask_pairs = None
    if same:
        groups = singular_pairs(surface).values()
        mask_pairs = (np.concatenate([g[0] for g in groups]), np.concatenate([g[1] for g in groups]))
    out = _assemble_regular(kinds, test_surface, surface, dual, domain, k,
                            quadrature.regular_order, mask_pairs)
    if same:
        _assemble_singular(kinds, surface, dual, domain, k, quadrature.singular_order, out)
        if domain == dual:
            for kind in ("V", "D"):
                if kind in out:
                    out[kind] = 0.5 * (out[kind] + out[kind].T)

    logger.info(f"Assembled {'/'.join(kinds)} {dual} x {domain} at k={k:g} "
                f"({out[kinds[0]].shape[0]}x{out[kinds[0]].shape[1]}) in {time.time() - start:.2f}s")
    return {kind: DenseOperatorBlock(out[kind], domain, dual, kind) for kind in kinds}


def assemble_boundary_operator(kind: str, surface: Surface, k: float, domain: SpaceTag, dual: SpaceTag,
                               quadrature: Optional[QuadratureConfig] = None,
                               test_surface: Optional[Surface] = None) -> DenseOperatorBlock:
    """Assemble a single boundary operator; see assemble_boundary_operators."""
    return assemble_boundary_operators((kind,), surface, k, domain, dual, quadrature, test_surface)[kind]


def assemble_identity(surface: Surface, domain: SpaceTag, dual: SpaceTag) -> SparseOperatorBlock:
    """
    Galerkin mass matrix between two surface spaces of the same surface.

    Returns:
        SparseOperatorBlock: Rows follow the test (dual) space
    """
    if not (domain.on_surface and dual.on_surface):
        raise SpacePairingError("identity pairing needs surface spaces")
    areas = surface.areas
    tris = surface.triangles
    n_tri, n_nodes = surface.n_triangles, surface.n_nodes
    test_p1 = dual.kind == SpaceKind.SURFACE_P1
    trial_p1 = domain.kind == SpaceKind.SURFACE_P1

    if test_p1 and trial_p1:
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        vals = (areas[:, None, None] * local[None]).ravel()
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))
    elif not test_p1 and not trial_p1:
        matrix = sp.diags(areas).tocsr()
    else:
        rows = np.repeat(np.arange(n_tri), 3)
        cols = tris.ravel()
        vals = np.repeat(areas / 3.0, 3)
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n_tri, n_nodes))
        if test_p1:
            matrix = matrix.T.tocsr()
    return SparseOperatorBlock(matrix, domain, dual, "I")


def project_samples(surface: Surface, dual: SpaceTag, values: np.ndarray,
                    quad: SurfaceQuadrature) -> np.ndarray:
    """Weak vector <f, test function> from values of f at the surface quadrature points."""
    return basis_matrix(surface, dual.kind, quad).T @ values


def near_surface_mask(surfaces: Sequence[Surface], points: np.ndarray, width: float) -> np.ndarray:
    """
    Flag points that may lie within `width` of any surface.

    Distances are measured to a barycentric lattice on every triangle; the
    lattice spacing is added to the width so every unflagged point is at
    least `width` away from the true surface.
    """
    points = np.atleast_2d(points)
    m = CLEARANCE_LATTICE
    lattice = np.array([(i, j, m - i - j) for i in range(m + 1) for j in range(m + 1 - i)], dtype=float) / m
    mask = np.zeros(len(points), dtype=bool)
    for surface in surfaces:
        samples = np.einsum('la,fad->fld', lattice, surface.corners).reshape(-1, 3)
        tree = KDTree(samples)
        dist, _ = tree.query(points, k=1)
        mask |= dist[:, 0] < width + surface.max_diameter / m
    return mask


def evaluate_layer_potentials(dirichlet: Optional[np.ndarray], neumann: Optional[np.ndarray],
                              quad: SurfaceQuadrature, k: float, points: np.ndarray,
                              chunk_entries: int = CHUNK_ENTRIES) -> np.ndarray:
    """
    K(phi) - V(psi) at points from density values sampled at surface quadrature points.
    """
    points = np.atleast_2d(points)
    result = np.zeros(len(points), dtype=complex)
    if dirichlet is None and neumann is None:
        return result
    y = quad.points
    sq_y = np.einsum('ij,ij->i', y, y)
    y_dot_ny = np.einsum('ij,ij->i', y, quad.normals)
    wphi = None if dirichlet is None else quad.weights * dirichlet
    wpsi = None if neumann is None else quad.weights * neumann
    step = max(1, chunk_entries // len(y))

    for p0 in range(0, len(points), step):
        x = points[p0:p0 + step]
        r2 = np.einsum('ij,ij->i', x, x)[:, None] + sq_y[None, :] - 2.0 * (x @ y.T)
        r = np.sqrt(np.maximum(r2, 0.0))
        g = np.exp(1j * k * r) / (4.0 * np.pi * r)
        if wphi is not None:
            dg = g * (1j * k - 1.0 / r) / r * (y_dot_ny[None, :] - x @ quad.normals.T)
            result[p0:p0 + step] += dg @ wphi
        if wpsi is not None:
            result[p0:p0 + step] -= g @ wpsi
    return result


def evaluate_potentials(phi: Optional[np.ndarray], psi: Optional[np.ndarray], surface: Surface, k: float,
                        points: np.ndarray, phi_space: SpaceKind = SpaceKind.SURFACE_P1,
                        psi_space: SpaceKind = SpaceKind.SURFACE_P1,
                        quadrature: Optional[QuadratureConfig] = None,
                        check_distance: bool = True) -> np.ndarray:
    """
    Evaluate the radiating field K(phi) - V(psi) at exterior points.

    Args:
        phi (np.ndarray): Dirichlet density coefficients (None for zero)
        psi (np.ndarray): Neumann density coefficients (None for zero)
        surface (Surface): Surface carrying the densities
        k (float): Wavenumber
        points (np.ndarray): Evaluation points (N, 3)
        phi_space (SpaceKind): Space of phi
        psi_space (SpaceKind): Space of psi
        quadrature (QuadratureConfig): Uses potential_order
        check_distance (bool): Reject points closer than one element diameter

    Returns:
        np.ndarray: Complex field values (N,)

    Raises:
        GeometryError: If a point is too close to the surface
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if check_distance:
        near = near_surface_mask([surface], points, surface.max_diameter)
        if near.any():
            bad = points[np.flatnonzero(near)[0]]
            raise GeometryError(f"evaluation point {bad.tolist()} is within one element diameter of the surface")
    quadrature = quadrature or QuadratureConfig()
    quad = surface_quadrature(surface, quadrature.potential_order)
    phi_q = None if phi is None else basis_matrix(surface, phi_space, quad, weighted=False) @ phi
    psi_q = None if psi is None else basis_matrix(surface, psi_space, quad, weighted=False) @ psi
    return evaluate_layer_potentials(phi_q, psi_q, quad, k, points)
