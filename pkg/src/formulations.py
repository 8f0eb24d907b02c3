#!/usr/bin/env python3
"""
Formulations Module
Handles the coupled FEM-BEM block systems (standard, symmetric, stabilised and
multi-domain), their right-hand sides and the exterior field reconstruction

Unknown layout per domain, domains ascending: p (volume P1), theta (surface
P0 or P1) and, for stabilised systems, sigma (surface P1). Except for the
standard coupling, theta is the Neumann trace of the scattered field.
"""

import time
import logging
import numpy as np
import scipy.sparse as sp
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
from sklearn.neighbors import KDTree

from bem_kernels import (assemble_identity, evaluate_layer_potentials, evaluate_potentials,
                         near_surface_mask, project_samples, surface_quadrature)
from block_operator import Block, BlockOperator, MatrixBlock, OsrcBlock, ProductChain, ScaledSum
from errors import FormulationError, GeometryError
from fem_assembly import assemble_fem, assemble_regulariser_form, assemble_surface_laplacian
from mesh import Mesh, RestrictionMaps, Surface, build_restrictions, points_inside
from operator_cache import OperatorCache, assemble_cached
from osrc import OsrcConfig, OsrcOperator, build_osrc, characteristic_length
from problem_setup import IncidentWave, MaterialModel, plane_wave_field, plane_wave_traces
from quadrature import QuadratureConfig
from spaces import SpaceKind, SpaceTag, SparseOperatorBlock, p1, volume

logger = logging.getLogger(__name__)

THETA_SPACES = {"P1": SpaceKind.SURFACE_P1, "P0": SpaceKind.SURFACE_P0}
REGULARISERS = ("MH", "SL", "OSRC-NtD")
STABILISED_VARIANTS = {
    "base": ("base", False),
    "alt_nu": ("alt_nu", False),
    "alt_reg": ("alt_reg", False),
    "permuted": ("alt_nu", True),
    "permuted_base": ("base", True),
    "permuted_alt_reg": ("alt_reg", True),
}
UNKNOWN_NAMES = ("p", "theta", "sigma")


@dataclass(eq=False)
class DomainContext:
    """
    Assembled pieces of one domain, reused by preconditioners and reconstruction.

    Attributes:
        domain (int): Domain id
        surface (Surface): Boundary of the domain
        maps (RestrictionMaps): Trace map Z and interior map Zbar
        fem (SparseOperatorBlock): Interior form F
        k_lb (SparseOperatorBlock): Surface Laplace-Beltrami stiffness
        m_gamma (SparseOperatorBlock): Surface P1 mass matrix
        theta (SpaceTag): Space of the theta unknown
        ratio (sp.dia_matrix): rho_int / rho_ext at the surface nodes
        k_ext (float): Exterior wavenumber
        osrc_options (Dict): pade_order, branch_angle, damping, characteristic_length overrides
    """
    domain: int
    surface: Surface
    maps: RestrictionMaps
    fem: SparseOperatorBlock
    k_lb: SparseOperatorBlock
    m_gamma: SparseOperatorBlock
    theta: SpaceTag
    ratio: sp.dia_matrix
    k_ext: float
    osrc_options: Dict = field(default_factory=dict)
    identities: Dict[Tuple[SpaceKind, SpaceKind], SparseOperatorBlock] = field(default_factory=dict)
    _osrc: Dict[str, OsrcOperator] = field(default_factory=dict, repr=False)

    @property
    def p1(self) -> SpaceTag:
        return p1(self.domain)

    def identity(self, test: SpaceKind, trial: SpaceKind) -> SparseOperatorBlock:
        """Surface mass pairing, assembled on first use."""
        key = (test, trial)
        if key not in self.identities:
            self.identities[key] = assemble_identity(self.surface, SpaceTag(trial, self.domain),
                                                     SpaceTag(test, self.domain))
        return self.identities[key]

    def osrc_config(self) -> OsrcConfig:
        options = {k: v for k, v in self.osrc_options.items()
                   if k in ("pade_order", "branch_angle", "damping") and v is not None}
        length = self.osrc_options.get("characteristic_length") or characteristic_length(self.surface)
        return OsrcConfig.for_wavenumber(self.k_ext, length, **options)

    def osrc(self, kind: str, sign: int = 1) -> OsrcOperator:
        """OSRC operator of this surface; factorised once per kind."""
        if kind not in self._osrc:
            self._osrc[kind] = build_osrc(self.surface, self.domain, kind, self.osrc_config(),
                                          blocks=(self.k_lb, self.m_gamma))
        op = self._osrc[kind]
        return op if sign == 1 else op.with_sign(sign)


@dataclass(eq=False)
class FormulationSystem:
    """
    Block linear system of one formulation together with its assembly context.

    Attributes:
        lhs (BlockOperator): System operator
        rhs (np.ndarray): Right-hand side
        layout (List[SpaceTag]): Trial space of every unknown block
        unknowns (List[Tuple[str, int]]): (name, domain) of every unknown block
        formulation (str): 'standard', 'symmetric' or 'stabilised'
        variant (str): Stabilised variant, None otherwise
        regulariser (str): MH, SL or OSRC-NtD for stabilised systems
        eta (float): Stabilisation parameter
        nu (float): Second stabilisation parameter
        theta_space (str): 'P0' or 'P1'
        theta_total (bool): True when theta is the total Neumann trace
        contexts (Dict[int, DomainContext]): Per-domain assembled pieces
    """
    lhs: BlockOperator
    rhs: np.ndarray
    layout: List[SpaceTag]
    unknowns: List[Tuple[str, int]]
    formulation: str
    variant: Optional[str]
    regulariser: Optional[str]
    eta: Optional[float]
    nu: Optional[float]
    theta_space: str
    theta_total: bool
    contexts: Dict[int, DomainContext]
    mesh: Mesh
    materials: MaterialModel
    wave: IncidentWave
    quadrature: QuadratureConfig

    @property
    def n_unknowns(self) -> int:
        return self.lhs.shape[1]

    @property
    def k_ext(self) -> float:
        return self.materials.k_ext

    def unknown_slice(self, name: str, domain: int) -> slice:
        index = self.unknowns.index((name, domain))
        offsets = self.lhs.col_offsets
        return slice(int(offsets[index]), int(offsets[index + 1]))

    def split(self, solution: np.ndarray) -> Dict[Tuple[str, int], np.ndarray]:
        """Map every (name, domain) unknown to its part of the solution vector."""
        return {key: solution[self.unknown_slice(*key)] for key in self.unknowns}


def incident_traces(surface: Surface, domain: int, wave: IncidentWave,
                    quadrature: QuadratureConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Incident-wave data on one surface.

    Returns:
        Tuple: Nodal Dirichlet trace (P1 coefficients), weak Neumann trace tested
               with P1 functions, Neumann values at the potential quadrature points
    """
    quad = surface_quadrature(surface, quadrature.potential_order)
    _, neumann_q = plane_wave_traces(wave, quad.points, quad.normals)
    dirichlet = plane_wave_field(wave, surface.points)
    return dirichlet, project_samples(surface, p1(domain), neumann_q, quad), neumann_q


def check_disjoint(mesh: Mesh):
    """
    Reject multi-domain meshes whose surfaces touch or enclose one another.

    Raises:
        GeometryError: If two domains overlap
    """
    domains = mesh.domain_ids
    for a_index, a in enumerate(domains):
        for b in domains[a_index + 1:]:
            sa, sb = mesh.surface(a), mesh.surface(b)
            lo_a, hi_a = sa.bounding_box
            lo_b, hi_b = sb.bounding_box
            if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
                continue
            gap = 0.5 * min(sa.max_diameter, sb.max_diameter)
            dist, _ = KDTree(sb.points).query(sa.points, k=1)
            if dist.min() < gap or points_inside(sb, sa.points[:1])[0] or points_inside(sa, sb.points[:1])[0]:
                raise GeometryError(f"overlapping domains {a} and {b}")


def _validate_stabilised(regulariser: str, eta: float, nu: float, variant: str, kappa: Optional[float]):
    if variant not in STABILISED_VARIANTS:
        raise FormulationError(f"unknown stabilised variant '{variant}'")
    if regulariser not in REGULARISERS:
        raise FormulationError(f"unknown regulariser '{regulariser}', expected one of {REGULARISERS}")
    if eta == 0:
        raise FormulationError("eta = 0 degenerates to the symmetric coupling; use build_symmetric")
    if not (nu == 0 or np.isclose(nu, eta)):
        raise FormulationError(f"nu must be 0 or eta, got nu={nu}, eta={eta}")
    if STABILISED_VARIANTS[variant][0] == "alt_reg" and regulariser != "OSRC-NtD":
        raise FormulationError(f"alt_reg needs an explicit regulariser; {regulariser} is only defined by its inverse")
    if regulariser == "SL" and kappa is not None and kappa <= 0:
        raise FormulationError(f"regulariser shift must be positive, got {kappa}")


def _build_contexts(mesh: Mesh, materials: MaterialModel, domains: Sequence[int], theta_kind: SpaceKind,
                    quadrature: QuadratureConfig, osrc_options: Optional[Dict]) -> Dict[int, DomainContext]:
    contexts = {}
    for d in domains:
        surface = mesh.surface(d)
        k_lb, m_gamma = assemble_surface_laplacian(surface, d)
        ratio = sp.diags(materials.density_ratio(d, surface.points))
        contexts[d] = DomainContext(
            domain=d, surface=surface, maps=build_restrictions(mesh, d),
            fem=assemble_fem(mesh, materials, materials.k_ext, d, quadrature),
            k_lb=k_lb, m_gamma=m_gamma, theta=SpaceTag(theta_kind, d), ratio=ratio,
            k_ext=materials.k_ext, osrc_options=dict(osrc_options or {}))
    return contexts


class _OperatorTable:
    """Boundary operators between all surface pairs, assembled in grouped passes."""

    def __init__(self, contexts: Dict[int, DomainContext], k: float, quadrature: QuadratureConfig,
                 cache: Optional[OperatorCache]):
        self.contexts = contexts
        self.k = k
        self.quadrature = quadrature
        self.cache = cache
        self.blocks: Dict[tuple, MatrixBlock] = {}

    def prefetch(self, requests: Sequence[Tuple[str, SpaceKind, SpaceKind]]):
        """Assemble (kind, test kind, trial kind) for every ordered domain pair."""
        groups: Dict[tuple, List[str]] = {}
        for kind, test, trial in requests:
            groups.setdefault((test, trial), [])
            if kind not in groups[(test, trial)]:
                groups[(test, trial)].append(kind)
        for m, cm in self.contexts.items():
            for n, cn in self.contexts.items():
                for (test, trial), kinds in groups.items():
                    out = assemble_cached(kinds, cn.surface, self.k, SpaceTag(trial, n), SpaceTag(test, m),
                                          self.quadrature, None if m == n else cm.surface, self.cache)
                    for kind, block in out.items():
                        self.blocks[(kind, m, n, test, trial)] = MatrixBlock(block.matrix, f"{kind}_{m}{n}")

    def get(self, kind: str, m: int, n: int, test: SpaceKind, trial: SpaceKind) -> MatrixBlock:
        return self.blocks[(kind, m, n, test, trial)]


def _lift_both(ctx: DomainContext, inner: Block, trial_ctx: DomainContext) -> ProductChain:
    """rho Z_m^T (inner) Z_n"""
    left = MatrixBlock((ctx.maps.Z.T @ ctx.ratio).tocsr(), "rhoZt")
    return ProductChain([left, inner, MatrixBlock(trial_ctx.maps.Z, "Z")])


def _lift_left(ctx: DomainContext, inner: Block) -> ProductChain:
    """rho Z^T (inner)"""
    return ProductChain([MatrixBlock((ctx.maps.Z.T @ ctx.ratio).tocsr(), "rhoZt"), inner])


def _lift_right(inner: Block, trial_ctx: DomainContext) -> ProductChain:
    """(inner) Z"""
    return ProductChain([inner, MatrixBlock(trial_ctx.maps.Z, "Z")])


def _regulariser_blocks(ctx: DomainContext, regulariser: str, kappa: Optional[float]) -> Block:
    """Weak form of the inverse regulariser: S."""
    if regulariser == "OSRC-NtD":
        return OsrcBlock(ctx.osrc("DtN", sign=-1), weak=True)
    if regulariser == "SL" and kappa is None:
        kappa = ctx.k_ext
    return MatrixBlock(assemble_regulariser_form(regulariser, kappa, (ctx.k_lb, ctx.m_gamma)).matrix,
                       f"S_{regulariser}")


def _coupled_system(mesh: Mesh, materials: MaterialModel, wave: IncidentWave, formulation: str,
                    theta_space: str, variant: Optional[str] = None, regulariser: Optional[str] = None,
                    eta: Optional[float] = None, nu: Optional[float] = None, kappa: Optional[float] = None,
                    quadrature: Optional[QuadratureConfig] = None, cache: Optional[OperatorCache] = None,
                    osrc_options: Optional[Dict] = None, domains: Optional[Sequence[int]] = None) -> FormulationSystem:
    """Assemble the symmetric or stabilised coupling on any number of disjoint domains."""
    start = time.time()
    if theta_space not in THETA_SPACES:
        raise FormulationError(f"theta space must be P0 or P1, got '{theta_space}'")
    quadrature = quadrature or QuadratureConfig()
    domains = sorted(domains if domains is not None else mesh.domain_ids)
    if len(domains) > 1:
        check_disjoint(mesh)
    stabilised = formulation == "stabilised"
    shape, permuted = STABILISED_VARIANTS[variant] if stabilised else (None, False)
    nu = nu or 0.0
    nu_row1 = nu if shape == "base" else 0.0

    theta_kind = THETA_SPACES[theta_space]
    P1 = SpaceKind.SURFACE_P1
    contexts = _build_contexts(mesh, materials, domains, theta_kind, quadrature, osrc_options)
    table = _OperatorTable(contexts, materials.k_ext, quadrature, cache)
    requests = [("D", P1, P1), ("K", theta_kind, P1), ("V", theta_kind, theta_kind), ("T", P1, theta_kind)]
    if nu_row1:
        requests += [("K", P1, P1), ("V", P1, theta_kind)]
    table.prefetch(requests)

    per_domain = 3 if stabilised else 2
    unknowns, layout, sizes, row_spaces = [], [], [], []
    for d in domains:
        ctx = contexts[d]
        tags = [volume(d), ctx.theta, p1(d)][:per_domain]
        layout += tags
        row_spaces += tags
        sizes += [len(ctx.maps.volume_nodes), ctx.surface.n_triangles if theta_kind == SpaceKind.SURFACE_P0
                  else ctx.surface.n_nodes, ctx.surface.n_nodes][:per_domain]
        unknowns += [(name, d) for name in UNKNOWN_NAMES[:per_domain]]
    lhs = BlockOperator(row_spaces, layout, sizes, sizes)
    rhs_rows: List[np.ndarray] = []

    traces = {d: incident_traces(contexts[d].surface, d, wave, quadrature) for d in domains}
    for mi, m in enumerate(domains):
        cm = contexts[m]
        r1, r2, r3 = (per_domain * mi + i for i in range(3))
        rhs1 = np.zeros(cm.surface.n_nodes, dtype=complex)
        rhs2 = np.zeros(sizes[r2], dtype=complex)
        rhs3 = np.zeros(cm.surface.n_nodes, dtype=complex)
        for ni, n in enumerate(domains):
            cn = contexts[n]
            c1, c2 = per_domain * ni, per_domain * ni + 1
            same = m == n
            g_n = traces[n][0]
            D = table.get("D", m, n, P1, P1)
            K = table.get("K", m, n, theta_kind, P1)
            V = table.get("V", m, n, theta_kind, theta_kind)
            T = table.get("T", m, n, P1, theta_kind)

            terms_pp = [(1.0, D)]
            terms_pt = [(1.0, T)]
            if same:
                terms_pt.append((-0.5, MatrixBlock(cm.identity(P1, theta_kind).matrix, "I")))
            if nu_row1:
                terms_pp.append((-1j * nu_row1, table.get("K", m, n, P1, P1)))
                terms_pt.append((1j * nu_row1, table.get("V", m, n, P1, theta_kind)))
                if same:
                    terms_pp.append((0.5j * nu_row1, MatrixBlock(cm.m_gamma.matrix, "I")))
            inner_pp = ScaledSum(terms_pp, "D+inu(1/2-K)")
            coupling = _lift_both(cm, inner_pp, cn)
            lhs.set_block(r1, c1, ScaledSum([(1.0, MatrixBlock(cm.fem.matrix, "F")), (1.0, coupling)])
                          if same else coupling)
            lhs.set_block(r1, c2, _lift_left(cm, ScaledSum(terms_pt, "T-1/2+inuV")))
            rhs1 += inner_pp.matvec(g_n)

            terms_k = [(-1.0, K)]
            if same:
                terms_k.append((0.5, MatrixBlock(cm.identity(theta_kind, P1).matrix, "I")))
            half_minus_k = ScaledSum(terms_k, "1/2-K")
            lhs.set_block(r2, c1, _lift_right(half_minus_k, cn))
            lhs.set_block(r2, c2, V)
            rhs2 += half_minus_k.matvec(g_n)

            if stabilised:
                lhs.set_block(r3, c1, _lift_right(ScaledSum([(-1.0, D)], "-D"), cn))
                terms_t = [(-1.0, T)]
                if same:
                    terms_t.append((-0.5, MatrixBlock(cm.identity(P1, theta_kind).matrix, "I")))
                lhs.set_block(r3, c2, ScaledSum(terms_t, "-(1/2+T)"))
                rhs3 -= D.matvec(g_n)

        rhs1 += traces[m][1]
        rhs_rows += [cm.maps.Z.T @ (cm.ratio @ rhs1), rhs2] + ([rhs3] if stabilised else [])

        if stabilised:
            c3 = r3
            mass = MatrixBlock(cm.m_gamma.matrix, "M")
            mass_theta = MatrixBlock(cm.identity(theta_kind, P1).matrix, "I")
            if shape == "alt_reg":
                reg = OsrcBlock(cm.osrc("NtD", sign=-1), weak=False, label="R")
                if nu:
                    lhs.set_block(r1, c3, ScaledSum([(nu * eta, _lift_left(cm, ProductChain([mass, reg])))]))
                lhs.set_block(r2, c3, ScaledSum([(1j * eta, ProductChain([mass_theta, reg]))]))
                lhs.set_block(r3, c3, mass)
            else:
                if shape == "alt_nu" and nu:
                    lhs.set_block(r1, c3, ScaledSum([(nu * eta, _lift_left(cm, mass))]))
                lhs.set_block(r2, c3, ScaledSum([(1j * eta, mass_theta)]))
                lhs.set_block(r3, c3, _regulariser_blocks(cm, regulariser, kappa))

    rhs = np.concatenate(rhs_rows)
    if permuted:
        order, signs = [], []
        for mi in range(len(domains)):
            base = 3 * mi
            order += [base, base + 2, base + 1]
            signs += [1.0, -1.0, 1.0]
        lhs = lhs.permute_rows(order, signs)
        pieces = _split_sizes(rhs, sizes)
        rhs = np.concatenate([s * pieces[i] for i, s in zip(order, signs)])

    system = FormulationSystem(lhs=lhs, rhs=rhs, layout=layout, unknowns=unknowns, formulation=formulation,
                               variant=variant, regulariser=regulariser, eta=eta, nu=nu if stabilised else None,
                               theta_space=theta_space, theta_total=False, contexts=contexts, mesh=mesh,
                               materials=materials, wave=wave, quadrature=quadrature)
    logger.info(f"Built {formulation}{'/' + variant if variant else ''} system on domains {domains}: "
                f"{system.n_unknowns} unknowns in {time.time() - start:.2f}s")
    return system


def _split_sizes(vector: np.ndarray, sizes: Sequence[int]) -> List[np.ndarray]:
    """Cut a vector into consecutive pieces of the given sizes."""
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [vector[offsets[i]:offsets[i + 1]] for i in range(len(sizes))]


def build_standard(mesh: Mesh, materials: MaterialModel, wave: IncidentWave, theta_space: str = "P1",
                   quadrature: Optional[QuadratureConfig] = None,
                   cache: Optional[OperatorCache] = None, osrc_options: Optional[Dict] = None) -> FormulationSystem:
    """
    Standard (Johnson-Nedelec) coupling with theta the total Neumann trace.

    Blocks: [[F, -rho Z^T I], [(1/2 I - K) Z, V]], right-hand side [0, I gamma_D p_inc].

    Raises:
        FormulationError: For more than one domain or an unknown theta space
    """
    start = time.time()
    if theta_space not in THETA_SPACES:
        raise FormulationError(f"theta space must be P0 or P1, got '{theta_space}'")
    if len(mesh.domain_ids) != 1:
        raise FormulationError("the standard coupling is defined for a single domain")
    quadrature = quadrature or QuadratureConfig()
    d = mesh.domain_ids[0]
    theta_kind = THETA_SPACES[theta_space]
    P1 = SpaceKind.SURFACE_P1
    ctx = _build_contexts(mesh, materials, [d], theta_kind, quadrature, osrc_options)[d]
    table = _OperatorTable({d: ctx}, materials.k_ext, quadrature, cache)
    table.prefetch([("K", theta_kind, P1), ("V", theta_kind, theta_kind)])

    n_theta = ctx.surface.n_triangles if theta_kind == SpaceKind.SURFACE_P0 else ctx.surface.n_nodes
    sizes = [len(ctx.maps.volume_nodes), n_theta]
    layout = [volume(d), ctx.theta]
    lhs = BlockOperator(layout, layout, sizes, sizes)
    lhs.set_block(0, 0, MatrixBlock(ctx.fem.matrix, "F"))
    lhs.set_block(0, 1, ScaledSum([(-1.0, _lift_left(ctx, MatrixBlock(ctx.identity(P1, theta_kind).matrix, "I")))]))
    half_minus_k = ScaledSum([(0.5, MatrixBlock(ctx.identity(theta_kind, P1).matrix, "I")),
                              (-1.0, table.get("K", d, d, theta_kind, P1))], "1/2-K")
    lhs.set_block(1, 0, _lift_right(half_minus_k, ctx))
    lhs.set_block(1, 1, table.get("V", d, d, theta_kind, theta_kind))

    dirichlet, _, _ = incident_traces(ctx.surface, d, wave, quadrature)
    rhs = np.concatenate([np.zeros(sizes[0], dtype=complex), ctx.identity(theta_kind, P1).matrix @ dirichlet])
    system = FormulationSystem(lhs=lhs, rhs=rhs, layout=layout, unknowns=[("p", d), ("theta", d)],
                               formulation="standard", variant=None, regulariser=None, eta=None, nu=None,
                               theta_space=theta_space, theta_total=True, contexts={d: ctx}, mesh=mesh,
                               materials=materials, wave=wave, quadrature=quadrature)
    logger.info(f"Built standard system: {system.n_unknowns} unknowns in {time.time() - start:.2f}s")
    return system


def build_symmetric(mesh: Mesh, materials: MaterialModel, wave: IncidentWave, theta_space: str = "P1",
                    quadrature: Optional[QuadratureConfig] = None,
                    cache: Optional[OperatorCache] = None, osrc_options: Optional[Dict] = None) -> FormulationSystem:
    """
    Symmetric coupling: [[F + rho Z^T D Z, rho Z^T (T - 1/2 I)], [(1/2 I - K) Z, V]].

    Right-hand side [rho Z^T (D gamma_D p_inc + <gamma_N p_inc>), (1/2 I - K) gamma_D p_inc].
    """
    return _coupled_system(mesh, materials, wave, "symmetric", theta_space, quadrature=quadrature, cache=cache,
                           osrc_options=osrc_options)


def build_stabilised(mesh: Mesh, materials: MaterialModel, wave: IncidentWave, regulariser: str = "OSRC-NtD",
                     eta: float = 1.0, nu: float = 0.0, variant: str = "base", theta_space: str = "P1",
                     kappa: Optional[float] = None, quadrature: Optional[QuadratureConfig] = None,
                     cache: Optional[OperatorCache] = None, osrc_options: Optional[Dict] = None) -> FormulationSystem:
    """
    Stabilised coupling with the extra surface unknown sigma.

    Base variant rows:
        [F + rho Z^T (D + i nu (1/2 I - K)) Z,  rho Z^T (T - 1/2 I + i nu V),  0    ]
        [(1/2 I - K) Z,                          V,                             i eta I]
        [-D Z,                                   -(1/2 I + T),                  S    ]
    alt_nu moves nu into rho nu eta Z^T I in the sigma column, alt_reg replaces
    the sigma column by the explicit regulariser R = -L_NtD, and the permuted
    variants swap the last two rows with a sign flip on the new second row.

    Args:
        mesh (Mesh): Volume mesh (every domain is coupled)
        materials (MaterialModel): Material fields and exterior medium
        wave (IncidentWave): Incident plane wave
        regulariser (str): 'MH', 'SL' or 'OSRC-NtD'
        eta (float): Non-zero stabilisation parameter
        nu (float): 0 or eta
        variant (str): base, alt_nu, alt_reg, permuted, permuted_base or permuted_alt_reg
        theta_space (str): 'P1' or 'P0'
        kappa (float): SL shift, defaults to k_ext
        quadrature (QuadratureConfig): Quadrature orders
        cache (OperatorCache): Optional operator cache
        osrc_options (Dict): OSRC overrides

    Returns:
        FormulationSystem: Three unknowns per domain

    Raises:
        FormulationError: For eta = 0, invalid nu, alt_reg with MH/SL or unknown names
    """
    _validate_stabilised(regulariser, eta, nu, variant, kappa)
    return _coupled_system(mesh, materials, wave, "stabilised", theta_space, variant=variant,
                           regulariser=regulariser, eta=eta, nu=nu, kappa=kappa, quadrature=quadrature,
                           cache=cache, osrc_options=osrc_options)


def build_multidomain(mesh: Mesh, materials: MaterialModel, wave: IncidentWave, regulariser: str = "OSRC-NtD",
                      eta: float = 1.0, theta_space: str = "P1", kappa: Optional[float] = None,
                      quadrature: Optional[QuadratureConfig] = None, cache: Optional[OperatorCache] = None,
                      osrc_options: Optional[Dict] = None) -> FormulationSystem:
    """
    Stabilised coupling of several disjoint scatterers with nu = 0.

    Diagonal blocks per domain follow the base variant; cross blocks are
    rho D_mn, rho T_mn (first row), -K_mn, V_mn (second row) and -D_mn, -T_mn
    (third row). Sigma columns do not couple across domains.

    Raises:
        GeometryError: If two domains overlap
    """
    _validate_stabilised(regulariser, eta, 0.0, "base", kappa)
    return _coupled_system(mesh, materials, wave, "stabilised", theta_space, variant="base",
                           regulariser=regulariser, eta=eta, nu=0.0, kappa=kappa, quadrature=quadrature,
                           cache=cache, osrc_options=osrc_options)


def reconstruct_exterior(system: FormulationSystem, solution: np.ndarray, points: np.ndarray,
                         check_points: bool = True) -> np.ndarray:
    """
    Total exterior field p_inc + sum over domains of K(Z p) - V(theta) [- V(gamma_N p_inc)].

    The incident Neumann term enters when theta is the scattered-field trace.

    Args:
        system (FormulationSystem): Assembled system
        solution (np.ndarray): Solution vector in the system layout
        points (np.ndarray): Exterior points (N, 3)
        check_points (bool): Reject points inside a domain or within one element diameter of a surface

    Returns:
        np.ndarray: Complex total pressure (N,)

    Raises:
        GeometryError: For points inside a domain or too near a surface
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    parts = system.split(np.asarray(solution))
    field = plane_wave_field(system.wave, points).astype(complex)
    k = system.k_ext
    for d, ctx in system.contexts.items():
        if check_points:
            inside = points_inside(ctx.surface, points)
            if inside.any():
                raise GeometryError(f"point {points[np.flatnonzero(inside)[0]].tolist()} lies inside domain {d}")
            near = near_surface_mask([ctx.surface], points, ctx.surface.max_diameter)
            if near.any():
                raise GeometryError(f"point {points[np.flatnonzero(near)[0]].tolist()} is too close to surface {d}")
        trace = ctx.maps.Z @ parts[("p", d)]
        field += evaluate_potentials(trace, parts[("theta", d)], ctx.surface, k, points,
                                     psi_space=ctx.theta.kind, quadrature=system.quadrature, check_distance=False)
        if not system.theta_total:
            quad = surface_quadrature(ctx.surface, system.quadrature.potential_order)
            _, neumann_q = plane_wave_traces(system.wave, quad.points, quad.normals)
            field += evaluate_layer_potentials(None, neumann_q, quad, k, points)
    return field
