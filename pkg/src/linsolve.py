#!/usr/bin/env python3
"""
Linear Solver Module
Handles complex GMRES, the dense direct solver, ILU factorisations, block
preconditioners and condition numbers
"""

import time
import logging
import warnings
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from dataclasses import dataclass, field, asdict
from scipy.sparse.linalg import LinearOperator, splu, spilu
from typing import Callable, Dict, List, Optional, Union

from block_operator import BlockOperator
from errors import IluBreakdownError, FactorizationError, ScaleGuardError, SingularMatrixError, SpacePairingError
from formulations import FormulationSystem, STABILISED_VARIANTS
from osrc import apply_osrc
from spaces import SpaceKind

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-5
DEFAULT_DROP_TOL = 1e-4
SVD_GUARD = 8000
SINGULAR_PIVOT = 1e-14
PIVOT_WARNING = 1e-10
REORTH_THRESHOLD = 1e-8
RECIPE_CHOICES = ("none", "mass", "osrc_ntd", "osrc_dtn", "ilu_all", "ilu_inner+osrc_surface", "lu_all")
RECIPE_KEYS = ("p", "theta", "sigma")

Operator = Union[np.ndarray, sp.spmatrix, BlockOperator, LinearOperator, FormulationSystem]


@dataclass
class SolveReport:
    """
    Outcome of one solve.

    Attributes:
        iterations (int): GMRES iterations (0 for direct solves)
        residuals (List[float]): Preconditioned relative residual after each iteration
        relative_residual (float): Final preconditioned relative residual
        converged (bool): True when the tolerance was reached
        wall_time_s (float): Solver wall time
        solver (str): 'gmres' or 'direct'
        preconditioning (str): Side of the preconditioner, always 'left'
        breakdown_at (int): Iteration of a Hessenberg breakdown, None otherwise
        condition_number (float): Optional 2-norm condition number
        metadata (Dict): Formulation, variant, preconditioner label, k, unknowns
    """
    iterations: int
    residuals: List[float]
    relative_residual: float
    converged: bool
    wall_time_s: float
    solver: str = "gmres"
    preconditioning: str = "left"
    breakdown_at: Optional[int] = None
    condition_number: Optional[float] = None
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)


def _as_action(operator: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(operator, FormulationSystem):
        operator = operator.lhs
    if isinstance(operator, (BlockOperator, LinearOperator)):
        return operator.matvec
    if callable(operator) and not isinstance(operator, np.ndarray) and not sp.issparse(operator):
        return operator
    return lambda x: operator @ x


def _densify(operator: Operator) -> np.ndarray:
    if isinstance(operator, FormulationSystem):
        operator = operator.lhs
    if isinstance(operator, BlockOperator):
        return operator.to_dense()
    if sp.issparse(operator):
        return operator.toarray()
    if isinstance(operator, LinearOperator):
        return operator.matmat(np.eye(operator.shape[1], dtype=complex))
    return np.asarray(operator)


def _givens(a: complex, b: complex):
    """Complex rotation zeroing b against a."""
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, 1.0
    denom = np.hypot(abs(a), abs(b))
    return abs(a) / denom, (a / abs(a)) * np.conj(b) / denom


def gmres(operator: Operator, rhs: np.ndarray, preconditioner: Optional["Preconditioner"] = None,
          tol: float = DEFAULT_TOL, max_iter: Optional[int] = None,
          callback: Optional[Callable[[int, float], None]] = None) -> tuple:
    """
    Left-preconditioned GMRES without restart.

    Stops when ||P(b - Ax)|| / ||Pb|| <= tol or after max_iter iterations.
    Arnoldi uses modified Gram-Schmidt with a second pass when the basis loses
    orthogonality by more than 1e-8; the least-squares problem is updated by
    Givens rotations.

    Args:
        operator: Matrix, BlockOperator, LinearOperator or FormulationSystem
        rhs (np.ndarray): Right-hand side
        preconditioner (Preconditioner): Left preconditioner (identity if None)
        tol (float): Relative tolerance on the preconditioned residual
        max_iter (int): Iteration cap, defaults to the system size
        callback (Callable): Called with (iteration, relative residual)

    Returns:
        Tuple[np.ndarray, SolveReport]: Solution and report

    Raises:
        ValueError: If tol <= 0 or dimensions disagree
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    start = time.time()
    A = _as_action(operator)
    P = preconditioner.apply if preconditioner is not None else (lambda r: r)
    b = np.asarray(rhs, dtype=complex)
    n = b.shape[0]
    max_iter = n if max_iter is None else int(max_iter)

    r0 = P(b)
    beta = np.linalg.norm(r0)
    if beta == 0:
        report = SolveReport(0, [], 0.0, True, time.time() - start)
        return np.zeros(n, dtype=complex), report

    basis = [r0 / beta]
    columns: List[np.ndarray] = []
    cs: List[float] = []
    sn: List[complex] = []
    g = [complex(beta)]
    residuals: List[float] = []
    breakdown_at = None
    steps = 0

    for j in range(max_iter):
        w = P(A(basis[j]))
        norm_in = np.linalg.norm(w)
        h = np.zeros(j + 2, dtype=complex)
        for i, q in enumerate(basis):
            h[i] = np.vdot(q, w)
            w -= h[i] * q
        if norm_in > 0 and max(abs(np.vdot(q, w)) for q in basis) > REORTH_THRESHOLD * norm_in:
            for i, q in enumerate(basis):
                correction = np.vdot(q, w)
                h[i] += correction
                w -= correction * q
        h[j + 1] = np.linalg.norm(w)

        for i in range(j):
            upper = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -np.conj(sn[i]) * h[i] + cs[i] * h[i + 1]
            h[i] = upper
        c, s = _givens(h[j], h[j + 1])
        cs.append(c)
        sn.append(s)
        h[j] = c * h[j] + s * h[j + 1]
        h[j + 1] = 0.0
        g.append(-np.conj(s) * g[j])
        g[j] = c * g[j]

        if abs(h[j]) <= 1e-14 * max(norm_in, np.finfo(float).tiny):
            breakdown_at = j + 1
            logger.warning(f"GMRES breakdown: singular Hessenberg matrix at iteration {breakdown_at}")
            break
        columns.append(h)
        steps = j + 1
        residuals.append(float(abs(g[j + 1]) / beta))
        if callback is not None:
            callback(steps, residuals[-1])
        if residuals[-1] <= tol:
            break
        norm_out = np.linalg.norm(w)
        if norm_out <= 1e-14 * norm_in:
            break
        basis.append(w / norm_out)

    x = np.zeros(n, dtype=complex)
    if steps:
        R = np.zeros((steps, steps), dtype=complex)
        for j, h in enumerate(columns):
            R[:j + 1, j] = h[:j + 1]
        y = scipy.linalg.solve_triangular(R, np.asarray(g[:steps]))
        x = np.column_stack(basis[:steps]) @ y
    final = residuals[-1] if residuals else 1.0
    converged = final <= tol
    if not converged and breakdown_at is None:
        logger.warning(f"GMRES stopped after {steps} iterations at relative residual {final:.2e}")
    report = SolveReport(steps, residuals, final, converged, time.time() - start, breakdown_at=breakdown_at)
    return x, report


def direct_solve(operator: Operator, rhs: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Dense LU solve with partial pivoting.

    Args:
        operator: Matrix, BlockOperator or FormulationSystem
        rhs (np.ndarray): Right-hand side; defaults to the system's rhs

    Returns:
        np.ndarray: Solution vector

    Raises:
        SingularMatrixError: If a pivot falls below 1e-14 times the matrix scale
    """
    if rhs is None:
        if not isinstance(operator, FormulationSystem):
            raise ValueError("rhs is required unless a FormulationSystem is given")
        rhs = operator.rhs
    A = _densify(operator).astype(complex)
    b = np.asarray(rhs, dtype=complex)
    scale = np.abs(A).max() if A.size else 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A)
    pivots = np.abs(np.diag(lu))
    if scale == 0 or pivots.min() <= SINGULAR_PIVOT * scale:
        raise SingularMatrixError(f"matrix is numerically singular (smallest pivot {pivots.min():.3e})")
    ratio = pivots.min() / pivots.max()
    if ratio < PIVOT_WARNING:
        logger.warning(f"Pivot ratio {ratio:.2e}: the system is close to singular")
    x = scipy.linalg.lu_solve((lu, piv), b)
    residual = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), np.finfo(float).tiny)
    if residual > 1e-10:
        logger.warning(f"Direct solve residual {residual:.2e}")
    return x


@dataclass(frozen=True, eq=False)
class IluFactor:
    """Incomplete LU factors of a square sparse matrix."""
    factor: object
    drop_tol: float
    nnz: int

    @property
    def shape(self):
        return self.factor.shape

    def solve(self, r: np.ndarray) -> np.ndarray:
        return self.factor.solve(np.asarray(r, dtype=complex))


def build_ilu(matrix: sp.spmatrix, drop_tol: float = DEFAULT_DROP_TOL, fill_factor: float = 10.0) -> IluFactor:
    """
    Threshold ILU with partial pivoting (SuperLU).

    Args:
        matrix (sp.spmatrix): Square sparse matrix
        drop_tol (float): Drop tolerance; 0 keeps every entry
        fill_factor (float): Upper bound on the fill ratio

    Returns:
        IluFactor: Factors whose solve() is the preconditioner action

    Raises:
        IluBreakdownError: On a zero pivot or non-finite factors
    """
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"ILU needs a square matrix, got {matrix.shape}")
    A = sp.csc_matrix(matrix, dtype=complex)
    if drop_tol == 0:
        fill_factor = max(fill_factor, float(A.shape[0]))
    try:
        factor = spilu(A, drop_tol=drop_tol, fill_factor=fill_factor)
    except RuntimeError as e:
        raise IluBreakdownError(f"ILU breakdown: {e}") from e
    if not (np.isfinite(factor.L.data).all() and np.isfinite(factor.U.data).all()):
        raise IluBreakdownError("ILU produced non-finite factors")
    return IluFactor(factor, drop_tol, int(factor.L.nnz + factor.U.nnz))


def _sparse_lu(matrix: sp.spmatrix, label: str):
    try:
        return splu(sp.csc_matrix(matrix, dtype=complex))
    except RuntimeError as e:
        raise FactorizationError(f"cannot factorise {label}: {e}") from e


class Preconditioner:
    """
    Block-diagonal left preconditioner: block row i of the residual is mapped to unknown i.

    Attributes:
        actions (List[Callable]): One action per block row
        labels (List[str]): Recipe choice of every block row
        row_offsets (np.ndarray): Offsets of the residual blocks
        col_offsets (np.ndarray): Offsets of the unknown blocks
    """

    def __init__(self, actions: List[Callable], labels: List[str], row_offsets, col_offsets):
        self.actions = actions
        self.labels = labels
        self.row_offsets = np.asarray(row_offsets, dtype=int)
        self.col_offsets = np.asarray(col_offsets, dtype=int)

    @property
    def shape(self):
        return int(self.col_offsets[-1]), int(self.row_offsets[-1])

    @property
    def label(self) -> str:
        used = sorted({l for l in self.labels if l != "none"})
        return "/".join(used) if used else "none"

    def apply(self, r: np.ndarray) -> np.ndarray:
        out = np.empty(self.shape[0], dtype=complex)
        for i, action in enumerate(self.actions):
            piece = r[self.row_offsets[i]:self.row_offsets[i + 1]]
            out[self.col_offsets[i]:self.col_offsets[i + 1]] = action(piece)
        return out

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, dtype=complex)


def default_recipe(variant: Optional[str]) -> Dict[str, str]:
    """
    Operator-order matched OSRC recipe of a formulation variant.

    Base-shaped rows pair V with OSRC-DtN and S with OSRC-NtD; after the row
    permutation the second row is the mass-dominated one and the third is V.
    """
    if variant is not None and STABILISED_VARIANTS.get(variant, (None, False))[1]:
        return {"p": "ilu_inner+osrc_surface", "theta": "mass", "sigma": "osrc_dtn"}
    return {"p": "ilu_inner+osrc_surface", "theta": "osrc_dtn", "sigma": "osrc_ntd"}


def _identity(r):
    return np.asarray(r, dtype=complex).copy()


def _row_action(system: FormulationSystem, row: int, choice: str, drop_tol: float) -> Callable:
    """Preconditioner action of one block row of a formulation system."""
    lhs = system.lhs
    name, domain = system.unknowns[row]
    ctx = system.contexts[domain]
    row_kind = lhs.row_spaces[row].kind
    col_kind = lhs.col_spaces[row].kind
    if choice == "none":
        return _identity

    if name == "p":
        if choice == "ilu_all":
            ilu = build_ilu(ctx.fem.matrix, drop_tol)
            return ilu.solve
        if choice == "lu_all":
            return _sparse_lu(ctx.fem.matrix, "F").solve
        if choice == "ilu_inner+osrc_surface":
            Z, Zbar = ctx.maps.Z, ctx.maps.Zbar
            ilu = build_ilu(Zbar @ ctx.fem.matrix @ Zbar.T, drop_tol)
            mass = _sparse_lu(ctx.m_gamma.matrix, "surface mass")
            ntd = ctx.osrc("NtD", sign=-1)

            def split_action(r):
                return Zbar.T @ ilu.solve(Zbar @ r) + Z.T @ apply_osrc(ntd, mass.solve(Z @ r))
            return split_action
        raise SpacePairingError(f"'{choice}' is not available for the volume unknown")

    if choice in ("ilu_all", "lu_all", "ilu_inner+osrc_surface"):
        raise SpacePairingError(f"'{choice}' only applies to the volume unknown")
    if row_kind != SpaceKind.SURFACE_P1 or col_kind != SpaceKind.SURFACE_P1:
        raise SpacePairingError(f"'{choice}' needs P1 surface rows and unknowns; row {row} pairs "
                                f"{row_kind.value} with {col_kind.value} (the mass matrix is rectangular)")
    mass = _sparse_lu(ctx.m_gamma.matrix, "surface mass")
    if choice == "mass":
        return lambda r: mass.solve(np.asarray(r, dtype=complex))
    op = ctx.osrc("NtD" if choice == "osrc_ntd" else "DtN", sign=-1)
    return lambda r: apply_osrc(op, mass.solve(np.asarray(r, dtype=complex)))


def build_block_preconditioner(recipe: Optional[Dict[str, str]], system: FormulationSystem,
                               drop_tol: float = DEFAULT_DROP_TOL) -> Preconditioner:
    """
    Block-diagonal preconditioner from a per-row recipe.

    Recipe keys name block rows by position within each domain: 'p' (first),
    'theta' (second), 'sigma' (third). Surface OSRC choices act as
    -L(M^-1 r) on the weak residual; 'ilu_inner+osrc_surface' applies
    Zbar^T ILU(Zbar F Zbar^T)^-1 Zbar + Z^T (-L_NtD) M^-1 Z on the first row.

    Args:
        recipe (Dict[str, str]): Row key to choice; missing keys mean 'none'
        system (FormulationSystem): Assembled system
        drop_tol (float): ILU drop tolerance

    Returns:
        Preconditioner: Block-diagonal action

    Raises:
        SpacePairingError: For unknown choices or incompatible row spaces
        IluBreakdownError: If an ILU factorisation fails
    """
    recipe = dict(recipe or {})
    for key, choice in recipe.items():
        if key not in RECIPE_KEYS:
            raise SpacePairingError(f"unknown recipe key '{key}', expected {RECIPE_KEYS}")
        if choice not in RECIPE_CHOICES:
            raise SpacePairingError(f"unknown preconditioner '{choice}' for '{key}'")
    lhs = system.lhs
    if all(choice == "none" for choice in recipe.values()):
        n = lhs.shape[0]
        return Preconditioner([_identity], ["none"], [0, n], [0, n])

    if lhs.row_sizes != lhs.col_sizes:
        raise SpacePairingError("block-diagonal preconditioning needs matching row and unknown sizes")
    per_domain = lhs.grid_shape[0] // len(system.contexts)
    labels = [recipe.get(RECIPE_KEYS[i % per_domain], "none") for i in range(lhs.grid_shape[0])]
    actions = [_row_action(system, i, choice, drop_tol) for i, choice in enumerate(labels)]
    logger.debug(f"Built block preconditioner {labels}")
    return Preconditioner(actions, labels, lhs.row_offsets, lhs.col_offsets)


def condition_number(operator: Operator, guard: int = SVD_GUARD) -> float:
    """
    2-norm condition number from a dense SVD.

    Raises:
        ScaleGuardError: Above `guard` unknowns
    """
    shape = operator.lhs.shape if isinstance(operator, FormulationSystem) else operator.shape
    if max(shape) > guard:
        raise ScaleGuardError(f"{max(shape)} unknowns exceed the dense SVD guard of {guard}")
    s = scipy.linalg.svdvals(_densify(operator))
    return float("inf") if s[-1] == 0 else float(s[0] / s[-1])


def solve_system(system: FormulationSystem, method: str = "gmres", recipe: Optional[Dict[str, str]] = None,
                 tol: float = DEFAULT_TOL, max_iter: Optional[int] = None, drop_tol: float = DEFAULT_DROP_TOL,
                 with_condition: bool = False) -> tuple:
    """
    Solve a formulation system and attach its metadata to the report.

    Args:
        system (FormulationSystem): Assembled system
        method (str): 'gmres' or 'direct'
        recipe (Dict[str, str]): Preconditioner recipe for GMRES
        tol (float): GMRES tolerance
        max_iter (int): GMRES iteration cap
        drop_tol (float): ILU drop tolerance
        with_condition (bool): Also compute the condition number

    Returns:
        Tuple[np.ndarray, SolveReport]: Solution and report
    """
    label = "none"
    if method == "direct":
        start = time.time()
        x = direct_solve(system)
        residual = np.linalg.norm(system.lhs.matvec(x) - system.rhs) / max(np.linalg.norm(system.rhs), 1e-300)
        report = SolveReport(0, [], float(residual), True, time.time() - start, solver="direct")
    elif method == "gmres":
        preconditioner = build_block_preconditioner(recipe, system, drop_tol) if recipe else None
        label = preconditioner.label if preconditioner is not None else "none"
        x, report = gmres(system, system.rhs, preconditioner, tol=tol, max_iter=max_iter)
    else:
        raise ValueError(f"unknown solve method '{method}'")
    if with_condition:
        report.condition_number = condition_number(system)
    report.metadata.update({"formulation": system.formulation, "variant": system.variant or "",
                            "preconditioner": label, "k": system.k_ext, "n_unknowns": system.n_unknowns,
                            "regulariser": system.regulariser or "", "theta_space": system.theta_space})
    return x, report
