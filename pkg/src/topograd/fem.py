"""Structured-grid finite element core.

Bilinear quadrilateral elements on a regular nelx-by-nely grid of unit
squares. Nodes are numbered column-major (y fastest, x slowest); element
nodes are listed counterclockwise starting at the lower-left corner.
Supports plane-stress elasticity (2 dofs/node, unit Young's modulus) and
scalar heat conduction (1 dof/node, unit conductivity); per-element
stiffness scaling is supplied by the caller.

Dirichlet conditions are applied by reduced-system elimination, which
keeps the reduced operator symmetric positive definite. The production
solver is Jacobi-preconditioned conjugate gradients; a dense direct
solve is available for small systems (<= 2,000 dofs) as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DIRECT_SOLVE_MAX_DOFS = 2000
CG_TOL = 1e-10


class SolverError(RuntimeError):
    """Iterative solve failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class SingularSystemError(RuntimeError):
    """The reduced system is singular or numerically indefinite."""


@dataclass(frozen=True)
class StructuredGrid:
    """Regular grid of nelx * nely unit-square elements."""

    nelx: int
    nely: int
    element_size: float = 1.0

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise ValueError(f"grid must have at least one element per axis, got {self.nelx}x{self.nely}")
        if self.element_size <= 0:
            raise ValueError("element_size must be positive")

    @property
    def num_elements(self) -> int:
        return self.nelx * self.nely

    @property
    def num_nodes(self) -> int:
        return (self.nelx + 1) * (self.nely + 1)

    def node_id(self, ix: int, iy: int) -> int:
        """Global node index at grid position (ix, iy); y runs fastest."""
        return ix * (self.nely + 1) + iy


@dataclass(frozen=True)
class DofMap:
    """Element-to-global dof connectivity for one physics kind."""

    dofs_per_node: int
    element_dofs: np.ndarray  # (num_elements, 4*dofs_per_node) int array
    num_dofs: int

    def __post_init__(self):
        expected = 4 * self.dofs_per_node
        if self.element_dofs.ndim != 2 or self.element_dofs.shape[1] != expected:
            raise ValueError(f"element_dofs must be (N, {expected})")
        if self.element_dofs.min() < 0 or self.element_dofs.max() >= self.num_dofs:
            raise ValueError("element dof indices out of range")


@dataclass
class BoundarySpec:
    """Dirichlet dofs (prescribed zero) plus the global load vector."""

    fixed_dofs: np.ndarray
    load: np.ndarray

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=int))
        self.load = np.asarray(self.load, dtype=float)
        if self.fixed_dofs.size == 0:
            raise ValueError("fixed_dofs must be nonempty (otherwise the system is singular)")
        if not np.all(np.isfinite(self.load)):
            raise ValueError("load vector contains nonfinite entries")

    def free_dofs(self, num_dofs: int) -> np.ndarray:
        return np.setdiff1d(np.arange(num_dofs), self.fixed_dofs, assume_unique=False)


def build_dof_map(grid: StructuredGrid, dofs_per_node: int) -> DofMap:
    """Connectivity for all elements; nodes counterclockwise from lower-left."""
    if dofs_per_node not in (1, 2):
        raise ValueError("dofs_per_node must be 1 (heat) or 2 (elasticity)")
    nelx, nely = grid.nelx, grid.nely
    ex, ey = np.meshgrid(np.arange(nelx), np.arange(nely), indexing="ij")
    ex = ex.ravel()
    ey = ey.ravel()
    n_ll = ex * (nely + 1) + ey
    nodes = np.column_stack([n_ll, n_ll + (nely + 1), n_ll + (nely + 2), n_ll + 1])
    if dofs_per_node == 1:
        edofs = nodes
    else:
        edofs = np.empty((grid.num_elements, 8), dtype=int)
        edofs[:, 0::2] = 2 * nodes
        edofs[:, 1::2] = 2 * nodes + 1
    return DofMap(dofs_per_node=dofs_per_node, element_dofs=edofs, num_dofs=dofs_per_node * grid.num_nodes)


def element_stiffness_elastic(poisson_ratio: float = 0.3) -> np.ndarray:
    """8x8 plane-stress stiffness of a unit-square Q4 element, E = 1.

    Closed-form integration; matrix is independent of the element edge
    length in 2D plane stress with unit thickness.
    """
    nu = float(poisson_ratio)
    if not 0.0 < nu < 0.5:
        raise ValueError(f"poisson_ratio must lie in (0, 0.5), got {nu}")
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return k[idx] / (1 - nu**2)


def element_stiffness_heat() -> np.ndarray:
    """4x4 conduction matrix of a unit-square Q4 element, k = 1."""
    return (1.0 / 6.0) * np.array([
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ])


def assemble(
    grid: StructuredGrid,
    per_element_scale: np.ndarray,
    k0: np.ndarray,
    dofmap: DofMap,
) -> sp.csr_matrix:
    """Global stiffness K = sum_e scale_e * scatter(k0), CSR format."""
    scale = np.asarray(per_element_scale, dtype=float)
    if scale.shape != (grid.num_elements,):
        raise ValueError(f"per_element_scale must have length {grid.num_elements}")
    if np.any(scale <= 0.0):
        raise ValueError("per_element_scale entries must be positive (SPD guarantee)")
    edofs = dofmap.element_dofs
    ndof_e = edofs.shape[1]
    rows = np.repeat(edofs, ndof_e, axis=1).ravel()
    cols = np.tile(edofs, (1, ndof_e)).ravel()
    vals = (scale[:, None] * k0.ravel()[None, :]).ravel()
    K = sp.coo_matrix((vals, (rows, cols)), shape=(dofmap.num_dofs, dofmap.num_dofs))
    return K.tocsr()


def _reduced_system(K: sp.csr_matrix, boundary: BoundarySpec):
    free = boundary.free_dofs(K.shape[0])
    Kr = K[free][:, free]
    fr = boundary.load[free]
    return free, Kr.tocsr(), fr


def solve_direct(K: sp.csr_matrix, boundary: BoundarySpec) -> np.ndarray:
    """Dense Gaussian-elimination solve of the reduced system (small meshes)."""
    if K.shape[0] > DIRECT_SOLVE_MAX_DOFS:
        raise ValueError(f"direct solve limited to {DIRECT_SOLVE_MAX_DOFS} dofs, got {K.shape[0]}")
    free, Kr, fr = _reduced_system(K, boundary)
    dense = Kr.toarray()
    try:
        ur = np.linalg.solve(dense, fr)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"reduced system is singular: {exc}") from exc
    norm_f = np.linalg.norm(fr)
    if norm_f > 0.0:
        rel = np.linalg.norm(dense @ ur - fr) / norm_f
        if not np.isfinite(rel) or rel > 1e-6:
            raise SingularSystemError(f"reduced system numerically singular (residual {rel:.3e})")
    u = np.zeros(K.shape[0])
    u[free] = ur
    return u


def solve_cg(
    K: sp.csr_matrix,
    boundary: BoundarySpec,
    tol: float = CG_TOL,
    max_iter: int | None = None,
) -> np.ndarray:
    """Jacobi-preconditioned CG on the reduced system.

    Converged when ||K_r u_r - f_r|| / ||f_r|| <= tol. Fixed dofs are
    exactly zero in the returned vector.
    """
    free, Kr, fr = _reduced_system(K, boundary)
    n = Kr.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    u = np.zeros(K.shape[0])
    norm_f = np.linalg.norm(fr)
    if norm_f == 0.0:
        return u

    diag = Kr.diagonal()
    if np.any(diag <= 0.0):
        raise SingularSystemError("nonpositive diagonal in reduced system")
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = fr.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    rel = np.linalg.norm(r) / norm_f
    for _ in range(max_iter):
        if rel <= tol:
            u[free] = x
            return u
        Ap = Kr @ p
        pAp = p @ Ap
        if pAp <= 0.0 or not np.isfinite(pAp):
            raise SingularSystemError(f"CG breakdown: p^T K p = {pAp:.3e}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / norm_f
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if rel <= tol:
        u[free] = x
        return u
    raise SolverError(f"CG did not converge in {max_iter} iterations", residual=float(rel))


def solve(
    K: sp.csr_matrix,
    boundary: BoundarySpec,
    method: str = "cg",
    tol: float = CG_TOL,
) -> np.ndarray:
    """Solve K u = F with Dirichlet elimination; method 'cg' or 'direct'."""
    if method == "cg":
        return solve_cg(K, boundary, tol=tol)
    if method == "direct":
        return solve_direct(K, boundary)
    raise ValueError(f"unknown solver method {method!r}")
