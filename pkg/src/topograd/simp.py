"""Density-based material interpolation and compliance evaluation.

One call to :func:`evaluate` is the expensive primitive of the whole
engine: filter the design, assemble, solve the equilibrium system once,
and return the objective together with its adjoint gradient. Compliance
is self-adjoint, so the gradient comes for free from the state vector.

The density filter is a conic-weight local average with radius ``rmin``
(element units). Its weight matrix H is symmetric, so the chain rule
through the row-normalized filter W = diag(1/Hs) H is W^T v = H (v / Hs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    BoundarySpec,
    DofMap,
    StructuredGrid,
    assemble,
    build_dof_map,
    element_stiffness_elastic,
    element_stiffness_heat,
    solve,
)

DEFAULT_PENALTY = 3.0
DEFAULT_FILTER_RADIUS = 1.5
DEFAULT_POISSON = 0.3


@dataclass(frozen=True)
class MaterialModel:
    """Two-phase power-law interpolation between void and solid moduli."""

    e_solid: float = 1.0
    e_void: float = 0.001
    penalty: float = DEFAULT_PENALTY

    def __post_init__(self):
        if not 0.0 < self.e_void < self.e_solid:
            raise ValueError(f"need 0 < e_void < e_solid, got {self.e_void}, {self.e_solid}")
        if self.penalty < 1.0:
            raise ValueError(f"penalty must be >= 1, got {self.penalty}")


@dataclass(frozen=True)
class FilterSpec:
    """Conic-weight density filter, radius in element units."""

    radius: float = DEFAULT_FILTER_RADIUS

    def __post_init__(self):
        if self.radius < 1.0:
            raise ValueError(f"filter radius must be >= 1, got {self.radius}")


@dataclass
class DensityField:
    """Per-element densities in [0, 1] on a structured grid."""

    values: np.ndarray
    grid: StructuredGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.num_elements,):
            raise ValueError(f"expected {self.grid.num_elements} densities, got {self.values.shape}")
        if self.values.min() < -1e-12 or self.values.max() > 1.0 + 1e-12:
            raise ValueError("densities must lie in [0, 1]")
        np.clip(self.values, 0.0, 1.0, out=self.values)

    def copy_with(self, values: np.ndarray) -> "DensityField":
        return DensityField(values=np.asarray(values, dtype=float).copy(), grid=self.grid)


@dataclass
class ProblemSpec:
    """Full statement of one optimization problem.

    physics is 'elastic' (plane-stress compliance) or 'heat' (thermal
    compliance). The boundary spec supplies Dirichlet dofs and loads in
    the dof numbering of the physics kind.
    """

    physics: str
    grid: StructuredGrid
    material: MaterialModel
    boundary: BoundarySpec
    volume_fraction: float
    filter_spec: FilterSpec = field(default_factory=FilterSpec)
    poisson_ratio: float = DEFAULT_POISSON
    name: str = ""

    def __post_init__(self):
        if self.physics not in ("elastic", "heat"):
            raise ValueError(f"physics must be 'elastic' or 'heat', got {self.physics!r}")
        if not 0.0 < self.volume_fraction < 1.0:
            raise ValueError(f"volume_fraction must lie in (0, 1), got {self.volume_fraction}")
        self._dofmap: DofMap | None = None
        self._k0: np.ndarray | None = None
        self._filter: tuple[sp.csr_matrix, np.ndarray] | None = None

    @property
    def dofs_per_node(self) -> int:
        return 2 if self.physics == "elastic" else 1

    @property
    def num_elements(self) -> int:
        return self.grid.num_elements

    def dofmap(self) -> DofMap:
        if self._dofmap is None:
            self._dofmap = build_dof_map(self.grid, self.dofs_per_node)
        return self._dofmap

    def element_matrix(self) -> np.ndarray:
        if self._k0 is None:
            if self.physics == "elastic":
                self._k0 = element_stiffness_elastic(self.poisson_ratio)
            else:
                self._k0 = element_stiffness_heat()
        return self._k0

    def filter_matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if self._filter is None:
            self._filter = build_filter_matrix(self.grid, self.filter_spec)
        return self._filter

    def uniform_design(self) -> DensityField:
        return DensityField(np.full(self.num_elements, self.volume_fraction), self.grid)


@dataclass
class Evaluation:
    """Objective, adjoint gradient wrt raw densities, state, solve count."""

    objective: float
    gradient: np.ndarray
    state: np.ndarray
    fem_solves: int = 1


def interpolate(x_e: float | np.ndarray, model: MaterialModel):
    """Power-law modulus e_void + x^p (e_solid - e_void)."""
    x = np.asarray(x_e, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("density outside [0, 1]")
    out = model.e_void + x**model.penalty * (model.e_solid - model.e_void)
    return float(out) if np.isscalar(x_e) else out


def build_filter_matrix(grid: StructuredGrid, spec: FilterSpec) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse conic-weight matrix H and its row sums Hs.

    H[e, i] = max(0, rmin - dist(e, i)) over element centers; symmetric.
    """
    nelx, nely, rmin = grid.nelx, grid.nely, spec.radius
    reach = int(np.ceil(rmin)) - 1
    rows, cols, vals = [], [], []
    for ix in range(nelx):
        for iy in range(nely):
            e = ix * nely + iy
            for jx in range(max(ix - reach, 0), min(ix + reach + 1, nelx)):
                for jy in range(max(iy - reach, 0), min(iy + reach + 1, nely)):
                    w = rmin - np.sqrt((ix - jx) ** 2 + (iy - jy) ** 2)
                    if w > 0.0:
                        rows.append(e)
                        cols.append(jx * nely + jy)
                        vals.append(w)
    n = grid.num_elements
    H = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    Hs = np.asarray(H.sum(axis=1)).ravel()
    return H, Hs


def density_filter(x: DensityField, spec: FilterSpec) -> DensityField:
    """Row-normalized conic-weight average of the raw densities."""
    H, Hs = build_filter_matrix(x.grid, spec)
    return x.copy_with((H @ x.values) / Hs)


def filter_chain_rule(sensitivity: np.ndarray, grid: StructuredGrid, spec: FilterSpec) -> np.ndarray:
    """Adjoint of the filter: W^T s for W = diag(1/Hs) H."""
    H, Hs = build_filter_matrix(grid, spec)
    return H @ (np.asarray(sensitivity, dtype=float) / Hs)


def volume_fraction(x: DensityField) -> float:
    """Mean density of the field."""
    return float(np.mean(x.values))


def evaluate(x: DensityField, problem: ProblemSpec, solver: str = "cg") -> Evaluation:
    """One FEM evaluation: objective and adjoint gradient at design x.

    The objective is C = sum_e E_e(xf_e) u_e^T k0 u_e on the filtered
    field xf; the gradient -p xf^(p-1) (E0 - Emin) u_e^T k0 u_e is
    chain-ruled back through the filter to the raw densities.
    """
    H, Hs = problem.filter_matrix()
    xf = (H @ x.values) / Hs
    model = problem.material
    scales = model.e_void + xf**model.penalty * (model.e_solid - model.e_void)

    k0 = problem.element_matrix()
    dofmap = problem.dofmap()
    K = assemble(x.grid, scales, k0, dofmap)
    u = solve(K, problem.boundary, method=solver)

    ue = u[dofmap.element_dofs]
    element_energy = np.einsum("ij,jk,ik->i", ue, k0, ue)
    objective = float(scales @ element_energy)
    if not np.isfinite(objective):
        raise FloatingPointError(f"nonfinite objective {objective}")

    dC_dxf = -model.penalty * xf ** (model.penalty - 1.0) * (model.e_solid - model.e_void) * element_energy
    gradient = H @ (dC_dxf / Hs)
    return Evaluation(objective=objective, gradient=gradient, state=u, fem_solves=1)
