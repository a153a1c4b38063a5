import numpy as np
import pytest

from topograd.fem import BoundarySpec, StructuredGrid, build_dof_map
from topograd.simp import FilterSpec, MaterialModel, ProblemSpec


def make_cantilever(nelx, nely, volfrac=0.4, rmin=1.5):
    """Left edge clamped, unit downward load at the lower-right node."""
    grid = StructuredGrid(nelx, nely)
    dm = build_dof_map(grid, 2)
    left_nodes = np.arange(nely + 1)
    fixed = np.concatenate([2 * left_nodes, 2 * left_nodes + 1])
    load = np.zeros(dm.num_dofs)
    load[2 * grid.node_id(nelx, 0) + 1] = -1.0
    return ProblemSpec(
        physics="elastic",
        grid=grid,
        material=MaterialModel(e_solid=1.0, e_void=0.001, penalty=3.0),
        boundary=BoundarySpec(fixed_dofs=fixed, load=load),
        volume_fraction=volfrac,
        filter_spec=FilterSpec(radius=rmin),
        name="cantilever",
    )


def make_heat_plate(nelx, nely, volfrac=0.4, rmin=1.5, sink_frac=0.1):
    """Uniform unit source everywhere, zero-temperature sink centered on the left edge."""
    grid = StructuredGrid(nelx, nely)
    dm = build_dof_map(grid, 1)
    load = np.zeros(dm.num_dofs)
    np.add.at(load, dm.element_dofs.ravel(), 0.25)
    m = int(np.ceil(sink_frac * (nely + 1)))
    start = (nely + 1 - m) // 2
    fixed = np.arange(start, start + m)
    return ProblemSpec(
        physics="heat",
        grid=grid,
        material=MaterialModel(e_solid=1.0, e_void=0.001, penalty=3.0),
        boundary=BoundarySpec(fixed_dofs=fixed, load=load),
        volume_fraction=volfrac,
        filter_spec=FilterSpec(radius=rmin),
        name="heat-plate",
    )


@pytest.fixture
def small_cantilever():
    return make_cantilever(6, 2, volfrac=0.5)
