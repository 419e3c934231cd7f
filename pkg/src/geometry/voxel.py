#!/usr/bin/env python3
"""
Voxel occupancy and intersection volume.

Voxel centers sit on a global lattice ((i + 0.5) * cell_size) so that two
meshes voxelized over the same box agree cell for cell. A center is occupied
when its signed distance is negative. Exact signed distances are only
evaluated for centers near the surface; the remaining far centers are grouped
into 6-connected components, each of which lies entirely on one side of the
surface, and one representative per component decides its side.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from geometry.mesh import TriMesh

logger = logging.getLogger(__name__)

DEFAULT_CELL_SIZE = 1.0
MM3_PER_CM3 = 1000.0


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Boolean occupancy on a regular grid; origin is the min corner of cell (0, 0, 0)."""

    origin: np.ndarray
    cell_size: float
    occupancy: np.ndarray

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.occupancy.shape)

    def centers(self) -> np.ndarray:
        """(N, 3) cell centers in C order of the occupancy array."""
        axes = [
            self.origin[d] + (np.arange(self.occupancy.shape[d]) + 0.5) * self.cell_size
            for d in range(3)
        ]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack(grid, axis=-1).reshape(-1, 3)

    @property
    def volume_mm3(self) -> float:
        return float(np.count_nonzero(self.occupancy)) * self.cell_size ** 3

    def window(self, origin: np.ndarray, shape: Tuple[int, int, int]) -> np.ndarray:
        """Occupancy over another box of the same lattice; cells outside this grid are empty."""
        offset = np.rint((np.asarray(origin) - self.origin) / self.cell_size).astype(np.int64)
        out = np.zeros(shape, dtype=bool)
        src_lo = np.maximum(offset, 0)
        src_hi = np.minimum(offset + np.asarray(shape), self.shape)
        if np.any(src_hi <= src_lo):
            return out
        dst = tuple(slice(lo, hi) for lo, hi in zip(src_lo - offset, src_hi - offset))
        src = tuple(slice(lo, hi) for lo, hi in zip(src_lo, src_hi))
        out[dst] = self.occupancy[src]
        return out


def lattice_box(lower: np.ndarray, upper: np.ndarray, cell_size: float) -> Tuple[np.ndarray, Tuple[int, int, int]]:
    """Lattice-aligned origin and cell counts covering [lower, upper] padded by one cell."""
    lo = np.floor(np.asarray(lower) / cell_size).astype(np.int64) - 1
    hi = np.ceil(np.asarray(upper) / cell_size).astype(np.int64) + 1
    return lo * cell_size, tuple(int(n) for n in (hi - lo))


def voxelize(
    mesh: TriMesh,
    cell_size: float = DEFAULT_CELL_SIZE,
    box: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> VoxelGrid:
    """
    Occupancy of a closed mesh over its padded AABB (or over `box` if given).

    Raises:
        NotWatertight: if the mesh is not closed.
    """
    mesh.check_watertight()
    if cell_size <= 0:
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    lower, upper = box if box is not None else mesh.bounds
    origin, shape = lattice_box(lower, upper, cell_size)
    grid = VoxelGrid(origin=origin, cell_size=float(cell_size), occupancy=np.zeros(shape, dtype=bool))
    inside = _inside_centers(mesh, grid.centers(), shape, cell_size)
    return VoxelGrid(origin=origin, cell_size=float(cell_size), occupancy=inside.reshape(shape))


def _inside_centers(mesh: TriMesh, centers: np.ndarray, shape: Tuple[int, int, int], cell_size: float) -> np.ndarray:
    surface = mesh.surface
    _, vertex_distance = surface.vertex_index.query(centers)
    # any surface point is within one edge length of a mesh vertex
    lower_bound = vertex_distance - mesh.max_edge_length
    near = lower_bound <= cell_size

    inside = np.zeros(len(centers), dtype=bool)
    if near.any():
        inside[near] = surface.signed_distance(centers[near]) < 0

    far = (~near).reshape(shape)
    labels, n_components = ndimage.label(far)
    if n_components:
        flat_labels = labels.reshape(-1)
        present, first = np.unique(flat_labels, return_index=True)
        first = first[present > 0]
        side = surface.signed_distance(centers[first]) < 0
        component_inside = np.zeros(n_components + 1, dtype=bool)
        component_inside[present[present > 0]] = side
        inside[~near] = component_inside[flat_labels[~near]]
    logger.debug(
        f"Voxelized {len(centers)} cells: {int(near.sum())} exact, {n_components} far components"
    )
    return inside


def intersection_volume(
    a: TriMesh, b: TriMesh, cell_size: float = DEFAULT_CELL_SIZE, b_grid: Optional[VoxelGrid] = None
) -> float:
    """
    Volume (cm^3) of voxel centers inside both closed meshes.

    `b_grid`, a voxelization of all of `b` at `cell_size`, replaces voxelizing
    `b` again when one mesh is scored against many others.

    Raises:
        NotWatertight: if either mesh is not closed.
        ValueError: if `b_grid` uses another cell size
    """
    if b_grid is not None and b_grid.cell_size != float(cell_size):
        raise ValueError(f"b_grid has cell size {b_grid.cell_size}, expected {cell_size}")
    a.check_watertight()
    b.check_watertight()
    a_lo, a_hi = a.bounds
    b_lo, b_hi = b.bounds
    lower = np.maximum(a_lo, b_lo)
    upper = np.minimum(a_hi, b_hi)
    if np.any(lower >= upper):
        return 0.0
    grid_a = voxelize(a, cell_size, box=(lower, upper))
    if b_grid is not None:
        occupied_b = b_grid.window(grid_a.origin, grid_a.shape)
    else:
        occupied_b = voxelize(b, cell_size, box=(lower, upper)).occupancy
    both = np.count_nonzero(grid_a.occupancy & occupied_b)
    return both * cell_size ** 3 / MM3_PER_CM3
