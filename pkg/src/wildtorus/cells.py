"""Cell sets on a square grid and their Lipschitz-dilated forward images."""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from wildtorus.core_maps import derivative, eval_map
from wildtorus.params import MapParams
from wildtorus.types import ComplexArray

logger = logging.getLogger(__name__)

# balls spanning more cells than this are painted one by one
_STENCIL_SPAN = 2


@dataclass(frozen=True)
class Grid:
    """Square grid ``[x_min, x_min + n·h) × [y_min, y_min + n·h)``; row index follows Im z."""
    x_min: float
    y_min: float
    cell_size: float
    resolution: int

    @classmethod
    def covering(cls, p: MapParams, resolution: int, margin: float = 2.0) -> 'Grid':
        """Grid over ``[−R − margin, R + margin]²`` with ``R = 2(1 − λ)⁻¹``."""
        half = p.radius + margin
        return cls(-half, -half, 2.0 * half / resolution, resolution)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        top = self.cell_size * self.resolution
        return self.x_min, self.y_min, self.x_min + top, self.y_min + top

    def centers(self) -> ComplexArray:
        axis = (np.arange(self.resolution) + 0.5) * self.cell_size
        return (self.x_min + axis)[None, :] + 1j * (self.y_min + axis)[:, None]

    def row_centers(self, row: int) -> ComplexArray:
        axis = (np.arange(self.resolution) + 0.5) * self.cell_size
        return self.x_min + axis + 1j * (self.y_min + (row + 0.5) * self.cell_size)

    def index_of(self, z: ComplexArray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row/column indices of the cells holding ``z`` and a mask of points on the grid."""
        z = np.asarray(z, dtype=np.complex128)
        ix = np.floor((z.real - self.x_min) / self.cell_size).astype(np.int64)
        iy = np.floor((z.imag - self.y_min) / self.cell_size).astype(np.int64)
        inside = (ix >= 0) & (ix < self.resolution) & (iy >= 0) & (iy < self.resolution)
        return np.clip(iy, 0, self.resolution - 1), np.clip(ix, 0, self.resolution - 1), inside


def _operator_norm(p: MapParams, z: ComplexArray) -> np.ndarray:
    col_x = np.asarray(derivative(p, z, np.ones_like(z)))
    col_y = np.asarray(derivative(p, z, 1j * np.ones_like(z)))
    total = np.abs(col_x) ** 2 + np.abs(col_y) ** 2
    det = col_x.real * col_y.imag - col_x.imag * col_y.real
    return np.sqrt(0.5 * (total + np.sqrt(np.maximum(total ** 2 - 4.0 * det ** 2, 0.0))))


@dataclass(frozen=True)
class CellSet:
    """Boolean mask of grid cells."""
    grid: Grid
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        n = self.grid.resolution
        if mask.shape != (n, n):
            raise ValueError(f'mask shape {mask.shape} does not match a {n}x{n} grid')
        object.__setattr__(self, 'mask', mask)

    @classmethod
    def empty(cls, grid: Grid) -> 'CellSet':
        return cls(grid, np.zeros((grid.resolution, grid.resolution), dtype=bool))

    @classmethod
    def from_predicate(cls, grid: Grid, predicate: Callable[[ComplexArray], np.ndarray]) -> 'CellSet':
        return cls(grid, np.asarray(predicate(grid.centers()), dtype=bool))

    @classmethod
    def ball(cls, grid: Grid, center: complex, radius: float) -> 'CellSet':
        """Cells whose centre lies in the closed ball, plus the cell holding the centre."""
        mask = np.abs(grid.centers() - center) <= radius
        iy, ix, inside = grid.index_of(np.array([center]))
        if inside[0]:
            mask[iy[0], ix[0]] = True
        return cls(grid, mask)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def is_empty(self) -> bool:
        return self.count == 0

    def union(self, other: 'CellSet') -> 'CellSet':
        return CellSet(self.grid, self.mask | other.mask)

    def intersection(self, other: 'CellSet') -> 'CellSet':
        return CellSet(self.grid, self.mask & other.mask)

    def intersects(self, other: 'CellSet') -> bool:
        return bool(np.any(self.mask & other.mask))

    def covers(self, other: 'CellSet') -> bool:
        return not np.any(other.mask & ~self.mask)

    def fraction_of(self, target: 'CellSet') -> float:
        """Share of ``target`` cells that belong to this set (1 for an empty target)."""
        total = target.count
        if total == 0:
            return 1.0
        return float(np.count_nonzero(self.mask & target.mask)) / total

    def contains_point(self, z: complex) -> bool:
        iy, ix, inside = self.grid.index_of(np.array([z]))
        return bool(inside[0] and self.mask[iy[0], ix[0]])

    def sample_points(self) -> ComplexArray:
        """3×3 stencil of every cell at offsets ``±h/3``, skipping ``z = 0``."""
        h = self.grid.cell_size
        centers = self.grid.centers()[self.mask]
        offsets = (np.array([-1.0, 0.0, 1.0]) * h / 3.0)
        stencil = (offsets[None, :] + 1j * offsets[:, None]).ravel()
        points = (centers[:, None] + stencil[None, :]).ravel()
        return points[points != 0]

    def forward_image(self, p: MapParams) -> 'CellSet':
        """Cells met by the image of the set.

        Each stencil point covers a square of half-width ``h/6`` around it; its image
        lies within ``L·(h/3)·√2/2`` of ``F(point)`` where ``L`` is the operator norm of
        ``DF`` at the point, and every cell meeting that ball's bounding box is marked.
        """
        grid = self.grid
        points = self.sample_points()
        image = CellSet.empty(grid)
        if points.size == 0:
            return image
        radius = _operator_norm(p, points) * (grid.cell_size / 3.0) * (math.sqrt(2.0) / 2.0)
        images = np.asarray(eval_map(p, points))
        h = grid.cell_size
        x_lo = np.floor((images.real - radius - grid.x_min) / h).astype(np.int64)
        x_hi = np.floor((images.real + radius - grid.x_min) / h).astype(np.int64)
        y_lo = np.floor((images.imag - radius - grid.y_min) / h).astype(np.int64)
        y_hi = np.floor((images.imag + radius - grid.y_min) / h).astype(np.int64)
        n = grid.resolution
        on_grid = (x_hi >= 0) & (x_lo < n) & (y_hi >= 0) & (y_lo < n)
        x_lo, x_hi = np.clip(x_lo, 0, n - 1), np.clip(x_hi, 0, n - 1)
        y_lo, y_hi = np.clip(y_lo, 0, n - 1), np.clip(y_hi, 0, n - 1)
        span = np.maximum(x_hi - x_lo, y_hi - y_lo)
        small = on_grid & (span <= _STENCIL_SPAN)
        mask = image.mask
        for dy in range(_STENCIL_SPAN + 1):
            for dx in range(_STENCIL_SPAN + 1):
                sel = small & (y_lo + dy <= y_hi) & (x_lo + dx <= x_hi)
                mask[y_lo[sel] + dy, x_lo[sel] + dx] = True
        large = np.nonzero(on_grid & ~small)[0]
        if large.size:
            logger.debug('painting %d wide image balls individually', large.size)
        for k in large:
            mask[y_lo[k]:y_hi[k] + 1, x_lo[k]:x_hi[k] + 1] = True
        return image

    def iterate(self, p: MapParams, steps: int):
        """Yields ``(m, F^m-image)`` for ``m = 1..steps``."""
        current = self
        for m in range(1, steps + 1):
            current = current.forward_image(p)
            yield m, current
