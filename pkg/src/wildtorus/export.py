"""Image and table writers for computed artifacts.

Every writer is deterministic: equal inputs give byte-identical files.
"""
import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from wildtorus.exceptions import ParameterError
from wildtorus.flow import TRAJECTORY_HEADER, Trajectory
from wildtorus.geometry import Arc
from wildtorus.invariant_set import Region
from wildtorus.params import MapParams
from wildtorus.reports import write_json
from wildtorus.types import ComplexArray

logger = logging.getLogger(__name__)

ARC_HEADER = ('re', 'im', 'tan_re', 'tan_im')
PERIODIC_HEADER = ('re', 'im', 'period', 'kind', 'eig1_re', 'eig1_im', 'eig2_re', 'eig2_im')
FORMATS = ('pgm', 'ppm', 'csv')

RED = (255, 0, 0)
GREEN = (0, 160, 0)
BLUE = (0, 0, 255)
WHITE = (255, 255, 255)

PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_pgm(path: PathLike, pixels: np.ndarray) -> Path:
    """Binary greyscale image, first row on top."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ParameterError(f'PGM needs a 2-d array, got shape {pixels.shape}')
    height, width = pixels.shape
    path = _prepare(path)
    path.write_bytes(b'P5\n%d %d\n255\n' % (width, height) + pixels.astype(np.uint8).tobytes())
    return path


def write_ppm(path: PathLike, pixels: np.ndarray) -> Path:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ParameterError(f'PPM needs an (h, w, 3) array, got shape {pixels.shape}')
    height, width, _ = pixels.shape
    path = _prepare(path)
    path.write_bytes(b'P6\n%d %d\n255\n' % (width, height) + pixels.astype(np.uint8).tobytes())
    return path


def read_pnm(path: PathLike) -> np.ndarray:
    """Reads back a file written by :func:`write_pgm` or :func:`write_ppm`."""
    data = Path(path).read_bytes()
    magic, size, depth, body = data.split(b'\n', 3)
    width, height = (int(v) for v in size.split())
    if int(depth) != 255 or magic not in (b'P5', b'P6'):
        raise ParameterError(f'unsupported image header in {path}')
    pixels = np.frombuffer(body, dtype=np.uint8)
    return pixels.reshape(height, width) if magic == b'P5' else pixels.reshape(height, width, 3)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = _prepare(path)
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_region(path: PathLike, p: MapParams, region: Region) -> Tuple[Path, Path]:
    """``<path>.pgm`` with one byte per cell and ``<path>.json`` with the grid header."""
    path = Path(path)
    image = write_pgm(path.with_suffix('.pgm'), region.image_rows())
    header = write_json(path.with_suffix('.json'), region.header(p))
    logger.info('region written to %s', image)
    return image, header


def write_arcs(path: PathLike, arcs: Sequence[Arc]) -> Path:
    return write_csv(path, ARC_HEADER, (row for arc in arcs for row in arc.rows()))


def write_periodic(path: PathLike, orbits: Sequence) -> Path:
    """Rows of :class:`wildtorus.annulus_dynamics.PeriodicOrbit`."""
    return write_csv(path, PERIODIC_HEADER, (orbit.row() for orbit in orbits))


def write_trajectory(path: PathLike, trajectory: Trajectory) -> Path:
    return write_csv(path, TRAJECTORY_HEADER, trajectory.rows())


class Canvas:
    """RGB raster over a rectangle of the plane; row 0 is the top edge."""

    def __init__(self, bounds: Tuple[float, float, float, float], size: int = 512):
        x_min, y_min, x_max, y_max = bounds
        if not (x_max > x_min and y_max > y_min) or size < 2:
            raise ParameterError(f'degenerate canvas {bounds} at size {size}')
        self.bounds = bounds
        self.scale = (size - 1) / max(x_max - x_min, y_max - y_min)
        self.width = int(round((x_max - x_min) * self.scale)) + 1
        self.height = int(round((y_max - y_min) * self.scale)) + 1
        self.pixels = np.full((self.height, self.width, 3), WHITE, dtype=np.uint8)

    @classmethod
    def around(cls, curves: Sequence[ComplexArray], size: int = 512, margin: float = 0.05) -> 'Canvas':
        points = np.concatenate([np.asarray(c, dtype=np.complex128).ravel() for c in curves])
        x_min, x_max = float(points.real.min()), float(points.real.max())
        y_min, y_max = float(points.imag.min()), float(points.imag.max())
        pad = margin * max(x_max - x_min, y_max - y_min, 1e-12)
        return cls((x_min - pad, y_min - pad, x_max + pad, y_max + pad), size)

    def _pixel(self, z: ComplexArray) -> Tuple[np.ndarray, np.ndarray]:
        x_min, _, _, y_max = self.bounds
        col = np.rint((z.real - x_min) * self.scale).astype(np.int64)
        row = np.rint((y_max - z.imag) * self.scale).astype(np.int64)
        return row, col

    def _paint(self, row: np.ndarray, col: np.ndarray, colour: Tuple[int, int, int]) -> None:
        keep = (row >= 0) & (row < self.height) & (col >= 0) & (col < self.width)
        self.pixels[row[keep], col[keep]] = colour

    def polyline(self, points: ComplexArray, colour: Tuple[int, int, int]) -> None:
        points = np.asarray(points, dtype=np.complex128)
        if points.size == 1:
            self._paint(*self._pixel(points), colour)
            return
        for start, stop in zip(points[:-1], points[1:]):
            steps = int(np.ceil(abs(stop - start) * self.scale)) + 1
            self._paint(*self._pixel(np.linspace(start, stop, steps + 1)), colour)

    def marker(self, z: complex, colour: Tuple[int, int, int], radius: int = 4) -> None:
        row, col = self._pixel(np.array([z]))
        offsets = np.arange(-radius, radius + 1)
        self._paint(np.full(offsets.size, row[0]), col[0] + offsets, colour)
        self._paint(row[0] + offsets, np.full(offsets.size, col[0]), colour)


def tangency_overlay(arc: Arc, unstable: Arc, point: complex, size: int = 512) -> np.ndarray:
    """Arc in red, unstable arc in green and the tangency point as a blue cross."""
    canvas = Canvas.around([arc.points, unstable.points, np.array([point])], size)
    canvas.polyline(arc.points, RED)
    canvas.polyline(unstable.points, GREEN)
    canvas.marker(point, BLUE)
    return canvas.pixels


def emit_plot(artifact, path: PathLike, fmt: str, p: Optional[MapParams] = None) -> List[Path]:
    """Writes ``artifact`` in format ``fmt``.

    Regions go to PGM (plus JSON header, which needs ``p``), arcs and trajectories to CSV
    and ``(arc, unstable_arc, point)`` triples to an overlay PPM.

    Raises:
        ParameterError: For an unknown format or an artifact the format cannot hold.
    """
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise ParameterError(f'unknown plot format {fmt!r}; expected one of {", ".join(FORMATS)}')
    if fmt == 'pgm' and isinstance(artifact, Region):
        if p is None:
            raise ParameterError('region export needs the map parameters for its header')
        return list(write_region(path, p, artifact))
    if fmt == 'ppm' and isinstance(artifact, tuple) and len(artifact) == 3:
        arc, unstable, point = artifact
        return [write_ppm(path, tangency_overlay(arc, unstable, complex(point)))]
    if fmt == 'csv':
        if isinstance(artifact, Trajectory):
            return [write_trajectory(path, artifact)]
        if isinstance(artifact, Arc):
            return [write_arcs(path, [artifact])]
        if isinstance(artifact, (list, tuple)) and artifact and all(isinstance(a, Arc) for a in artifact):
            return [write_arcs(path, artifact)]
    raise ParameterError(f'cannot write {type(artifact).__name__} as {fmt}')
