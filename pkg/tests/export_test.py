import json

import numpy as np
import pytest

from wildtorus.exceptions import ParameterError
from wildtorus.export import (
    BLUE,
    GREEN,
    RED,
    WHITE,
    Canvas,
    emit_plot,
    read_pnm,
    tangency_overlay,
    write_csv,
    write_pgm,
    write_ppm,
)
from wildtorus.geometry import Arc
from wildtorus.invariant_set import compute_omega


@pytest.fixture(scope="module")
def coarse_region(planar, outer_loop):
    return compute_omega(planar, resolution=32, depth=4, loop=outer_loop)


def _segment(start: complex, stop: complex, count: int = 20) -> Arc:
    points = np.linspace(start, stop, count)
    return Arc(points, np.full(points.shape, stop - start))


def test_write_pgm(tmp_path):
    pixels = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = write_pgm(tmp_path / 'nested' / 'image.pgm', pixels)
    data = path.read_bytes()
    assert data.startswith(b'P5\n4 3\n255\n')
    assert len(data) == len(b'P5\n4 3\n255\n') + 12
    assert np.array_equal(read_pnm(path), pixels)


def test_write_ppm(tmp_path):
    pixels = np.zeros((2, 5, 3), dtype=np.uint8)
    pixels[1, 2] = RED
    path = write_ppm(tmp_path / 'image.ppm', pixels)
    assert path.read_bytes().startswith(b'P6\n5 2\n255\n')
    assert np.array_equal(read_pnm(path), pixels)


@pytest.mark.parametrize("writer, shape", [(write_pgm, (3,)), (write_pgm, (2, 2, 3)), (write_ppm, (4, 4)),
                                           (write_ppm, (4, 4, 4))])
def test_image_shapes(tmp_path, writer, shape):
    with pytest.raises(ParameterError):
        writer(tmp_path / 'bad', np.zeros(shape))


def test_unsupported_image(tmp_path):
    path = tmp_path / 'image.pbm'
    path.write_bytes(b'P4\n1 1\n255\n\x00')
    with pytest.raises(ParameterError):
        read_pnm(path)


def test_write_csv(tmp_path):
    path = write_csv(tmp_path / 'table.csv', ('name', 'flag', 'count', 'value'),
                     [('a', True, 3, 0.5), ('b', np.bool_(False), np.int64(4), np.float64(1.25))])
    assert path.read_text(encoding='utf-8') == 'name,flag,count,value\na,true,3,0.5\nb,false,4,1.25\n'


def test_csv_is_deterministic(tmp_path):
    rows = [(1, 2.5), (3, 4.5)]
    first = write_csv(tmp_path / 'first.csv', ('a', 'b'), rows).read_bytes()
    second = write_csv(tmp_path / 'second.csv', ('a', 'b'), rows).read_bytes()
    assert first == second


def test_canvas():
    canvas = Canvas((0.0, 0.0, 1.0, 1.0), size=11)
    assert canvas.pixels.shape == (11, 11, 3)
    assert np.all(canvas.pixels == WHITE)
    canvas.polyline(np.array([0j, 1 + 0j]), RED)
    assert np.all(canvas.pixels[-1, :] == RED)
    canvas.marker(0.5 + 0.5j, BLUE, radius=1)
    assert tuple(canvas.pixels[5, 5]) == BLUE
    with pytest.raises(ParameterError):
        Canvas((0.0, 0.0, 0.0, 1.0))


def test_tangency_overlay():
    arc = _segment(-1 + 0j, 1 + 0j)
    unstable = _segment(-1j, 1j)
    pixels = tangency_overlay(arc, unstable, 0j, size=64)
    colours = {tuple(c) for c in pixels.reshape(-1, 3)}
    assert {RED, GREEN, BLUE, WHITE} <= colours


def test_emit_arcs(tmp_path):
    arc = _segment(0j, 1 + 1j, count=5)
    [path] = emit_plot(arc, tmp_path / 'arc.csv', 'CSV')
    lines = path.read_text(encoding='utf-8').splitlines()
    assert lines[0] == 're,im,tan_re,tan_im'
    assert len(lines) == 6
    [both] = emit_plot([arc, arc], tmp_path / 'arcs.csv', 'csv')
    assert len(both.read_text(encoding='utf-8').splitlines()) == 11


def test_emit_overlay(tmp_path):
    artifact = (_segment(-1 + 0j, 1 + 0j), _segment(-1j, 1j), 0j)
    [path] = emit_plot(artifact, tmp_path / 'overlay.ppm', 'ppm')
    assert read_pnm(path).ndim == 3


def test_emit_region(tmp_path, planar, coarse_region):
    image, header = emit_plot(coarse_region, tmp_path / 'omega', 'pgm', planar)
    assert image.suffix == '.pgm'
    assert read_pnm(image).shape == (32, 32)
    assert json.loads(header.read_text(encoding='utf-8'))['resolution'] == 32


def test_emit_errors(tmp_path, coarse_region):
    with pytest.raises(ParameterError):
        emit_plot(_segment(0j, 1 + 0j), tmp_path / 'arc.svg', 'svg')
    with pytest.raises(ParameterError):
        emit_plot(coarse_region, tmp_path / 'omega', 'pgm')
    with pytest.raises(ParameterError):
        emit_plot(coarse_region, tmp_path / 'omega.csv', 'csv')
    with pytest.raises(ParameterError):
        emit_plot([], tmp_path / 'empty.csv', 'csv')
