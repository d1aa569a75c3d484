from typing import Generator, List, Tuple


def data_provider_for_polygons() -> Generator[Tuple[List[complex], complex, int], None, None]:
    square = [0j, 1 + 0j, 1 + 1j, 1j]
    yield square, 0.5 + 0.5j, 1
    yield square[::-1], 0.5 + 0.5j, -1
    yield square, 2.0 + 0.5j, 0
    yield square, 0.5 - 0.5j, 0
    triangle = [-2 - 2j, 2 - 2j, 2j]
    yield triangle, 0j, 1
    yield triangle, 3j, 0
