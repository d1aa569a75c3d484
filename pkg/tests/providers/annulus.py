from typing import Generator, Tuple


def data_provider_for_periodic_windows() -> Generator[Tuple[complex, float], None, None]:
    # radius 0.5 / (1 - lambda) at lambda = 0.95
    yield 15 + 5j, 10.0
    yield 20 - 10j, 10.0
    yield -10 + 10j, 10.0
