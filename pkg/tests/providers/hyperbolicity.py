from typing import Generator, Tuple

from wildtorus.types import ConeKind


def data_provider_for_cone_membership() -> Generator[Tuple[ConeKind, complex, complex, bool], None, None]:
    yield ConeKind.C_STABLE, 21.0, 1.0, True
    yield ConeKind.C_STABLE, 21.0, 1.0 + 0.1j, True
    yield ConeKind.C_STABLE, 21.0, 1.0 + 0.2j, False
    yield ConeKind.C_STABLE, 21.0, -1.0, False
    yield ConeKind.C_STABLE, 21.0j, 1j, True
    yield ConeKind.K_UNSTABLE, 21.0, 1j, True
    yield ConeKind.K_UNSTABLE, 21.0, 0.3 + 1j, True
    yield ConeKind.K_UNSTABLE, 21.0, -0.3 + 1j, True
    yield ConeKind.K_UNSTABLE, 21.0, 0.34 + 1j, False
    yield ConeKind.K_UNSTABLE, 21.0, -1j, False
    yield ConeKind.K_UNSTABLE, -5.0, -1j, True
    yield ConeKind.K_MINUS, 21.0, -0.3 + 1j, True
    yield ConeKind.K_MINUS, 21.0, 0.3 + 1j, False
    yield ConeKind.K_TILDE, 21.0, 0.9 + 1j, True
    yield ConeKind.K_TILDE, 21.0, 1.1 + 1j, False
