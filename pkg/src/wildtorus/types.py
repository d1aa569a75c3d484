import enum
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
import numpy.typing as npt

ComplexArray = npt.NDArray[np.complex128]
RealArray = npt.NDArray[np.float64]
ComplexLike = Union[complex, float, ComplexArray]


class ConeKind(str, enum.Enum):
    C_STABLE = 'C_stable'
    K_UNSTABLE = 'K_unstable'
    K_MINUS = 'K_minus'
    K_TILDE = 'K_tilde'
    C_HAT = 'C_hat'
    K_HAT = 'K_hat'


class ArcKind(str, enum.Enum):
    QUASI_RADIAL = 'quasi_radial'
    QUASI_ANGULAR = 'quasi_angular'
    NEITHER = 'neither'


class CellStatus(enum.IntEnum):
    """Cell labels; the integer value is the PGM byte written for the cell."""
    CERTIFIED_OUT = 0
    BOUNDARY = 128
    UNKNOWN = 129
    CERTIFIED_IN = 255


class FixedPointKind(str, enum.Enum):
    SADDLE = 'saddle'
    SOURCE = 'source'
    SINK = 'sink'


class RegionTag(str, enum.Enum):
    IN_H = 'in_H'
    IN_A_F = 'in_A_F'
    ANY = 'any'


@dataclass(frozen=True)
class CylinderPoint:
    """Point ``(θ, t)`` of ``ℝ/ℤ × (0, ∞)``; θ is measured in turns."""
    theta: float
    t: float

    def __post_init__(self) -> None:
        object.__setattr__(self, 'theta', float(self.theta) % 1.0)


@dataclass(frozen=True)
class SkewPoint:
    """Point ``(z, w, v)`` of the skew product; ``v`` is empty in dimension five."""
    z: complex
    w: complex = 0j
    v: Tuple[float, ...] = field(default_factory=tuple)

    def as_vector(self) -> np.ndarray:
        return np.array([self.z.real, self.z.imag, self.w.real, self.w.imag, *self.v], dtype=float)

    @classmethod
    def from_vector(cls, x: npt.ArrayLike) -> 'SkewPoint':
        x = np.asarray(x, dtype=float)
        return cls(complex(x[0], x[1]), complex(x[2], x[3]), tuple(float(item) for item in x[4:]))

    def in_domain(self, radius: float) -> bool:
        """Whether ``|z| ≤ radius`` and ``|w| ≤ 1`` (and ``‖v‖ ≤ 1``)."""
        v_norm = float(np.linalg.norm(self.v)) if self.v else 0.0
        return abs(self.z) <= radius and abs(self.w) <= 1.0 and v_norm <= 1.0

    def distance(self, other: 'SkewPoint') -> float:
        return float(np.linalg.norm(self.as_vector() - other.as_vector()))
