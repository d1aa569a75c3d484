"""Machine-readable verification reports.

Every check returns a subclass of :class:`Report`. Reports serialise to JSON with
sorted keys so that equal inputs produce byte-identical files.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from wildtorus.exceptions import LemmaViolation


def complex_pair(z: complex) -> List[float]:
    return [float(np.real(z)), float(np.imag(z))]


def to_plain(value: Any) -> Any:
    """Converts numpy scalars/arrays and complex numbers into JSON-friendly values."""
    if isinstance(value, BaseModel):
        return to_plain(value.model_dump())
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return complex_pair(complex(value))
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class Provenance(BaseModel):
    model_config = ConfigDict(extra='forbid')

    version: str
    command: Optional[str] = None
    seed: Optional[int] = None
    parameters: Dict[str, Any] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)


class Report(BaseModel):
    """Common fields of every verification report.

    Attributes:
        check: Name of the verified statement.
        violations: Number of failing samples.
        witness: First failing sample, if any.
        notes: Free-form remarks (reconstructed constants, regime warnings).
    """
    model_config = ConfigDict(extra='allow')

    check: str
    violations: int = 0
    witness: Optional[Any] = None
    notes: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def raise_on_violation(self) -> 'Report':
        if not self.passed:
            raise LemmaViolation(self.check, self.witness)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return to_plain(self.model_dump())

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(payload: Any) -> str:
    return json.dumps(to_plain(payload), sort_keys=True, indent=2) + '\n'


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding='utf-8')
    return path


def count_violations(reports: Sequence[Report]) -> int:
    return sum(report.violations for report in reports)
