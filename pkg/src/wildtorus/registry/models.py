"""Rows and pydantic models of the run registry."""
from datetime import datetime, timezone
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field
from sqlalchemy import Column, DateTime, Float, Integer, String
from sqlalchemy.orm import declarative_base

Base = declarative_base()

RUN_STATUSES = ('ok', 'violated', 'failed')


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


class RunTable(Base):
    __tablename__ = 'run'

    id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(String(32), nullable=False, index=True)
    lam = Column(Float, nullable=True)
    mu_ratio = Column(Float, nullable=True)
    seed = Column(Integer, nullable=True)
    status = Column(String(16), nullable=False, default='ok')
    violations = Column(Integer, nullable=False, default=0)
    report_path = Column(String(1024), nullable=True)
    version = Column(String(32), nullable=False)
    created_at = Column(DateTime, nullable=False, default=_utc_now)


class Run(BaseModel):
    """One recorded CLI invocation.

    Attributes:
        mu_ratio: μ/σ of the run; ``None`` for commands that only use the planar map.
        report_path: Main JSON report of the run.
    """
    model_config = ConfigDict(from_attributes=True)

    id: int
    command: str
    lam: Optional[float] = None
    mu_ratio: Optional[float] = None
    seed: Optional[int] = None
    status: str
    violations: int
    report_path: Optional[str] = None
    version: str
    created_at: datetime


class RunCreateForm(BaseModel):
    command: str
    lam: Optional[float] = None
    mu_ratio: Optional[float] = None
    seed: Optional[int] = None
    status: str = Field(default='ok', pattern='^(ok|violated|failed)$')
    violations: int = Field(default=0, ge=0)
    report_path: Optional[str] = None
    version: str


class RunUpdateForm(BaseModel):
    status: Optional[str] = Field(default=None, pattern='^(ok|violated|failed)$')
    violations: Optional[int] = Field(default=None, ge=0)
    report_path: Optional[str] = None
